#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pkg/errors.hpp"

namespace pkg::retrieval {

struct Passage {
    std::string doc_id;
    std::string text;
};

struct Posting {
    std::string doc_id;
    std::uint64_t term_frequency = 0;

    bool operator==(const Posting&) const = default;
};

struct InvertedIndex {
    std::map<std::string, std::vector<Posting>> postings; // posting lists sorted by doc_id
    std::map<std::string, std::uint64_t> doc_lengths;
    double avg_doc_length = 0.0;
    std::uint64_t doc_count = 0;
};

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct ScoredPassage {
    std::string doc_id;
    double score = 0.0;
};

// Lowercase, split on any non-alphanumeric byte, drop empties. No stemming,
// no stopwords.
std::vector<std::string> tokenize(const std::string& text);

std::vector<Passage> load_passages(const std::filesystem::path& path);

InvertedIndex build_index(const std::vector<Passage>& passages);

// Okapi BM25 with IDF = ln(1 + (N - df + 0.5)/(df + 0.5)), clamped at 0.
double score(const InvertedIndex& index, const Bm25Params& params,
             const std::vector<std::string>& query_terms, const std::string& doc_id);

// Top-k by score, ties broken by ascending doc_id; zero-score docs excluded.
std::vector<ScoredPassage> search(const InvertedIndex& index, const Bm25Params& params,
                                  const std::string& query, std::size_t k);
std::vector<ScoredPassage> search_terms(const InvertedIndex& index, const Bm25Params& params,
                                        const std::vector<std::string>& query_terms,
                                        std::size_t k);

// Binary persistence: magic "PKGI", one version byte, then length-prefixed
// little-endian fields.
void save_index(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex load_index(const std::filesystem::path& path);

} // namespace pkg::retrieval
