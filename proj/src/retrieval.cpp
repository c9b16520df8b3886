#include "pkg/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

namespace pkg::retrieval {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> terms;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            terms.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

std::vector<Passage> load_passages(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());
    std::vector<Passage> passages;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IndexIoError("passage file line " + std::to_string(line_no) +
                               " is not valid JSON: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("doc_id") || !obj.contains("text") ||
            !obj.at("doc_id").is_string() || !obj.at("text").is_string())
            throw IndexIoError("passage file line " + std::to_string(line_no) +
                               " needs string fields doc_id and text");
        Passage p{obj.at("doc_id").get<std::string>(), obj.at("text").get<std::string>()};
        if (p.text.empty())
            throw IndexIoError("passage " + p.doc_id + " has empty text (line " +
                               std::to_string(line_no) + ")");
        passages.push_back(std::move(p));
    }
    return passages;
}

InvertedIndex build_index(const std::vector<Passage>& passages) {
    InvertedIndex index;
    std::set<std::string> seen;
    for (const Passage& p : passages) {
        if (!seen.insert(p.doc_id).second) throw DuplicateDocId(p.doc_id);
        std::vector<std::string> terms = tokenize(p.text);
        index.doc_lengths[p.doc_id] = terms.size();

        std::unordered_map<std::string, std::uint64_t> tf;
        for (const auto& t : terms) ++tf[t];
        for (const auto& [term, count] : tf) index.postings[term].push_back({p.doc_id, count});
    }
    for (auto& [term, list] : index.postings)
        std::sort(list.begin(), list.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });

    index.doc_count = index.doc_lengths.size();
    std::uint64_t total = 0;
    for (const auto& [_, len] : index.doc_lengths) total += len;
    index.avg_doc_length = index.doc_count ? static_cast<double>(total) / index.doc_count : 0.0;
    return index;
}

namespace {

const Posting* find_posting(const std::vector<Posting>& list, const std::string& doc_id) {
    auto it = std::lower_bound(list.begin(), list.end(), doc_id,
                               [](const Posting& p, const std::string& id) { return p.doc_id < id; });
    if (it == list.end() || it->doc_id != doc_id) return nullptr;
    return &*it;
}

double idf(const InvertedIndex& index, const std::string& term) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) return 0.0;
    double df = static_cast<double>(it->second.size());
    double n = static_cast<double>(index.doc_count);
    double v = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    return v > 0.0 ? v : 0.0;
}

} // namespace

double score(const InvertedIndex& index, const Bm25Params& params,
             const std::vector<std::string>& query_terms, const std::string& doc_id) {
    auto len_it = index.doc_lengths.find(doc_id);
    if (len_it == index.doc_lengths.end()) throw UnknownDoc(doc_id);
    double len = static_cast<double>(len_it->second);

    double total = 0.0;
    for (const std::string& term : query_terms) {
        auto post_it = index.postings.find(term);
        if (post_it == index.postings.end()) continue;
        const Posting* p = find_posting(post_it->second, doc_id);
        if (!p) continue;
        double tf = static_cast<double>(p->term_frequency);
        double norm = params.k1 * (1.0 - params.b + params.b * len / index.avg_doc_length);
        total += idf(index, term) * tf * (params.k1 + 1.0) / (tf + norm);
    }
    return total;
}

std::vector<ScoredPassage> search_terms(const InvertedIndex& index, const Bm25Params& params,
                                        const std::vector<std::string>& query_terms,
                                        std::size_t k) {
    // Candidates are docs containing at least one query term; each is scored
    // with the same per-document routine the oracle uses.
    std::set<std::string> candidates;
    for (const std::string& term : query_terms) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        for (const Posting& p : it->second) candidates.insert(p.doc_id);
    }

    std::vector<ScoredPassage> scored;
    scored.reserve(candidates.size());
    for (const std::string& doc_id : candidates) {
        double s = score(index, params, query_terms, doc_id);
        if (s > 0.0) scored.push_back({doc_id, s});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredPassage& a, const ScoredPassage& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

std::vector<ScoredPassage> search(const InvertedIndex& index, const Bm25Params& params,
                                  const std::string& query, std::size_t k) {
    return search_terms(index, params, tokenize(query), k);
}

namespace {

constexpr char kMagic[4] = {'P', 'K', 'G', 'I'};
constexpr std::uint8_t kVersion = 1;

void write_u64(std::ofstream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>(v >> (8 * i));
    out.write(bytes, 8);
}

void write_f64(std::ofstream& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    write_u64(out, bits);
}

void write_string(std::ofstream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t read_u64(std::ifstream& in) {
    char bytes[8];
    in.read(bytes, 8);
    if (!in) throw IndexIoError("index file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return v;
}

double read_f64(std::ifstream& in) {
    std::uint64_t bits = read_u64(in);
    double v = 0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string read_string(std::ifstream& in) {
    std::uint64_t len = read_u64(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw IndexIoError("index file truncated");
    return s;
}

} // namespace

void save_index(const InvertedIndex& index, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IndexIoError("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));

    write_u64(out, index.doc_count);
    write_f64(out, index.avg_doc_length);
    write_u64(out, index.doc_lengths.size());
    for (const auto& [doc_id, len] : index.doc_lengths) {
        write_string(out, doc_id);
        write_u64(out, len);
    }
    write_u64(out, index.postings.size());
    for (const auto& [term, list] : index.postings) {
        write_string(out, term);
        write_u64(out, list.size());
        for (const Posting& p : list) {
            write_string(out, p.doc_id);
            write_u64(out, p.term_frequency);
        }
    }
    if (!out) throw IndexIoError("failed writing " + path.string());
}

InvertedIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IndexIoError("not an index file (bad magic): " + path.string());
    int version = in.get();
    if (version != kVersion)
        throw IndexIoError("unsupported index version " + std::to_string(version));

    InvertedIndex index;
    index.doc_count = read_u64(in);
    index.avg_doc_length = read_f64(in);
    std::uint64_t n_docs = read_u64(in);
    for (std::uint64_t i = 0; i < n_docs; ++i) {
        std::string doc_id = read_string(in);
        index.doc_lengths[doc_id] = read_u64(in);
    }
    std::uint64_t n_terms = read_u64(in);
    for (std::uint64_t i = 0; i < n_terms; ++i) {
        std::string term = read_string(in);
        std::uint64_t n_postings = read_u64(in);
        std::vector<Posting> list;
        list.reserve(n_postings);
        for (std::uint64_t j = 0; j < n_postings; ++j) {
            Posting p;
            p.doc_id = read_string(in);
            p.term_frequency = read_u64(in);
            list.push_back(std::move(p));
        }
        index.postings[term] = std::move(list);
    }
    return index;
}

} // namespace pkg::retrieval
