#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pkg/corpus.hpp"
#include "pkg/errors.hpp"

namespace pkg::guide {
struct Prediction;
}

namespace pkg::eval {

struct CategoryCount {
    std::size_t correct = 0;
    std::size_t total = 0;

    double fraction() const { return total ? static_cast<double>(correct) / total : 0.0; }
    bool operator==(const CategoryCount&) const = default;
};

struct MetricReport {
    corpus::TaskKind task_kind = corpus::TaskKind::FactCheck;
    std::string strategy;
    double overall = 0.0;
    std::size_t n_records = 0;
    std::size_t n_correct = 0;
    std::size_t n_unparsed = 0;
    std::map<std::string, CategoryCount> per_category;
};

struct ScoringOptions {
    bool allow_partial = false; // absent predictions score as incorrect
    bool strict_em = false;     // exact match without normalization
};

// Lowercase, strip, drop the articles a/an/the, drop punctuation, collapse
// whitespace.
std::string normalize_answer(const std::string& text);

// The "<unparsed>" sentinel never matches.
bool exact_match(const std::string& pred, const std::string& gold, bool strict = false);

MetricReport accuracy(const std::vector<guide::Prediction>& predictions,
                      const corpus::DatasetSplit& split, const ScoringOptions& options = {});

// ScienceQA breakdown: NAT/SOC/LAN from the "subject" tag, TXT/IMG/NO from
// the context-modality tags, G1-6/G7-12 from "grade", plus Avg = overall.
MetricReport sciqa_breakdown(const std::vector<guide::Prediction>& predictions,
                             const corpus::DatasetSplit& split, const ScoringOptions& options = {});

enum class ReportFormat { Json, Csv, Markdown };

void emit_report(const MetricReport& report, ReportFormat format,
                 const std::filesystem::path& path);
std::string render_report(const MetricReport& report, ReportFormat format);

MetricReport load_report_json(const std::filesystem::path& path);

// Merges per-strategy reports into one markdown comparison table (strategy
// rows by task or ScienceQA-category columns).
std::string render_comparison(const std::vector<MetricReport>& reports);

} // namespace pkg::eval
