#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pkg/backend.hpp"
#include "pkg/corpus.hpp"
#include "pkg/errors.hpp"
#include "pkg/retrieval.hpp"
#include "pkg/templates.hpp"

namespace pkg::guide {

enum class Strategy { Direct, Pkg, CoT, GenRead, Retrieval };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

// Passage lookup the Retrieval strategy draws its backgrounds from.
struct RetrievalSource {
    retrieval::InvertedIndex index;
    std::map<std::string, std::string> texts; // doc_id -> passage text
    retrieval::Bm25Params params;
    std::size_t top_n = 1;

    static RetrievalSource from_passages(const std::vector<retrieval::Passage>& passages,
                                         retrieval::Bm25Params params = {}, std::size_t top_n = 1);
};

struct GuidingStrategy {
    Strategy kind = Strategy::Direct;
    std::shared_ptr<const RetrievalSource> retrieval; // required for Retrieval

    static GuidingStrategy direct() { return {Strategy::Direct, nullptr}; }
    static GuidingStrategy pkg() { return {Strategy::Pkg, nullptr}; }
    static GuidingStrategy cot() { return {Strategy::CoT, nullptr}; }
    static GuidingStrategy gen_read() { return {Strategy::GenRead, nullptr}; }
    static GuidingStrategy with_retrieval(std::shared_ptr<const RetrievalSource> source) {
        return {Strategy::Retrieval, std::move(source)};
    }
};

struct Backends {
    std::shared_ptr<backend::Backend> pkg; // required for the Pkg strategy
    std::shared_ptr<backend::Backend> llm; // always required
};

struct GenerationOptions {
    int background_max_tokens = 256;
    int answer_max_tokens = 64;
    double temperature = 0.0;
};

struct Background {
    std::string text;
    Strategy source = Strategy::Direct;
    std::string generator_model; // model name, "index" for retrieval, "" for Direct
};

inline constexpr const char* kUnparsed = "<unparsed>";

struct GuidedAnswer {
    std::string record_id;
    Background background;
    std::string raw_llm_text;
    std::string extracted;
    std::optional<bool> correct; // set only by scoring
};

struct RecordFailure {
    std::string record_id;
    std::string error;
};

struct RunManifest {
    std::string strategy;
    std::string pkg_model;
    std::string llm_model;
    std::string template_hash;
    std::string started_at;
    std::string finished_at;
    std::size_t record_count = 0;
    std::size_t cache_hits = 0;
    std::vector<RecordFailure> failures;
};

// Predictions-file row (one JSON object per line).
struct Prediction {
    std::string record_id;
    std::string strategy;
    std::string background_text;
    std::string raw_llm_text;
    std::string extracted;
};

Background generate_background(const GuidingStrategy& strategy, const corpus::TaskRecord& record,
                               const Backends& backends, const templates::TemplateSet& templates,
                               const GenerationOptions& options = {});

GuidedAnswer answer(const corpus::TaskRecord& record, const Background& background,
                    const Backends& backends, const templates::TemplateSet& templates,
                    const GenerationOptions& options = {});

// Deterministic extraction cascade: option letter, true/false for
// fact-checking, verbatim option text, first line for TableQA, then the
// "<unparsed>" sentinel.
std::string extract_answer(corpus::TaskKind task_kind, const std::string& raw_text,
                           const std::vector<std::string>& options);

struct PipelineResult {
    std::vector<GuidedAnswer> answers;
    RunManifest manifest;
};

PipelineResult run_pipeline(const corpus::DatasetSplit& split, const GuidingStrategy& strategy,
                            const Backends& backends, const templates::TemplateSet& templates,
                            std::size_t max_in_flight, const GenerationOptions& options = {});

std::vector<Prediction> to_predictions(const std::vector<GuidedAnswer>& answers,
                                       Strategy strategy);
void write_predictions(const std::vector<Prediction>& predictions,
                       const std::filesystem::path& path);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

} // namespace pkg::guide
