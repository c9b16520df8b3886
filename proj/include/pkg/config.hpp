#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "pkg/backend.hpp"
#include "pkg/corpus.hpp"
#include "pkg/errors.hpp"
#include "pkg/guide.hpp"
#include "pkg/retrieval.hpp"

namespace pkg::cli {

struct BackendConfig {
    backend::BackendDescriptor descriptor;
    // When set, a scripted offline stub is used instead of HTTP.
    std::optional<std::filesystem::path> stub_script;
};

struct PipelineConfig {
    corpus::TaskKind task_kind = corpus::TaskKind::FactCheck;
    std::map<corpus::SplitName, std::filesystem::path> datasets;
    std::optional<std::filesystem::path> passages;
    guide::Strategy strategy = guide::Strategy::Direct;
    std::optional<BackendConfig> pkg_backend;
    std::optional<BackendConfig> llm_backend;
    std::optional<std::filesystem::path> template_overrides;
    retrieval::Bm25Params bm25;
    std::size_t top_n = 1;
    std::optional<std::filesystem::path> index_path;
    std::size_t max_in_flight = 1;
    std::optional<std::filesystem::path> cache_path;
    std::filesystem::path output_dir = "out";
    corpus::SplitName run_split = corpus::SplitName::Test;
    guide::GenerationOptions generation;
    long failure_budget = -1; // negative disables the budget
    std::optional<corpus::TrainingManifest> training;

    static PipelineConfig load(const std::filesystem::path& path);

    std::filesystem::path resolved_index_path() const;
    const std::filesystem::path& dataset_for(corpus::SplitName split) const;

    // Full validation happens before any side effect.
    void validate_for_prepare() const;
    void validate_for_index() const;
    void validate_for_run() const;
    void validate_for_eval() const;
};

} // namespace pkg::cli
