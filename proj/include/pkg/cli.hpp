#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pkg/config.hpp"
#include "pkg/eval.hpp"

namespace pkg::cli {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitBackendBudget = 3;
inline constexpr int kExitScoringError = 4;

struct CliFlags {
    std::optional<std::filesystem::path> output;
    std::optional<std::size_t> max_in_flight;
    std::optional<std::filesystem::path> templates;
    bool allow_partial = false;
    bool strict_em = false;
};

void apply_flags(PipelineConfig& config, const CliFlags& flags);

int cmd_prepare(const PipelineConfig& config, std::ostream& out);
int cmd_index(const PipelineConfig& config, std::ostream& out);
int cmd_run(const PipelineConfig& config, std::ostream& out);
int cmd_eval(const PipelineConfig& config, std::optional<std::filesystem::path> predictions,
             const eval::ScoringOptions& scoring, std::ostream& out);
int cmd_report(const PipelineConfig& config, const std::vector<std::filesystem::path>& reports,
               std::ostream& out);

// Loads the config, applies flag overrides, dispatches, and maps errors to
// exit codes.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const CliFlags& flags, const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

// Newest run directory for a strategy under output_dir, if any.
std::optional<std::filesystem::path> latest_run_dir(const std::filesystem::path& output_dir,
                                                    const std::string& strategy);

} // namespace pkg::cli
