#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pkg/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Parametric knowledge guiding pipeline: prepare alignment data, build a BM25 "
                 "index, run guided generation, and score the results."};
    app.require_subcommand(1);

    std::string config_path;
    pkg::cli::CliFlags flags;
    std::string output;
    std::size_t max_in_flight = 0;
    std::string templates;

    app.add_option("--config", config_path, "pipeline config JSON")->required();
    app.add_option("--output", output, "override the configured output directory");
    app.add_option("--max-in-flight", max_in_flight, "override parallel request cap");
    app.add_option("--templates", templates, "template override JSON");
    app.add_flag("--allow-partial", flags.allow_partial,
                 "score with absent predictions counted incorrect");
    app.add_flag("--strict-em", flags.strict_em, "exact match without answer normalization");

    app.add_subcommand("prepare", "build and export instruction-tuning triples")->fallthrough();
    app.add_subcommand("index", "build and persist the BM25 passage index")->fallthrough();
    app.add_subcommand("run", "run the guided pipeline over the configured split")->fallthrough();

    std::vector<std::string> eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score a predictions file")->fallthrough();
    eval_cmd->add_option("predictions", eval_args, "predictions.jsonl (defaults to latest run)");

    std::vector<std::string> report_args;
    auto* report_cmd =
        app.add_subcommand("report", "merge report.json files into one table")->fallthrough();
    report_cmd->add_option("reports", report_args, "report.json files to merge");

    CLI11_PARSE(app, argc, argv);

    if (!output.empty()) flags.output = output;
    if (max_in_flight > 0) flags.max_in_flight = max_in_flight;
    if (!templates.empty()) flags.templates = templates;

    const std::string command = app.get_subcommands().front()->get_name();
    const std::vector<std::string>& args = command == "eval" ? eval_args : report_args;
    return pkg::cli::run_command(command, config_path, flags, args, std::cout, std::cerr);
}
