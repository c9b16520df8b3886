#include "pkg/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "pkg/templates.hpp"

namespace pkg::cli {

using nlohmann::json;

namespace {

templates::TemplateSet load_templates(const PipelineConfig& config) {
    if (!config.template_overrides) return templates::TemplateSet();
    try {
        return templates::TemplateSet::with_overrides(*config.template_overrides);
    } catch (const Error& e) {
        throw ConfigError(std::string("template overrides: ") + e.what());
    }
}

std::shared_ptr<backend::StubBackend> load_stub(const std::filesystem::path& path,
                                                backend::Role role) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open stub script " + path.string());
    json obj;
    try {
        in >> obj;
    } catch (const json::exception& e) {
        throw ConfigError("stub script " + path.string() + " is not valid JSON: " + e.what());
    }
    auto stub = std::make_shared<backend::StubBackend>(role, obj.value("default", std::string()));
    if (obj.contains("responses"))
        for (const auto& [prompt, text] : obj.at("responses").items())
            stub->script(prompt, text.get<std::string>());
    if (obj.contains("responses_by_digest"))
        for (const auto& [hex, text] : obj.at("responses_by_digest").items()) {
            if (hex.size() != 64)
                throw ConfigError("stub digest keys must be 64 hex chars: " + hex);
            digest::Sha256 d{};
            for (std::size_t i = 0; i < 32; ++i)
                d[i] = static_cast<std::uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
            stub->script_digest(d, text.get<std::string>());
        }
    return stub;
}

std::shared_ptr<backend::Backend> make_backend(const BackendConfig& cfg,
                                               const std::shared_ptr<backend::ResponseCache>& cache) {
    std::shared_ptr<backend::Backend> inner;
    if (cfg.stub_script) {
        auto stub = load_stub(*cfg.stub_script, cfg.descriptor.role);
        inner = stub;
    } else {
        inner = std::make_shared<backend::HttpBackend>(cfg.descriptor);
    }
    if (cache) return std::make_shared<backend::CachedBackend>(inner, cache);
    return inner;
}

std::string timestamp_for_dir() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
    return buf;
}

std::filesystem::path fresh_run_dir(const std::filesystem::path& output_dir,
                                    const std::string& strategy) {
    const std::string base = strategy + "-" + timestamp_for_dir();
    std::filesystem::path dir = output_dir / base;
    for (int i = 1; std::filesystem::exists(dir); ++i)
        dir = output_dir / (base + "-" + std::to_string(i));
    return dir;
}

void update_latest_link(const std::filesystem::path& output_dir,
                        const std::filesystem::path& run_dir) {
    const std::filesystem::path link = output_dir / "latest";
    std::error_code ec;
    std::filesystem::remove(link, ec);
    std::filesystem::create_directory_symlink(run_dir.filename(), link, ec);
    // A filesystem without symlink support just loses the convenience link.
}

std::string preview(const std::string& text, std::size_t limit = 80) {
    std::string flat;
    for (char c : text) flat += c == '\n' ? ' ' : c;
    if (flat.size() <= limit) return flat;
    return flat.substr(0, limit) + "...";
}

} // namespace

void apply_flags(PipelineConfig& config, const CliFlags& flags) {
    if (flags.output) config.output_dir = *flags.output;
    if (flags.max_in_flight) {
        if (*flags.max_in_flight < 1) throw ConfigError("--max-in-flight must be >= 1");
        config.max_in_flight = *flags.max_in_flight;
    }
    if (flags.templates) config.template_overrides = *flags.templates;
}

std::optional<std::filesystem::path> latest_run_dir(const std::filesystem::path& output_dir,
                                                    const std::string& strategy) {
    if (!std::filesystem::is_directory(output_dir)) return std::nullopt;
    const std::string prefix = strategy + "-";
    std::optional<std::filesystem::path> best;
    for (const auto& entry : std::filesystem::directory_iterator(output_dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind(prefix, 0) != 0) continue;
        if (!std::filesystem::exists(entry.path() / "predictions.jsonl")) continue;
        if (!best || best->filename().string() < name) best = entry.path();
    }
    return best;
}

int cmd_prepare(const PipelineConfig& config, std::ostream& out) {
    config.validate_for_prepare();
    const templates::TemplateSet tmpl = load_templates(config);

    std::vector<corpus::KnowledgeTriple> triples;
    if (config.datasets.count(corpus::SplitName::Train)) {
        const auto split = corpus::load_dataset(config.dataset_for(corpus::SplitName::Train),
                                                config.task_kind, corpus::SplitName::Train);
        triples = corpus::build_triples(split, tmpl);
    }
    if (config.passages) {
        std::vector<std::string> texts;
        for (const auto& p : retrieval::load_passages(*config.passages)) texts.push_back(p.text);
        const auto derived = corpus::derive_passage_triples(texts);
        triples.insert(triples.end(), derived.triples.begin(), derived.triples.end());
        out << "passages: " << derived.triples.size() << " triples, " << derived.dropped
            << " dropped (fewer than 2 sentences)\n";
    }

    std::filesystem::create_directories(config.output_dir);
    const std::filesystem::path path = config.output_dir / "training.json";
    const corpus::TrainingManifest manifest =
        config.training ? *config.training : corpus::default_manifest(config.task_kind);
    corpus::export_training_file(triples, path, manifest);

    out << "exported " << triples.size() << " triples to " << path.string() << "\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, triples.size()); ++i) {
        out << "  [" << i + 1 << "] instruction: " << preview(triples[i].instruction) << "\n"
            << "      input:       " << preview(triples[i].input) << "\n"
            << "      output:      " << preview(triples[i].output) << "\n";
    }
    return kExitOk;
}

int cmd_index(const PipelineConfig& config, std::ostream& out) {
    config.validate_for_index();
    const auto passages = retrieval::load_passages(*config.passages);
    const auto index = retrieval::build_index(passages);

    const std::filesystem::path path = config.resolved_index_path();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    retrieval::save_index(index, path);

    out << "indexed " << index.doc_count << " passages, avg_doc_length " << index.avg_doc_length
        << ", saved to " << path.string() << "\n";
    return kExitOk;
}

int cmd_run(const PipelineConfig& config, std::ostream& out) {
    config.validate_for_run();
    const templates::TemplateSet tmpl = load_templates(config);
    const corpus::DatasetSplit split =
        corpus::load_dataset(config.dataset_for(config.run_split), config.task_kind,
                             config.run_split);

    std::shared_ptr<backend::ResponseCache> cache;
    if (config.cache_path) {
        if (config.cache_path->has_parent_path())
            std::filesystem::create_directories(config.cache_path->parent_path());
        cache = std::make_shared<backend::ResponseCache>(*config.cache_path);
    }

    guide::Backends backends;
    backends.llm = make_backend(*config.llm_backend, cache);
    if (config.pkg_backend) backends.pkg = make_backend(*config.pkg_backend, cache);

    guide::GuidingStrategy strategy;
    strategy.kind = config.strategy;
    if (config.strategy == guide::Strategy::Retrieval) {
        auto source = std::make_shared<guide::RetrievalSource>();
        source->index = retrieval::load_index(config.resolved_index_path());
        for (const auto& p : retrieval::load_passages(*config.passages))
            source->texts[p.doc_id] = p.text;
        source->params = config.bm25;
        source->top_n = config.top_n;
        for (const auto& [doc_id, _] : source->index.doc_lengths)
            if (source->texts.count(doc_id) == 0)
                throw ConfigError("indexed doc " + doc_id + " is missing from the passages file");
        strategy.retrieval = source;
    }

    // Resume: rows already present in the newest predictions file for this
    // strategy are carried over instead of re-queried.
    std::unordered_map<std::string, guide::Prediction> done;
    if (auto previous = latest_run_dir(config.output_dir, guide::to_string(config.strategy))) {
        for (auto& row : guide::load_predictions(*previous / "predictions.jsonl"))
            done.emplace(row.record_id, std::move(row));
    }
    corpus::DatasetSplit todo;
    todo.task_kind = split.task_kind;
    todo.split_name = split.split_name;
    for (const auto& rec : split.records)
        if (!done.count(rec.id)) todo.records.push_back(rec);

    guide::PipelineResult result =
        guide::run_pipeline(todo, strategy, backends, tmpl, config.max_in_flight,
                            config.generation);
    result.manifest.record_count = split.records.size();

    std::unordered_map<std::string, guide::Prediction> fresh;
    for (auto& row : guide::to_predictions(result.answers, config.strategy))
        fresh.emplace(row.record_id, std::move(row));

    std::vector<guide::Prediction> merged;
    merged.reserve(split.records.size());
    for (const auto& rec : split.records) {
        auto it = done.find(rec.id);
        merged.push_back(it != done.end() ? it->second : fresh.at(rec.id));
    }

    const std::filesystem::path run_dir =
        fresh_run_dir(config.output_dir, guide::to_string(config.strategy));
    std::filesystem::create_directories(run_dir);
    guide::write_predictions(merged, run_dir / "predictions.jsonl");
    guide::write_manifest(result.manifest, run_dir / "manifest.json");
    update_latest_link(config.output_dir, run_dir);

    out << "ran " << guide::to_string(config.strategy) << " on " << split.records.size()
        << " records (" << done.size() << " resumed, " << result.manifest.failures.size()
        << " failures, " << result.manifest.cache_hits << " cache hits)\n"
        << "predictions: " << (run_dir / "predictions.jsonl").string() << "\n";

    if (config.failure_budget >= 0 &&
        static_cast<long>(result.manifest.failures.size()) > config.failure_budget) {
        out << "backend failure budget exceeded: " << result.manifest.failures.size() << " > "
            << config.failure_budget << "\n";
        return kExitBackendBudget;
    }
    return kExitOk;
}

int cmd_eval(const PipelineConfig& config, std::optional<std::filesystem::path> predictions,
             const eval::ScoringOptions& scoring, std::ostream& out) {
    config.validate_for_eval();
    if (!predictions) {
        auto latest = latest_run_dir(config.output_dir, guide::to_string(config.strategy));
        if (!latest)
            throw ConfigError("no predictions file given and no previous run found under " +
                              config.output_dir.string());
        predictions = *latest / "predictions.jsonl";
    }
    if (!std::filesystem::exists(*predictions))
        throw ConfigError("predictions file does not exist: " + predictions->string());

    const corpus::DatasetSplit split =
        corpus::load_dataset(config.dataset_for(config.run_split), config.task_kind,
                             config.run_split);
    const std::vector<guide::Prediction> rows = guide::load_predictions(*predictions);

    const eval::MetricReport report = config.task_kind == corpus::TaskKind::ScienceMCQ
                                          ? eval::sciqa_breakdown(rows, split, scoring)
                                          : eval::accuracy(rows, split, scoring);

    const std::filesystem::path dir = predictions->parent_path();
    eval::emit_report(report, eval::ReportFormat::Json, dir / "report.json");
    eval::emit_report(report, eval::ReportFormat::Csv, dir / "report.csv");
    eval::emit_report(report, eval::ReportFormat::Markdown, dir / "report.md");

    out << "overall " << report.n_correct << "/" << report.n_records << " = " << report.overall
        << " (" << report.n_unparsed << " unparsed)\n"
        << "reports: " << (dir / "report.{json,csv,md}").string() << "\n";
    return kExitOk;
}

int cmd_report(const PipelineConfig& config, const std::vector<std::filesystem::path>& reports,
               std::ostream& out) {
    if (reports.empty()) throw ConfigError("report needs at least one report.json path");
    std::vector<eval::MetricReport> loaded;
    for (const auto& path : reports) {
        if (!std::filesystem::exists(path))
            throw ConfigError("report file does not exist: " + path.string());
        loaded.push_back(eval::load_report_json(path));
    }
    const std::string table = eval::render_comparison(loaded);

    std::filesystem::create_directories(config.output_dir);
    const std::filesystem::path path = config.output_dir / "comparison.md";
    std::ofstream file(path);
    if (!file) throw IoFailure("cannot open " + path.string() + " for writing");
    file << table;
    file.close();

    out << table;
    out << "written to " << path.string() << "\n";
    return kExitOk;
}

int run_command(const std::string& command, const std::filesystem::path& config_path,
                const CliFlags& flags, const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
    try {
        PipelineConfig config = PipelineConfig::load(config_path);
        apply_flags(config, flags);

        if (command == "prepare") return cmd_prepare(config, out);
        if (command == "index") return cmd_index(config, out);
        if (command == "run") return cmd_run(config, out);
        if (command == "eval") {
            std::optional<std::filesystem::path> predictions;
            if (!args.empty()) predictions = args.front();
            eval::ScoringOptions scoring;
            scoring.allow_partial = flags.allow_partial;
            scoring.strict_em = flags.strict_em;
            return cmd_eval(config, predictions, scoring, out);
        }
        if (command == "report") {
            std::vector<std::filesystem::path> paths(args.begin(), args.end());
            return cmd_report(config, paths, out);
        }
        throw ConfigError("unknown command: " + command);
    } catch (const ConfigError& e) {
        err << e.what() << "\n";
        return kExitConfigError;
    } catch (const eval::ScoringError& e) {
        err << e.what() << "\n";
        return kExitScoringError;
    } catch (const Error& e) {
        err << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << e.what() << "\n";
        return 1;
    }
}

} // namespace pkg::cli
