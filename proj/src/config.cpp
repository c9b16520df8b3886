#include "pkg/config.hpp"

#include <fstream>

#include <json.hpp>

namespace pkg::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& why) {
    throw ConfigError("config error: " + why);
}

void require_exists(const std::filesystem::path& path, const std::string& what) {
    if (!std::filesystem::exists(path)) bad(what + " does not exist: " + path.string());
}

const char* const kTopLevelKeys[] = {
    "task_kind", "datasets",   "passages",     "strategy",     "backends",
    "templates", "bm25",       "index_path",   "max_in_flight", "cache_path",
    "output_dir", "run_split", "generation",   "failure_budget", "training_manifest"};

BackendConfig parse_backend(const json& obj, backend::Role role, const std::string& name) {
    if (!obj.is_object()) bad("backends." + name + " must be an object");
    BackendConfig cfg;
    cfg.descriptor.role = role;
    cfg.descriptor.endpoint_url = obj.value("endpoint_url", std::string("stub://local"));
    cfg.descriptor.model_name = obj.value("model_name", std::string());
    cfg.descriptor.timeout = backend::Duration(obj.value("timeout_ms", std::int64_t(30000)));
    cfg.descriptor.max_retries = obj.value("max_retries", 3);
    cfg.descriptor.rate_limit = obj.value("rate_limit", 10.0);
    if (obj.contains("stub_script") && !obj.at("stub_script").is_null())
        cfg.stub_script = obj.at("stub_script").get<std::string>();
    if (cfg.descriptor.model_name.empty()) bad("backends." + name + ".model_name is required");
    try {
        cfg.descriptor.validate();
    } catch (const Error& e) {
        bad("backends." + name + ": " + e.what());
    }
    return cfg;
}

} // namespace

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) bad("cannot open config file " + path.string());
    json obj;
    try {
        in >> obj;
    } catch (const json::exception& e) {
        bad("config is not valid JSON: " + std::string(e.what()));
    }
    if (!obj.is_object()) bad("config must be a JSON object");

    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (const char* k : kTopLevelKeys) known = known || key == k;
        if (!known) bad("unknown config key \"" + key + "\"");
    }

    PipelineConfig cfg;
    try {
        if (!obj.contains("task_kind")) bad("task_kind is required");
        cfg.task_kind = corpus::task_kind_from_string(obj.at("task_kind").get<std::string>());

        if (obj.contains("datasets")) {
            if (!obj.at("datasets").is_object()) bad("datasets must map split names to paths");
            for (const auto& [split, p] : obj.at("datasets").items())
                cfg.datasets[corpus::split_name_from_string(split)] = p.get<std::string>();
        }
        if (obj.contains("passages") && !obj.at("passages").is_null())
            cfg.passages = obj.at("passages").get<std::string>();
        if (obj.contains("strategy"))
            cfg.strategy = guide::strategy_from_string(obj.at("strategy").get<std::string>());
        if (obj.contains("backends")) {
            const json& backends = obj.at("backends");
            if (!backends.is_object()) bad("backends must be an object");
            if (backends.contains("pkg"))
                cfg.pkg_backend = parse_backend(backends.at("pkg"), backend::Role::PkgModule, "pkg");
            if (backends.contains("llm"))
                cfg.llm_backend =
                    parse_backend(backends.at("llm"), backend::Role::BlackBoxLlm, "llm");
        }
        if (obj.contains("templates") && !obj.at("templates").is_null())
            cfg.template_overrides = obj.at("templates").get<std::string>();
        if (obj.contains("bm25")) {
            const json& bm25 = obj.at("bm25");
            cfg.bm25.k1 = bm25.value("k1", cfg.bm25.k1);
            cfg.bm25.b = bm25.value("b", cfg.bm25.b);
            cfg.top_n = bm25.value("top_n", cfg.top_n);
            if (cfg.bm25.k1 <= 0.0) bad("bm25.k1 must be positive");
            if (cfg.bm25.b < 0.0 || cfg.bm25.b > 1.0) bad("bm25.b must be in [0, 1]");
            if (cfg.top_n < 1) bad("bm25.top_n must be >= 1");
        }
        if (obj.contains("index_path") && !obj.at("index_path").is_null())
            cfg.index_path = obj.at("index_path").get<std::string>();
        if (obj.contains("max_in_flight")) {
            cfg.max_in_flight = obj.at("max_in_flight").get<std::size_t>();
            if (cfg.max_in_flight < 1) bad("max_in_flight must be >= 1");
        }
        if (obj.contains("cache_path") && !obj.at("cache_path").is_null())
            cfg.cache_path = obj.at("cache_path").get<std::string>();
        if (obj.contains("output_dir")) cfg.output_dir = obj.at("output_dir").get<std::string>();
        if (obj.contains("run_split"))
            cfg.run_split = corpus::split_name_from_string(obj.at("run_split").get<std::string>());
        if (obj.contains("generation")) {
            const json& gen = obj.at("generation");
            cfg.generation.background_max_tokens =
                gen.value("background_max_tokens", cfg.generation.background_max_tokens);
            cfg.generation.answer_max_tokens =
                gen.value("answer_max_tokens", cfg.generation.answer_max_tokens);
            cfg.generation.temperature = gen.value("temperature", cfg.generation.temperature);
            if (cfg.generation.background_max_tokens < 1 || cfg.generation.answer_max_tokens < 1)
                bad("generation max token counts must be >= 1");
            if (cfg.generation.temperature < 0.0) bad("generation.temperature must be >= 0");
        }
        if (obj.contains("failure_budget"))
            cfg.failure_budget = obj.at("failure_budget").get<long>();
        if (obj.contains("training_manifest")) {
            const json& t = obj.at("training_manifest");
            corpus::TrainingManifest m = corpus::default_manifest(cfg.task_kind);
            m.peak_learning_rate = t.value("peak_learning_rate", m.peak_learning_rate);
            m.batch_size = t.value("batch_size", m.batch_size);
            m.epochs = t.value("epochs", m.epochs);
            m.warmup_schedule = t.value("warmup_schedule", m.warmup_schedule);
            m.warmup_ratio = t.value("warmup_ratio", m.warmup_ratio);
            cfg.training = m;
        }
    } catch (const json::exception& e) {
        bad(std::string("malformed value: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        bad(e.what());
    }
    return cfg;
}

std::filesystem::path PipelineConfig::resolved_index_path() const {
    return index_path ? *index_path : output_dir / "index.pkgi";
}

const std::filesystem::path& PipelineConfig::dataset_for(corpus::SplitName split) const {
    auto it = datasets.find(split);
    if (it == datasets.end())
        bad(std::string("no dataset path configured for split \"") + corpus::to_string(split) +
            "\"");
    return it->second;
}

void PipelineConfig::validate_for_prepare() const {
    if (datasets.count(corpus::SplitName::Train) == 0 && !passages)
        bad("prepare needs datasets.train and/or passages");
    if (datasets.count(corpus::SplitName::Train))
        require_exists(dataset_for(corpus::SplitName::Train), "datasets.train");
    if (passages) require_exists(*passages, "passages");
    if (template_overrides) require_exists(*template_overrides, "templates");
}

void PipelineConfig::validate_for_index() const {
    if (!passages) bad("index needs a passages file");
    require_exists(*passages, "passages");
}

void PipelineConfig::validate_for_run() const {
    require_exists(dataset_for(run_split), "run split dataset");
    if (!llm_backend) bad("run needs backends.llm");
    if (strategy == guide::Strategy::Pkg && !pkg_backend)
        bad("the Pkg strategy needs backends.pkg");
    if (strategy == guide::Strategy::Retrieval) {
        require_exists(resolved_index_path(), "index (run the index command first)");
        if (!passages) bad("the Retrieval strategy needs the passages file for passage texts");
        require_exists(*passages, "passages");
    }
    if (template_overrides) require_exists(*template_overrides, "templates");
    if (llm_backend && llm_backend->stub_script) require_exists(*llm_backend->stub_script, "llm stub script");
    if (pkg_backend && pkg_backend->stub_script) require_exists(*pkg_backend->stub_script, "pkg stub script");
}

void PipelineConfig::validate_for_eval() const {
    require_exists(dataset_for(run_split), "run split dataset");
}

} // namespace pkg::cli
