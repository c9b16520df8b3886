#include "pkg/guide.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace pkg::guide {

using corpus::TaskKind;
using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(Strategy s) {
    switch (s) {
    case Strategy::Direct: return "Direct";
    case Strategy::Pkg: return "Pkg";
    case Strategy::CoT: return "CoT";
    case Strategy::GenRead: return "GenRead";
    case Strategy::Retrieval: return "Retrieval";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "Direct") return Strategy::Direct;
    if (s == "Pkg") return Strategy::Pkg;
    if (s == "CoT") return Strategy::CoT;
    if (s == "GenRead") return Strategy::GenRead;
    if (s == "Retrieval") return Strategy::Retrieval;
    throw Error("unknown strategy: " + s);
}

RetrievalSource RetrievalSource::from_passages(const std::vector<retrieval::Passage>& passages,
                                               retrieval::Bm25Params params, std::size_t top_n) {
    RetrievalSource source;
    source.index = retrieval::build_index(passages);
    for (const auto& p : passages) source.texts[p.doc_id] = p.text;
    source.params = params;
    source.top_n = top_n;
    return source;
}

namespace {

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

Background generate_background(const GuidingStrategy& strategy, const corpus::TaskRecord& record,
                               const Backends& backends, const templates::TemplateSet& templates,
                               const GenerationOptions& options) {
    Background bg;
    bg.source = strategy.kind;

    switch (strategy.kind) {
    case Strategy::Direct:
        return bg;

    case Strategy::Pkg: {
        if (!backends.pkg) throw Error("Pkg strategy needs a pkg backend");
        const auto prompt = templates::render_alignment(
            templates, templates::instruction_for_task(templates, record.task_kind),
            templates::task_input(record.task_kind, record.question));
        backend::GenerationRequest req{prompt.text, options.background_max_tokens,
                                       options.temperature, {}};
        backend::GenerationResponse resp = backends.pkg->generate(req);
        if (resp.text.empty() || blank(resp.text))
            throw EmptyGeneration("pkg backend returned whitespace-only text for " + record.id);
        bg.text = resp.text;
        bg.generator_model = backends.pkg->descriptor().model_name;
        return bg;
    }

    case Strategy::CoT:
    case Strategy::GenRead: {
        if (!backends.llm) throw Error("self-guiding needs an llm backend");
        const auto kind = strategy.kind == Strategy::CoT ? templates::SelfGuidingKind::CoT
                                                         : templates::SelfGuidingKind::GenRead;
        const auto prompt = templates::self_guiding_prompt(templates, kind, record.task_kind, record);
        backend::GenerationRequest req{prompt.text, options.background_max_tokens,
                                       options.temperature, {}};
        backend::GenerationResponse resp = backends.llm->generate(req);
        if (resp.text.empty() || blank(resp.text))
            throw EmptyGeneration("llm returned whitespace-only background for " + record.id);
        bg.text = resp.text;
        bg.generator_model = backends.llm->descriptor().model_name;
        return bg;
    }

    case Strategy::Retrieval: {
        if (!strategy.retrieval) throw Error("Retrieval strategy needs a built index");
        const auto& source = *strategy.retrieval;
        const auto hits =
            retrieval::search(source.index, source.params, record.question, source.top_n);
        if (hits.empty())
            throw EmptyGeneration("retrieval found no matching passage for " + record.id);
        std::string text;
        for (std::size_t i = 0; i < hits.size(); ++i) {
            if (i) text += '\n';
            text += source.texts.at(hits[i].doc_id);
        }
        bg.text = text;
        bg.generator_model = "index";
        return bg;
    }
    }
    throw Error("unknown strategy");
}

std::string extract_answer(TaskKind task_kind, const std::string& raw_text,
                           const std::vector<std::string>& options) {
    const std::size_t n_options = std::min<std::size_t>(options.size(), 26);
    auto is_option_letter = [&](char c) {
        return c >= 'A' && static_cast<std::size_t>(c - 'A') < n_options;
    };
    auto is_word_char = [](unsigned char c) { return std::isalnum(c) != 0; };

    // 1. first "(X)" or standalone option letter, in text order
    if (n_options > 0) {
        for (std::size_t i = 0; i < raw_text.size(); ++i) {
            const char c = raw_text[i];
            if (c == '(' && i + 2 < raw_text.size() && is_option_letter(raw_text[i + 1]) &&
                raw_text[i + 2] == ')')
                return std::string(1, raw_text[i + 1]);
            if (is_option_letter(c)) {
                const bool left_ok = i == 0 || !is_word_char(raw_text[i - 1]);
                const bool right_ok = i + 1 == raw_text.size() || !is_word_char(raw_text[i + 1]);
                if (left_ok && right_ok) return std::string(1, c);
            }
        }
    }

    // 2. true/false as whole words for fact checking
    if (task_kind == TaskKind::FactCheck) {
        std::string lower(raw_text);
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        auto whole_word_at = [&](std::size_t pos, const std::string& word) {
            const bool left_ok = pos == 0 || !is_word_char(lower[pos - 1]);
            const std::size_t end = pos + word.size();
            const bool right_ok = end == lower.size() || !is_word_char(lower[end]);
            return left_ok && right_ok;
        };
        for (std::size_t i = 0; i < lower.size(); ++i) {
            if (lower.compare(i, 4, "true") == 0 && whole_word_at(i, "true")) return "true";
            if (lower.compare(i, 5, "false") == 0 && whole_word_at(i, "false")) return "false";
        }
    }

    // 3. longest option text quoted verbatim (case-insensitive)
    if (n_options > 0) {
        std::string lower(raw_text);
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        std::size_t best = n_options;
        std::size_t best_len = 0;
        for (std::size_t i = 0; i < n_options; ++i) {
            if (options[i].empty()) continue;
            std::string opt(options[i]);
            std::transform(opt.begin(), opt.end(), opt.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (lower.find(opt) != std::string::npos && opt.size() > best_len) {
                best = i;
                best_len = opt.size();
            }
        }
        if (best < n_options) return std::string(1, static_cast<char>('A' + best));
    }

    // 4. TableQA: first line, trailing punctuation stripped
    if (task_kind == TaskKind::TableQA) {
        std::string text = raw_text;
        const std::size_t nl = text.find('\n');
        if (nl != std::string::npos) text.resize(nl);
        const std::size_t begin = text.find_first_not_of(" \t\r");
        if (begin != std::string::npos) {
            text.erase(0, begin);
            while (!text.empty() &&
                   (std::isspace(static_cast<unsigned char>(text.back())) ||
                    std::ispunct(static_cast<unsigned char>(text.back()))))
                text.pop_back();
            if (!text.empty()) return text;
        }
    }

    return kUnparsed;
}

GuidedAnswer answer(const corpus::TaskRecord& record, const Background& background,
                    const Backends& backends, const templates::TemplateSet& templates,
                    const GenerationOptions& options) {
    if (!backends.llm) throw Error("answering needs an llm backend");

    const auto prompt =
        templates::render_answer_prompt(templates, record.task_kind, background.text, record);
    backend::GenerationRequest req{prompt.text, options.answer_max_tokens, options.temperature, {}};
    backend::GenerationResponse resp = backends.llm->generate(req);

    GuidedAnswer out;
    out.record_id = record.id;
    out.background = background;
    out.raw_llm_text = resp.text;
    out.extracted = extract_answer(record.task_kind, resp.text, record.options);
    return out;
}

namespace {

std::size_t cached_hits(const std::shared_ptr<backend::Backend>& b) {
    if (auto* cached = dynamic_cast<backend::CachedBackend*>(b.get())) return cached->cache_hits();
    return 0;
}

} // namespace

PipelineResult run_pipeline(const corpus::DatasetSplit& split, const GuidingStrategy& strategy,
                            const Backends& backends, const templates::TemplateSet& templates,
                            std::size_t max_in_flight, const GenerationOptions& options) {
    if (max_in_flight < 1) throw Error("max_in_flight must be >= 1");
    if (!backends.llm) throw Error("run_pipeline needs an llm backend");
    if (strategy.kind == Strategy::Pkg && !backends.pkg)
        throw Error("Pkg strategy needs a pkg backend");
    if (strategy.kind == Strategy::Retrieval && !strategy.retrieval)
        throw Error("Retrieval strategy needs a built index");

    PipelineResult result;
    result.manifest.strategy = to_string(strategy.kind);
    result.manifest.llm_model = backends.llm->descriptor().model_name;
    if (backends.pkg) result.manifest.pkg_model = backends.pkg->descriptor().model_name;
    result.manifest.template_hash = templates.hash();
    result.manifest.started_at = iso_timestamp();
    result.manifest.record_count = split.records.size();

    const std::size_t hits_before = cached_hits(backends.pkg) + cached_hits(backends.llm);

    result.answers.resize(split.records.size());
    std::mutex failures_mu;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= split.records.size()) return;
            const corpus::TaskRecord& record = split.records[i];
            try {
                Background bg = generate_background(strategy, record, backends, templates, options);
                result.answers[i] = answer(record, bg, backends, templates, options);
            } catch (const std::exception& e) {
                GuidedAnswer failed;
                failed.record_id = record.id;
                failed.background.source = strategy.kind;
                failed.extracted = kUnparsed;
                result.answers[i] = std::move(failed);
                std::lock_guard lock(failures_mu);
                result.manifest.failures.push_back({record.id, e.what()});
            }
        }
    };

    const std::size_t n_workers = std::min(max_in_flight, split.records.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::sort(result.manifest.failures.begin(), result.manifest.failures.end(),
              [](const RecordFailure& a, const RecordFailure& b) { return a.record_id < b.record_id; });
    result.manifest.cache_hits =
        cached_hits(backends.pkg) + cached_hits(backends.llm) - hits_before;
    result.manifest.finished_at = iso_timestamp();
    return result;
}

std::vector<Prediction> to_predictions(const std::vector<GuidedAnswer>& answers,
                                       Strategy strategy) {
    std::vector<Prediction> rows;
    rows.reserve(answers.size());
    for (const auto& a : answers)
        rows.push_back({a.record_id, to_string(strategy), a.background.text, a.raw_llm_text,
                        a.extracted});
    return rows;
}

void write_predictions(const std::vector<Prediction>& predictions,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    for (const auto& p : predictions) {
        ordered_json row{{"record_id", p.record_id},
                         {"strategy", p.strategy},
                         {"background_text", p.background_text},
                         {"raw_llm_text", p.raw_llm_text},
                         {"extracted", p.extracted}};
        out << row.dump() << '\n';
    }
    if (!out) throw IoFailure("failed writing " + path.string());
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());
    std::vector<Prediction> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw IoFailure("predictions line " + std::to_string(line_no) +
                            " is not valid JSON: " + e.what());
        }
        try {
            rows.push_back({obj.at("record_id").get<std::string>(),
                            obj.at("strategy").get<std::string>(),
                            obj.at("background_text").get<std::string>(),
                            obj.at("raw_llm_text").get<std::string>(),
                            obj.at("extracted").get<std::string>()});
        } catch (const json::exception& e) {
            throw IoFailure("predictions line " + std::to_string(line_no) +
                            " misses a field: " + e.what());
        }
    }
    return rows;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    ordered_json failures = ordered_json::array();
    for (const auto& f : manifest.failures)
        failures.push_back(ordered_json{{"record_id", f.record_id}, {"error", f.error}});
    ordered_json obj{{"strategy", manifest.strategy},
                     {"pkg_model", manifest.pkg_model},
                     {"llm_model", manifest.llm_model},
                     {"template_hash", manifest.template_hash},
                     {"started_at", manifest.started_at},
                     {"finished_at", manifest.finished_at},
                     {"record_count", manifest.record_count},
                     {"cache_hits", manifest.cache_hits},
                     {"failures", failures}};
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << obj.dump(2) << '\n';
    if (!out) throw IoFailure("failed writing " + path.string());
}

} // namespace pkg::guide
