#include "pkg/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "pkg/guide.hpp"

namespace pkg::eval {

using corpus::TaskKind;
using nlohmann::json;
using nlohmann::ordered_json;

std::string normalize_answer(const std::string& text) {
    std::string lower;
    lower.reserve(text.size());
    for (unsigned char c : text) lower.push_back(static_cast<char>(std::tolower(c)));

    // drop a/an/the where bounded by non-alphanumerics
    std::string no_articles;
    std::size_t i = 0;
    while (i < lower.size()) {
        if (std::isalnum(static_cast<unsigned char>(lower[i]))) {
            std::size_t end = i;
            while (end < lower.size() && std::isalnum(static_cast<unsigned char>(lower[end])))
                ++end;
            const std::string word = lower.substr(i, end - i);
            if (word != "a" && word != "an" && word != "the") no_articles += word;
            i = end;
        } else {
            no_articles.push_back(lower[i]);
            ++i;
        }
    }

    // drop punctuation outright ("27," -> "27", "don't" -> "dont"), then
    // collapse whitespace
    std::string out;
    bool pending_space = false;
    for (unsigned char c : no_articles) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
        } else if (std::ispunct(c)) {
            continue;
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

bool exact_match(const std::string& pred, const std::string& gold, bool strict) {
    if (pred == guide::kUnparsed) return false;
    if (strict) return pred == gold;
    return normalize_answer(pred) == normalize_answer(gold);
}

namespace {

std::string lowercase(const std::string& s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_correct(const guide::Prediction& pred, const corpus::TaskRecord& record,
                const ScoringOptions& options) {
    if (pred.extracted == guide::kUnparsed) return false;
    switch (record.task_kind) {
    case TaskKind::FactCheck:
    case TaskKind::MedicalMCQ:
    case TaskKind::ScienceMCQ:
        return lowercase(pred.extracted) == lowercase(record.gold_answer);
    case TaskKind::TableQA:
        return exact_match(pred.extracted, record.gold_answer, options.strict_em);
    }
    return false;
}

struct ScoredSplit {
    std::vector<bool> correct;  // by record index
    std::vector<bool> scored;   // false only under allow_partial
    std::size_t n_correct = 0;
    std::size_t n_unparsed = 0;
    std::string strategy;
};

ScoredSplit score_split(const std::vector<guide::Prediction>& predictions,
                        const corpus::DatasetSplit& split, const ScoringOptions& options) {
    if (split.records.empty()) throw EmptySplit();

    std::unordered_map<std::string, std::size_t> index_by_id;
    for (std::size_t i = 0; i < split.records.size(); ++i)
        index_by_id[split.records[i].id] = i;

    ScoredSplit scored;
    scored.correct.assign(split.records.size(), false);
    scored.scored.assign(split.records.size(), false);

    for (const auto& pred : predictions) {
        auto it = index_by_id.find(pred.record_id);
        if (it == index_by_id.end()) throw UnknownRecordId(pred.record_id);
        const std::size_t i = it->second;
        if (scored.scored[i]) throw DuplicatePrediction(pred.record_id);
        scored.scored[i] = true;
        if (scored.strategy.empty()) scored.strategy = pred.strategy;
        if (pred.extracted == guide::kUnparsed) ++scored.n_unparsed;
        if (is_correct(pred, split.records[i], options)) {
            scored.correct[i] = true;
            ++scored.n_correct;
        }
    }

    if (!options.allow_partial) {
        for (std::size_t i = 0; i < split.records.size(); ++i)
            if (!scored.scored[i]) throw MissingPrediction(split.records[i].id);
    }
    return scored;
}

} // namespace

MetricReport accuracy(const std::vector<guide::Prediction>& predictions,
                      const corpus::DatasetSplit& split, const ScoringOptions& options) {
    const ScoredSplit scored = score_split(predictions, split, options);

    MetricReport report;
    report.task_kind = split.task_kind;
    report.strategy = scored.strategy;
    report.n_records = split.records.size();
    report.n_correct = scored.n_correct;
    report.n_unparsed = scored.n_unparsed;
    report.overall = static_cast<double>(scored.n_correct) / split.records.size();

    for (std::size_t i = 0; i < split.records.size(); ++i) {
        for (const auto& [tag, value] : split.records[i].categories) {
            CategoryCount& c = report.per_category[tag + "=" + value];
            ++c.total;
            if (scored.correct[i]) ++c.correct;
        }
    }
    return report;
}

MetricReport sciqa_breakdown(const std::vector<guide::Prediction>& predictions,
                             const corpus::DatasetSplit& split, const ScoringOptions& options) {
    const ScoredSplit scored = score_split(predictions, split, options);

    MetricReport report;
    report.task_kind = split.task_kind;
    report.strategy = scored.strategy;
    report.n_records = split.records.size();
    report.n_correct = scored.n_correct;
    report.n_unparsed = scored.n_unparsed;
    report.overall = static_cast<double>(scored.n_correct) / split.records.size();

    static const char* kSubjects[] = {"NAT", "SOC", "LAN"};
    static const char* kGrades[] = {"G1-6", "G7-12"};
    for (const char* s : kSubjects) report.per_category[s] = {};
    for (const char* g : kGrades) report.per_category[g] = {};
    report.per_category["TXT"] = {};
    report.per_category["IMG"] = {};
    report.per_category["NO"] = {};

    auto tag = [&](const corpus::TaskRecord& rec, const char* name) -> const std::string& {
        auto it = rec.categories.find(name);
        if (it == rec.categories.end()) throw MissingCategoryTag(rec.id, name);
        return it->second;
    };
    auto bump = [&](const std::string& category, bool correct) {
        CategoryCount& c = report.per_category[category];
        ++c.total;
        if (correct) ++c.correct;
    };

    for (std::size_t i = 0; i < split.records.size(); ++i) {
        const corpus::TaskRecord& rec = split.records[i];
        const bool correct = scored.correct[i];

        const std::string& subject = tag(rec, "subject");
        if (std::find(std::begin(kSubjects), std::end(kSubjects), subject) == std::end(kSubjects))
            throw MissingCategoryTag(rec.id, "subject (must be NAT, SOC or LAN)");
        bump(subject, correct);

        const std::string& grade = tag(rec, "grade");
        if (std::find(std::begin(kGrades), std::end(kGrades), grade) == std::end(kGrades))
            throw MissingCategoryTag(rec.id, "grade (must be G1-6 or G7-12)");
        bump(grade, correct);

        if (tag(rec, "has_text") == "true") bump("TXT", correct);
        if (tag(rec, "has_image") == "true") bump("IMG", correct);
        if (tag(rec, "no_context") == "true") bump("NO", correct);
    }

    // Avg is overall accuracy, not the mean of category fractions.
    report.per_category["Avg"] = {scored.n_correct, split.records.size()};
    return report;
}

namespace {

std::string format_fraction(double fraction, int decimals) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(decimals);
    out << fraction * 100.0;
    return out.str();
}

bool has_sciqa_categories(const MetricReport& report) {
    static const char* kCats[] = {"NAT", "SOC", "LAN", "TXT", "IMG", "NO", "G1-6", "G7-12", "Avg"};
    return std::all_of(std::begin(kCats), std::end(kCats),
                       [&](const char* c) { return report.per_category.count(c) > 0; });
}

std::string display_strategy(const std::string& strategy) {
    if (strategy == "Pkg") return "PKG";
    if (strategy == "Retrieval") return "BM25";
    return strategy;
}

constexpr const char* kSciqaColumns[] = {"NAT", "SOC", "LAN",  "TXT", "IMG",
                                         "NO",  "G1-6", "G7-12", "Avg"};

} // namespace

std::string render_report(const MetricReport& report, ReportFormat format) {
    switch (format) {
    case ReportFormat::Json: {
        ordered_json cats = ordered_json::object();
        for (const auto& [name, count] : report.per_category)
            cats[name] = ordered_json{{"correct", count.correct},
                                      {"total", count.total},
                                      {"fraction", count.fraction()}};
        ordered_json obj{{"task_kind", corpus::to_string(report.task_kind)},
                         {"strategy", report.strategy},
                         {"overall", report.overall},
                         {"n_records", report.n_records},
                         {"n_correct", report.n_correct},
                         {"n_unparsed", report.n_unparsed},
                         {"per_category", cats}};
        return obj.dump(2) + "\n";
    }
    case ReportFormat::Csv: {
        std::ostringstream out;
        out << "name,correct,total,fraction\n";
        out << "overall," << report.n_correct << "," << report.n_records << "," << report.overall
            << "\n";
        for (const auto& [name, count] : report.per_category)
            out << name << "," << count.correct << "," << count.total << "," << count.fraction()
                << "\n";
        out << "unparsed," << report.n_unparsed << "," << report.n_records << ","
            << (report.n_records ? static_cast<double>(report.n_unparsed) / report.n_records : 0.0)
            << "\n";
        return out.str();
    }
    case ReportFormat::Markdown:
        return render_comparison({report});
    }
    throw Error("unknown report format");
}

void emit_report(const MetricReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << render_report(report, format);
    if (!out) throw IoFailure("failed writing " + path.string());
}

MetricReport load_report_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());
    json obj;
    try {
        in >> obj;
    } catch (const json::exception& e) {
        throw IoFailure("invalid report " + path.string() + ": " + e.what());
    }
    MetricReport report;
    try {
        report.task_kind = corpus::task_kind_from_string(obj.at("task_kind").get<std::string>());
        report.strategy = obj.at("strategy").get<std::string>();
        report.overall = obj.at("overall").get<double>();
        report.n_records = obj.at("n_records").get<std::size_t>();
        report.n_correct = obj.at("n_correct").get<std::size_t>();
        report.n_unparsed = obj.at("n_unparsed").get<std::size_t>();
        for (const auto& [name, cat] : obj.at("per_category").items())
            report.per_category[name] = {cat.at("correct").get<std::size_t>(),
                                         cat.at("total").get<std::size_t>()};
    } catch (const json::exception& e) {
        throw IoFailure("report " + path.string() + " misses a field: " + e.what());
    }
    return report;
}

std::string render_comparison(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw Error("no reports to compare");

    // Fixed presentation order for strategy rows.
    static const char* kRowOrder[] = {"Direct", "Retrieval", "CoT", "GenRead", "Pkg"};
    std::vector<const MetricReport*> ordered;
    for (const char* name : kRowOrder)
        for (const auto& r : reports)
            if (r.strategy == name) ordered.push_back(&r);
    for (const auto& r : reports) // strategies outside the known set go last
        if (std::find(std::begin(kRowOrder), std::end(kRowOrder), r.strategy) ==
            std::end(kRowOrder))
            ordered.push_back(&r);

    const bool sciqa = std::all_of(reports.begin(), reports.end(), has_sciqa_categories);

    std::ostringstream out;
    if (sciqa) {
        out << "| Models |";
        for (const char* c : kSciqaColumns) out << " " << c << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < std::size(kSciqaColumns); ++i) out << "---|";
        out << "\n";
        for (const MetricReport* r : ordered) {
            out << "| " << display_strategy(r->strategy) << " |";
            for (const char* c : kSciqaColumns)
                out << " " << format_fraction(r->per_category.at(c).fraction(), 2) << " |";
            out << "\n";
        }
        return out.str();
    }

    // One row per strategy, one column per task kind, one decimal.
    std::vector<std::string> strategies;
    std::vector<std::string> tasks;
    std::map<std::pair<std::string, std::string>, const MetricReport*> cells;
    for (const MetricReport* r : ordered) {
        const std::string t = corpus::to_string(r->task_kind);
        if (std::find(strategies.begin(), strategies.end(), r->strategy) == strategies.end())
            strategies.push_back(r->strategy);
        if (std::find(tasks.begin(), tasks.end(), t) == tasks.end()) tasks.push_back(t);
        cells[{r->strategy, t}] = r;
    }
    out << "| Models |";
    for (const auto& t : tasks) out << " " << t << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < tasks.size(); ++i) out << "---|";
    out << "\n";
    for (const auto& strategy : strategies) {
        out << "| " << display_strategy(strategy) << " |";
        for (const auto& t : tasks) {
            auto it = cells.find({strategy, t});
            if (it != cells.end())
                out << " " << format_fraction(it->second->overall, 1) << " |";
            else
                out << " - |";
        }
        out << "\n";
    }
    return out.str();
}

} // namespace pkg::eval
