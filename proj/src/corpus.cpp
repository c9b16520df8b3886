#include "pkg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "pkg/templates.hpp"

namespace pkg::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(TaskKind kind) {
    switch (kind) {
    case TaskKind::FactCheck: return "FactCheck";
    case TaskKind::TableQA: return "TableQA";
    case TaskKind::MedicalMCQ: return "MedicalMCQ";
    case TaskKind::ScienceMCQ: return "ScienceMCQ";
    }
    return "?";
}

const char* to_string(SplitName split) {
    switch (split) {
    case SplitName::Train: return "train";
    case SplitName::Valid: return "valid";
    case SplitName::Test: return "test";
    }
    return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "FactCheck") return TaskKind::FactCheck;
    if (s == "TableQA") return TaskKind::TableQA;
    if (s == "MedicalMCQ") return TaskKind::MedicalMCQ;
    if (s == "ScienceMCQ") return TaskKind::ScienceMCQ;
    throw Error("unknown task kind: " + s);
}

SplitName split_name_from_string(const std::string& s) {
    if (s == "train") return SplitName::Train;
    if (s == "valid") return SplitName::Valid;
    if (s == "test") return SplitName::Test;
    throw Error("unknown split name: " + s);
}

TrainingManifest default_manifest(TaskKind kind) {
    TrainingManifest m;
    switch (kind) {
    case TaskKind::FactCheck:
        m.batch_size = 64;
        m.epochs = 3;
        break;
    case TaskKind::TableQA:
        m.batch_size = 32;
        m.epochs = 10;
        break;
    case TaskKind::MedicalMCQ:
        m.batch_size = 32;
        m.epochs = 3;
        break;
    case TaskKind::ScienceMCQ:
        m.batch_size = 32;
        m.epochs = 5;
        break;
    }
    return m;
}

namespace {

const char* const kDatasetFields[] = {"id",          "task_kind",       "question",
                                      "options",     "context",         "gold_answer",
                                      "gold_background", "gold_table",  "image_feature_ref",
                                      "categories"};

[[noreturn]] void violate(std::size_t line, const std::string& field, const std::string& why) {
    throw SchemaViolation(line, field, why);
}

std::string require_string(const json& obj, const char* field, std::size_t line) {
    const auto& v = obj.at(field);
    if (!v.is_string()) violate(line, field, "expected a string");
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* field, std::size_t line) {
    const auto& v = obj.at(field);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) violate(line, field, "expected a string or null");
    return v.get<std::string>();
}

Table parse_table(const json& v, std::size_t line) {
    if (!v.is_object()) violate(line, "gold_table", "expected an object or null");
    Table t;
    if (!v.contains("caption") || !v.at("caption").is_string())
        violate(line, "gold_table", "caption must be a string");
    t.caption = v.at("caption").get<std::string>();
    if (!v.contains("header") || !v.at("header").is_array())
        violate(line, "gold_table", "header must be an array of strings");
    for (const auto& cell : v.at("header")) {
        if (!cell.is_string()) violate(line, "gold_table", "header cells must be strings");
        t.header.push_back(cell.get<std::string>());
    }
    if (!v.contains("rows") || !v.at("rows").is_array())
        violate(line, "gold_table", "rows must be an array of arrays");
    for (const auto& row : v.at("rows")) {
        if (!row.is_array()) violate(line, "gold_table", "rows must be arrays of strings");
        std::vector<std::string> cells;
        for (const auto& cell : row) {
            if (!cell.is_string()) violate(line, "gold_table", "row cells must be strings");
            cells.push_back(cell.get<std::string>());
        }
        t.rows.push_back(std::move(cells));
    }
    if (!t.rows.empty() && t.header.empty())
        violate(line, "gold_table", "header must be non-empty when rows are present");
    for (const auto& row : t.rows)
        if (row.size() != t.header.size())
            violate(line, "gold_table", "every row must have exactly as many cells as the header");
    return t;
}

TaskRecord parse_record(const json& obj, TaskKind expected_kind, std::size_t line) {
    if (!obj.is_object()) violate(line, "record", "expected a JSON object");
    for (const char* field : kDatasetFields)
        if (!obj.contains(field)) violate(line, field, "missing field");
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(std::begin(kDatasetFields), std::end(kDatasetFields),
                         [&](const char* f) { return key == f; }) == std::end(kDatasetFields))
            violate(line, key, "unexpected field");
    }

    TaskRecord rec;
    rec.id = require_string(obj, "id", line);
    if (rec.id.empty()) violate(line, "id", "must be non-empty");

    const std::string kind_str = require_string(obj, "task_kind", line);
    try {
        rec.task_kind = task_kind_from_string(kind_str);
    } catch (const Error&) {
        violate(line, "task_kind", "unknown task kind \"" + kind_str + "\"");
    }
    if (rec.task_kind != expected_kind)
        violate(line, "task_kind",
                std::string("expected ") + to_string(expected_kind) + ", got " + kind_str);

    rec.question = require_string(obj, "question", line);

    const auto& opts = obj.at("options");
    if (!opts.is_array()) violate(line, "options", "expected an array of strings");
    for (const auto& o : opts) {
        if (!o.is_string()) violate(line, "options", "options must be strings");
        rec.options.push_back(o.get<std::string>());
    }
    if (is_mcq(rec.task_kind)) {
        if (rec.options.size() < 2) violate(line, "options", "MCQ records need at least 2 options");
    } else if (!rec.options.empty()) {
        violate(line, "options", std::string(to_string(rec.task_kind)) + " records take no options");
    }

    rec.context = optional_string(obj, "context", line);
    rec.gold_answer = require_string(obj, "gold_answer", line);
    if (rec.task_kind == TaskKind::FactCheck) {
        if (rec.gold_answer != "true" && rec.gold_answer != "false")
            violate(line, "gold_answer", "FactCheck gold answer must be \"true\" or \"false\"");
    } else if (is_mcq(rec.task_kind)) {
        if (rec.gold_answer.size() != 1 || rec.gold_answer[0] < 'A' || rec.gold_answer[0] > 'Z' ||
            static_cast<std::size_t>(rec.gold_answer[0] - 'A') >= rec.options.size())
            violate(line, "gold_answer", "MCQ gold answer must be an option letter in range");
    }

    rec.gold_background = optional_string(obj, "gold_background", line);
    if (!obj.at("gold_table").is_null()) rec.gold_table = parse_table(obj.at("gold_table"), line);
    rec.image_feature_ref = optional_string(obj, "image_feature_ref", line);

    const auto& cats = obj.at("categories");
    if (!cats.is_object()) violate(line, "categories", "expected an object of string to string");
    for (const auto& [key, value] : cats.items()) {
        if (!value.is_string()) violate(line, "categories", "category values must be strings");
        rec.categories[key] = value.get<std::string>();
    }
    return rec;
}

std::string escape_cell(const std::string& cell) {
    std::string out;
    out.reserve(cell.size());
    for (char c : cell) {
        if (c == '|')
            out.push_back('/');
        else if (c == '\n' || c == '\r')
            out.push_back(' ');
        else
            out.push_back(c);
    }
    return out;
}

std::string join_cells(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += " | ";
        out += escape_cell(cells[i]);
    }
    return out;
}

bool contains_sentinel(const std::string& text) {
    return text.find("### Instruction:") != std::string::npos ||
           text.find("### Input:") != std::string::npos ||
           text.find("### Response:") != std::string::npos;
}

bool all_whitespace(const std::string& s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

std::size_t count_tokens(const std::string& s) {
    std::istringstream in(s);
    std::string tok;
    std::size_t n = 0;
    while (in >> tok) ++n;
    return n;
}

} // namespace

DatasetSplit load_dataset(const std::filesystem::path& path, TaskKind task_kind,
                          SplitName split_name) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());

    DatasetSplit split;
    split.task_kind = task_kind;
    split.split_name = split_name;

    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            violate(line_no, "record", std::string("invalid JSON: ") + e.what());
        }
        TaskRecord rec = parse_record(obj, task_kind, line_no);
        if (!seen_ids.insert(rec.id).second)
            violate(line_no, "id", "duplicate record id \"" + rec.id + "\"");
        split.records.push_back(std::move(rec));
    }
    return split;
}

std::string flatten_table(const Table& t) {
    std::string out = escape_cell(t.caption);
    if (!t.header.empty()) {
        out += '\n';
        out += join_cells(t.header);
    }
    for (const auto& row : t.rows) {
        out += '\n';
        out += join_cells(row);
    }
    return out;
}

namespace {

KnowledgeTriple make_triple(std::string instruction, std::string input, std::string output,
                            const std::string& record_id) {
    if (contains_sentinel(output))
        throw SchemaViolation(0, "gold_background",
                              "background for record " + record_id +
                                  " contains a template sentinel string");
    return KnowledgeTriple{std::move(instruction), std::move(input), std::move(output)};
}

} // namespace

std::vector<KnowledgeTriple> build_triples(const DatasetSplit& split,
                                           const templates::TemplateSet& tmpl) {
    std::vector<KnowledgeTriple> out;
    out.reserve(split.records.size());
    const std::string instruction = templates::instruction_for_task(tmpl, split.task_kind);
    for (const TaskRecord& rec : split.records) {
        std::string background;
        if (split.task_kind == TaskKind::TableQA && rec.gold_table) {
            background = flatten_table(*rec.gold_table);
        } else if (rec.gold_background && !all_whitespace(*rec.gold_background)) {
            background = *rec.gold_background;
        } else {
            throw MissingBackground(rec.id);
        }
        out.push_back(make_triple(instruction, templates::task_input(split.task_kind, rec.question),
                                  std::move(background), rec.id));
    }
    return out;
}

std::vector<KnowledgeTriple> build_triples(const DatasetSplit& split) {
    return build_triples(split, templates::default_templates());
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    const std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t j = i + 1;
        if (j == n) break; // final sentence handled below
        if (std::isspace(static_cast<unsigned char>(text[j])) == 0) continue;
        while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j < n && std::isupper(static_cast<unsigned char>(text[j])) == 0) continue;
        sentences.push_back(text.substr(start, i + 1 - start));
        start = j;
        i = j ? j - 1 : 0;
    }
    if (start < n) {
        std::string tail = text.substr(start);
        if (!all_whitespace(tail)) sentences.push_back(std::move(tail));
    }
    return sentences;
}

PassageTriples derive_passage_triples(const std::vector<std::string>& passages,
                                      std::size_t max_tokens) {
    PassageTriples result;
    const std::string instruction = templates::instruction_for_task(corpus::TaskKind::FactCheck);
    for (const std::string& passage : passages) {
        std::vector<std::string> sentences = split_sentences(passage);

        // Truncate at a sentence boundary once the token budget is spent.
        std::vector<std::string> kept;
        std::size_t tokens = 0;
        for (auto& s : sentences) {
            std::size_t t = count_tokens(s);
            if (!kept.empty() && tokens + t > max_tokens) break;
            tokens += t;
            kept.push_back(std::move(s));
        }

        if (kept.size() < 2) {
            ++result.dropped;
            continue;
        }
        std::string output;
        for (std::size_t i = 1; i < kept.size(); ++i) {
            if (i > 1) output += ' ';
            output += kept[i];
        }
        result.triples.push_back(make_triple(instruction, kept[0], std::move(output), "<passage>"));
    }
    return result;
}

void export_training_file(const std::vector<KnowledgeTriple>& triples,
                          const std::filesystem::path& path, const TrainingManifest& manifest) {
    if (triples.empty()) throw IoFailure("refusing to export an empty triple list");

    ordered_json arr = ordered_json::array();
    for (const auto& t : triples) {
        arr.push_back(ordered_json{{"instruction", t.instruction},
                                   {"input", t.input},
                                   {"output", t.output}});
    }
    {
        std::ofstream out(path);
        if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
        out << arr.dump(2) << '\n';
        if (!out) throw IoFailure("failed writing " + path.string());
    }

    ordered_json m{{"peak_learning_rate", manifest.peak_learning_rate},
                   {"batch_size", manifest.batch_size},
                   {"epochs", manifest.epochs},
                   {"warmup_schedule", manifest.warmup_schedule},
                   {"warmup_ratio", manifest.warmup_ratio}};
    const std::filesystem::path manifest_path = path.string() + ".manifest.json";
    std::ofstream mout(manifest_path);
    if (!mout) throw IoFailure("cannot open " + manifest_path.string() + " for writing");
    mout << m.dump(2) << '\n';
    if (!mout) throw IoFailure("failed writing " + manifest_path.string());
}

std::vector<KnowledgeTriple> import_training_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());
    json arr;
    try {
        in >> arr;
    } catch (const json::exception& e) {
        throw IoFailure("invalid training file " + path.string() + ": " + e.what());
    }
    if (!arr.is_array()) throw IoFailure("training file must hold a JSON array");
    std::vector<KnowledgeTriple> out;
    out.reserve(arr.size());
    for (const auto& item : arr) {
        if (!item.is_object() || !item.contains("instruction") || !item.contains("input") ||
            !item.contains("output"))
            throw IoFailure("training file entries need instruction/input/output");
        out.push_back(KnowledgeTriple{item.at("instruction").get<std::string>(),
                                      item.at("input").get<std::string>(),
                                      item.at("output").get<std::string>()});
    }
    return out;
}

} // namespace pkg::corpus
