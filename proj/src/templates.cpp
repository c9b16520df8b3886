#include "pkg/templates.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "pkg/digest.hpp"

namespace pkg::templates {

using corpus::TaskKind;
using nlohmann::json;

const char* to_string(PromptKind kind) {
    switch (kind) {
    case PromptKind::AlignmentInference: return "AlignmentInference";
    case PromptKind::AlignmentTraining: return "AlignmentTraining";
    case PromptKind::AnswerFactCheck: return "AnswerFactCheck";
    case PromptKind::AnswerTableQA: return "AnswerTableQA";
    case PromptKind::AnswerMedicalMCQ: return "AnswerMedicalMCQ";
    case PromptKind::AnswerScienceMCQ: return "AnswerScienceMCQ";
    case PromptKind::CoTBackground: return "CoTBackground";
    case PromptKind::GenReadBackground: return "GenReadBackground";
    }
    return "?";
}

namespace {

constexpr const char* kAlignmentSkeleton =
    "Below is an instruction that describes a task, paired with an input that provides further "
    "context.\n"
    "Write a response that appropriately completes the request.\n"
    "### Instruction:\n"
    "{instruction}\n"
    "### Input:\n"
    "{input}\n"
    "### Response:\n";

// Name/value pairs every TemplateSet starts from. Keys mirror PromptKind
// names; answer prompts additionally carry a "...Direct" variant with the
// background block and its separators removed.
const std::map<std::string, std::string>& builtin_entries() {
    static const std::map<std::string, std::string> entries = {
        {"AlignmentInference", kAlignmentSkeleton},
        {"AlignmentTraining", std::string(kAlignmentSkeleton) + "{output}"},

        {"AnswerFactCheck", "{background} \n\n claim: {query} \n\n Is the claim true or false?"},
        {"AnswerFactCheckDirect", "claim: {query} \n\n Is the claim true or false?"},

        {"AnswerTableQA",
         "Refer to the background below and answer the following question with just a few words. "
         "The answer should be less than 5 words.\n\n Background: {background}\n\n Question: "
         "{question}\n\n Answer:"},
        {"AnswerTableQADirect", "Question: {question}\n\n Answer:"},

        {"AnswerMedicalMCQ",
         "Refer to the medical background below and answer the following question.\n Background: "
         "{background}\n\nQuestion: {question}\nOptions: {options}\n\nPlease only choose the "
         "answer from options. The answer is:"},
        {"AnswerMedicalMCQDirect",
         "Question: {question}\nOptions: {options}\n\nPlease only choose the answer from "
         "options. The answer is:"},

        {"AnswerScienceMCQ",
         "Question: {question}\nBECAUSE: {background}\nOptions: {options}\nPlease only choose "
         "the answer from options. The answer is:"},
        {"AnswerScienceMCQDirect",
         "Question: {question}\nOptions: {options}\nPlease only choose the answer from options. "
         "The answer is:"},

        {"CoTBackground", "{question}\nLet's think step-by-step"},
        {"GenReadBackground",
         "Please provide the background document from {domain} to {task}.\n{question}"},

        {"InstructionFactCheck",
         "Generate a background document from Wikipedia to support or refute the statement."},
        {"InstructionTableQA",
         "Generate a background table from Wikipedia to answer the given question."},
        {"InstructionMedicalMCQ",
         "Generate a background document from the medical domain to answer the given question."},
        {"InstructionScienceMCQ",
         "Generate a background document from the science domain to answer the given question."},
    };
    return entries;
}

const std::array<const char*, 9> kPlaceholderNames = {
    "background", "question", "query", "options", "instruction", "input", "output", "domain",
    "task"};

bool is_placeholder(const std::string& name) {
    return std::find_if(kPlaceholderNames.begin(), kPlaceholderNames.end(),
                        [&](const char* p) { return name == p; }) != kPlaceholderNames.end();
}

// Single-pass substitution: substituted values are emitted verbatim and
// never rescanned, so data containing brace markers stays data.
std::string substitute(const std::string& tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        std::size_t open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        std::size_t close = tmpl.find('}', open);
        if (close == std::string::npos) {
            out.append(tmpl, open, std::string::npos);
            break;
        }
        std::string name = tmpl.substr(open + 1, close - open - 1);
        auto it = values.find(name);
        if (it != values.end()) {
            out += it->second;
        } else if (is_placeholder(name)) {
            throw UnfilledPlaceholder("no value for placeholder {" + name + "}");
        } else {
            out.append(tmpl, open, close - open + 1); // literal braces, not a marker
        }
        pos = close + 1;
    }
    return out;
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

} // namespace

TemplateSet::TemplateSet() : entries_(builtin_entries()) {}

TemplateSet TemplateSet::with_overrides(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw MissingFile(json_path.string());
    json obj;
    try {
        in >> obj;
    } catch (const json::exception& e) {
        throw Error("invalid template override file " + json_path.string() + ": " + e.what());
    }
    if (!obj.is_object()) throw Error("template overrides must be a JSON object");

    TemplateSet set;
    for (const auto& [key, value] : obj.items()) {
        if (!value.is_string()) throw Error("template override \"" + key + "\" must be a string");
        set.set(key, value.get<std::string>());
    }
    return set;
}

const std::string& TemplateSet::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error("unknown template key: " + key);
    return it->second;
}

void TemplateSet::set(const std::string& key, std::string value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error("unknown template key: " + key);
    it->second = std::move(value);
}

std::string TemplateSet::hash() const {
    digest::FieldHasher h;
    for (const auto& [key, value] : entries_) {
        h.add(key);
        h.add(value);
    }
    return digest::to_hex(h.finish());
}

const TemplateSet& default_templates() {
    static const TemplateSet set;
    return set;
}

std::string instruction_for_task(const TemplateSet& templates, TaskKind kind) {
    switch (kind) {
    case TaskKind::FactCheck: return templates.get("InstructionFactCheck");
    case TaskKind::TableQA: return templates.get("InstructionTableQA");
    case TaskKind::MedicalMCQ: return templates.get("InstructionMedicalMCQ");
    case TaskKind::ScienceMCQ: return templates.get("InstructionScienceMCQ");
    }
    throw UnsupportedTask("unsupported task kind");
}

std::string instruction_for_task(TaskKind kind) {
    return instruction_for_task(default_templates(), kind);
}

std::string task_input(TaskKind kind, const std::string& question) {
    if (kind == TaskKind::FactCheck) return "Statement: " + question;
    return "Question: " + question;
}

std::string format_options(const std::vector<std::string>& options) {
    if (options.size() > 26) throw TooManyOptions("option letters beyond Z are not supported");
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out += ' ';
        out += '(';
        out += static_cast<char>('A' + i);
        out += ") ";
        out += options[i];
    }
    return out;
}

std::string task_question(const corpus::TaskRecord& record) {
    if (record.options.empty()) return record.question;
    return record.question + "\nOptions: " + format_options(record.options);
}

RenderedPrompt render_alignment(const TemplateSet& templates, const std::string& instruction,
                                const std::string& input,
                                const std::optional<std::string>& output) {
    if (instruction.empty()) throw EmptyField("alignment instruction must be non-empty");
    if (input.empty()) throw EmptyField("alignment input must be non-empty");

    RenderedPrompt prompt;
    prompt.placeholders_filled = {{"instruction", instruction}, {"input", input}};
    if (output) {
        prompt.kind = PromptKind::AlignmentTraining;
        prompt.placeholders_filled["output"] = *output;
        prompt.text = substitute(templates.get("AlignmentTraining"), prompt.placeholders_filled);
    } else {
        prompt.kind = PromptKind::AlignmentInference;
        prompt.text = substitute(templates.get("AlignmentInference"), prompt.placeholders_filled);
    }
    return prompt;
}

std::pair<std::string, std::string> parse_alignment(const std::string& text) {
    static const std::string prefix =
        "Below is an instruction that describes a task, paired with an input that provides "
        "further context.\nWrite a response that appropriately completes the request.\n### "
        "Instruction:\n";
    static const std::string mid = "\n### Input:\n";
    static const std::string suffix = "\n### Response:\n";

    if (text.rfind(prefix, 0) != 0) throw Error("not an alignment prompt: bad prefix");
    if (text.size() < suffix.size() || text.compare(text.size() - suffix.size(), suffix.size(),
                                                    suffix) != 0)
        throw Error("not an alignment prompt: bad suffix");
    std::size_t mid_pos = text.find(mid, prefix.size());
    if (mid_pos == std::string::npos || mid_pos + mid.size() > text.size() - suffix.size())
        throw Error("not an alignment prompt: input marker missing");

    std::string instruction = text.substr(prefix.size(), mid_pos - prefix.size());
    std::string input =
        text.substr(mid_pos + mid.size(), text.size() - suffix.size() - mid_pos - mid.size());
    return {std::move(instruction), std::move(input)};
}

RenderedPrompt render_answer_prompt(const TemplateSet& templates, TaskKind kind,
                                    const std::string& background,
                                    const corpus::TaskRecord& record) {
    if (record.question.empty() || blank(record.question))
        throw EmptyQuestion("record " + record.id + " has an empty question");

    const bool direct = background.empty();
    RenderedPrompt prompt;
    std::string key;
    switch (kind) {
    case TaskKind::FactCheck:
        prompt.kind = PromptKind::AnswerFactCheck;
        key = "AnswerFactCheck";
        prompt.placeholders_filled["query"] = record.question;
        break;
    case TaskKind::TableQA:
        prompt.kind = PromptKind::AnswerTableQA;
        key = "AnswerTableQA";
        prompt.placeholders_filled["question"] = record.question;
        break;
    case TaskKind::MedicalMCQ:
        prompt.kind = PromptKind::AnswerMedicalMCQ;
        key = "AnswerMedicalMCQ";
        prompt.placeholders_filled["question"] = record.question;
        prompt.placeholders_filled["options"] = format_options(record.options);
        break;
    case TaskKind::ScienceMCQ:
        prompt.kind = PromptKind::AnswerScienceMCQ;
        key = "AnswerScienceMCQ";
        prompt.placeholders_filled["question"] = record.question;
        prompt.placeholders_filled["options"] = format_options(record.options);
        break;
    default:
        throw UnsupportedTask("unsupported task kind");
    }
    if (direct) {
        key += "Direct";
    } else {
        prompt.placeholders_filled["background"] = background;
    }
    prompt.text = substitute(templates.get(key), prompt.placeholders_filled);
    return prompt;
}

RenderedPrompt self_guiding_prompt(const TemplateSet& templates, SelfGuidingKind kind,
                                   TaskKind task_kind, const corpus::TaskRecord& record) {
    if (record.question.empty() || blank(record.question))
        throw EmptyQuestion("record " + record.id + " has an empty question");

    RenderedPrompt prompt;
    prompt.placeholders_filled["question"] = task_question(record);
    if (kind == SelfGuidingKind::CoT) {
        prompt.kind = PromptKind::CoTBackground;
        prompt.text = substitute(templates.get("CoTBackground"), prompt.placeholders_filled);
        return prompt;
    }

    std::string domain;
    std::string task;
    switch (task_kind) {
    case TaskKind::FactCheck:
        domain = "Wikipedia";
        task = "verify the claim";
        break;
    case TaskKind::TableQA:
        domain = "Wikipedia";
        task = "answer the question";
        break;
    case TaskKind::MedicalMCQ:
        domain = "the medical domain";
        task = "answer the question";
        break;
    case TaskKind::ScienceMCQ:
        domain = "the science domain";
        task = "answer the question";
        break;
    default:
        throw UnsupportedTask("unsupported task kind");
    }
    prompt.kind = PromptKind::GenReadBackground;
    prompt.placeholders_filled["domain"] = domain;
    prompt.placeholders_filled["task"] = task;
    prompt.text = substitute(templates.get("GenReadBackground"), prompt.placeholders_filled);
    return prompt;
}

} // namespace pkg::templates
