#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "pkg/corpus.hpp"
#include "pkg/errors.hpp"

namespace pkg::templates {

enum class PromptKind {
    AlignmentInference,
    AlignmentTraining,
    AnswerFactCheck,
    AnswerTableQA,
    AnswerMedicalMCQ,
    AnswerScienceMCQ,
    CoTBackground,
    GenReadBackground,
};

const char* to_string(PromptKind kind);

enum class SelfGuidingKind { CoT, GenRead };

struct RenderedPrompt {
    PromptKind kind;
    std::string text;
    std::map<std::string, std::string> placeholders_filled;
};

// Holds every template string, keyed by PromptKind name (plus the per-task
// alignment instructions and the Direct-mode answer variants). Overrides
// loaded from a JSON file replace individual entries; unknown keys are
// rejected.
class TemplateSet {
public:
    TemplateSet();

    static TemplateSet with_overrides(const std::filesystem::path& json_path);

    const std::string& get(const std::string& key) const;
    void set(const std::string& key, std::string value);

    // Hex digest over all key/value pairs; recorded in run manifests.
    std::string hash() const;

private:
    std::map<std::string, std::string> entries_;
};

const TemplateSet& default_templates();

// The per-task alignment instruction sentence. The ScienceMCQ wording is an
// override point; the shipped default follows the medical pattern with the
// science domain.
std::string instruction_for_task(const TemplateSet& templates, corpus::TaskKind kind);
std::string instruction_for_task(corpus::TaskKind kind);

// "Statement: {question}" for FactCheck, "Question: {question}" otherwise.
std::string task_input(corpus::TaskKind kind, const std::string& question);

// Question plus the "(A) ... (B) ..." option list for MCQ kinds.
std::string task_question(const corpus::TaskRecord& record);

// "(A) opt1 (B) opt2 ...". Rejects more than 26 options.
std::string format_options(const std::vector<std::string>& options);

RenderedPrompt render_alignment(const TemplateSet& templates, const std::string& instruction,
                                const std::string& input,
                                const std::optional<std::string>& output = std::nullopt);

// Recovers (instruction, input) from an inference-mode alignment prompt.
std::pair<std::string, std::string> parse_alignment(const std::string& text);

// Empty background selects the Direct variant: the background block and its
// separators are omitted entirely.
RenderedPrompt render_answer_prompt(const TemplateSet& templates, corpus::TaskKind kind,
                                    const std::string& background,
                                    const corpus::TaskRecord& record);

RenderedPrompt self_guiding_prompt(const TemplateSet& templates, SelfGuidingKind kind,
                                   corpus::TaskKind task_kind, const corpus::TaskRecord& record);

} // namespace pkg::templates
