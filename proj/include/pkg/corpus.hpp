#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pkg/errors.hpp"

namespace pkg::templates {
class TemplateSet;
}

namespace pkg::corpus {

enum class TaskKind { FactCheck, TableQA, MedicalMCQ, ScienceMCQ };
enum class SplitName { Train, Valid, Test };

const char* to_string(TaskKind kind);
const char* to_string(SplitName split);
TaskKind task_kind_from_string(const std::string& s);
SplitName split_name_from_string(const std::string& s);

inline bool is_mcq(TaskKind kind) {
    return kind == TaskKind::MedicalMCQ || kind == TaskKind::ScienceMCQ;
}

struct Table {
    std::string caption;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// One evaluation instance. `question` holds the claim for FactCheck.
struct TaskRecord {
    std::string id;
    TaskKind task_kind = TaskKind::FactCheck;
    std::string question;
    std::vector<std::string> options;
    std::optional<std::string> context;
    std::string gold_answer;
    std::optional<std::string> gold_background;
    std::optional<Table> gold_table;
    std::optional<std::string> image_feature_ref;
    std::map<std::string, std::string> categories;
};

struct KnowledgeTriple {
    std::string instruction;
    std::string input;
    std::string output;

    bool operator==(const KnowledgeTriple&) const = default;
};

struct DatasetSplit {
    TaskKind task_kind = TaskKind::FactCheck;
    SplitName split_name = SplitName::Train;
    std::vector<TaskRecord> records;
};

// Hyperparameters recorded alongside a training export. Fine-tuning itself
// happens in an external system; this is the handoff record.
struct TrainingManifest {
    double peak_learning_rate = 2e-5;
    int batch_size = 32;
    int epochs = 3;
    std::string warmup_schedule = "cosine";
    double warmup_ratio = 0.1;
};

// Published per-task settings (batch size and epochs differ across tasks).
TrainingManifest default_manifest(TaskKind kind);

struct PassageTriples {
    std::vector<KnowledgeTriple> triples;
    std::size_t dropped = 0;
};

// Reads one JSON record per line; any malformed line fails the whole load.
DatasetSplit load_dataset(const std::filesystem::path& path, TaskKind task_kind,
                          SplitName split_name);

// Caption, header, then one line per row; cells joined by " | ". Literal '|'
// in a cell becomes '/' and newlines become spaces so the format stays
// unambiguous.
std::string flatten_table(const Table& t);

std::vector<KnowledgeTriple> build_triples(const DatasetSplit& split,
                                           const templates::TemplateSet& templates);
std::vector<KnowledgeTriple> build_triples(const DatasetSplit& split);

// Splits on '.', '!' or '?' followed by whitespace and an uppercase letter
// (or end of text); the terminator stays with its sentence.
std::vector<std::string> split_sentences(const std::string& text);

// First sentence becomes the input, the remaining sentences the output.
// Passages are truncated at a sentence boundary once they exceed
// max_tokens whitespace-delimited words; passages left with fewer than two
// sentences are dropped and counted.
PassageTriples derive_passage_triples(const std::vector<std::string>& passages,
                                      std::size_t max_tokens = 256);

void export_training_file(const std::vector<KnowledgeTriple>& triples,
                          const std::filesystem::path& path, const TrainingManifest& manifest);
std::vector<KnowledgeTriple> import_training_file(const std::filesystem::path& path);

} // namespace pkg::corpus
