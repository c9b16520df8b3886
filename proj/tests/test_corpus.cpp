#include <doctest.h>

#include <set>

#include "pkg/corpus.hpp"
#include "pkg/templates.hpp"
#include "test_support.hpp"

using namespace pkg;
using corpus::TaskKind;
using corpus::SplitName;
using testsupport::TempDir;

namespace {

corpus::Table batman_table() {
    corpus::Table t;
    t.caption = "Batman: The Enemy Within";
    t.header = {"Ep", "Title", "Directed by", "Release date"};
    t.rows = {
        {"1", "\"The Enigma\"", "Kent Mudle", "August 8, 2017"},
        {"2", "\"The Pact\"", "Matthew Leach", "October 3, 2017"},
        {"3", "\"Fractured Mask\"", "Sean Manning", "November 21, 2017"},
        {"4", "\"What Ails You\"", "Chris Rieser", "January 23, 2018"},
        {"5", "\"Same Stitch\"", "Kent Mudle", "March 27, 2018"},
    };
    return t;
}

} // namespace

TEST_CASE("flatten_table basic format") {
    corpus::Table t;
    t.caption = "T";
    t.header = {"a", "b"};
    t.rows = {{"1", "2"}};
    CHECK(corpus::flatten_table(t) == "T\na | b\n1 | 2");
}

TEST_CASE("flatten_table degenerate caption-only table") {
    corpus::Table t;
    t.caption = "C";
    CHECK(corpus::flatten_table(t) == "C");
}

TEST_CASE("flatten_table episode table") {
    const std::string flat = corpus::flatten_table(batman_table());
    std::size_t lines = 1;
    for (char c : flat)
        if (c == '\n') ++lines;
    CHECK(lines == 7);
    CHECK(flat.substr(flat.rfind('\n') + 1).find("March 27, 2018") != std::string::npos);
    CHECK(flat.back() != '\n');
}

TEST_CASE("flatten_table escapes separators and newlines") {
    corpus::Table t;
    t.caption = "a|b";
    t.header = {"x\ny", "z"};
    t.rows = {{"p|q", "r"}};
    CHECK(corpus::flatten_table(t) == "a/b\nx y | z\np/q | r");
}

TEST_CASE("flatten_table injective on random distinct tables") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> cell(0, 25);
    std::set<std::string> flats;
    std::set<std::string> keys;
    for (int i = 0; i < 50; ++i) {
        corpus::Table t;
        t.caption = "cap";
        t.header = {"h1", "h2"};
        std::string key;
        for (int r = 0; r < 2; ++r) {
            std::vector<std::string> row;
            for (int c = 0; c < 2; ++c) {
                row.push_back(std::string(1, static_cast<char>('a' + cell(rng))) +
                              std::string(1, static_cast<char>('a' + cell(rng))));
                key += row.back() + ";";
            }
            t.rows.push_back(row);
        }
        if (!keys.insert(key).second) continue; // duplicate content, skip
        CHECK(flats.insert(corpus::flatten_table(t)).second);
    }
}

TEST_CASE("load_dataset reads records in file order") {
    TempDir dir;
    std::vector<corpus::TaskRecord> records;
    for (int i = 0; i < 5; ++i)
        records.push_back(testsupport::fact_record("r" + std::to_string(i),
                                                   "Claim " + std::to_string(i), "true", "bg"));
    testsupport::write_dataset(dir.file("d.jsonl"), records);

    const auto split = corpus::load_dataset(dir.file("d.jsonl"), TaskKind::FactCheck,
                                            SplitName::Train);
    REQUIRE(split.records.size() == 5);
    CHECK(split.records[0].id == "r0");
    CHECK(split.records[4].question == "Claim 4");
    CHECK(split.records[2].gold_background == "bg");
}

TEST_CASE("load_dataset empty file") {
    TempDir dir;
    testsupport::write_file(dir.file("empty.jsonl"), "");
    const auto split =
        corpus::load_dataset(dir.file("empty.jsonl"), TaskKind::FactCheck, SplitName::Test);
    CHECK(split.records.empty());
}

TEST_CASE("load_dataset missing file") {
    CHECK_THROWS_AS(corpus::load_dataset("/nonexistent/x.jsonl", TaskKind::FactCheck,
                                         SplitName::Train),
                    MissingFile);
}

TEST_CASE("load_dataset fails fast on a malformed line") {
    TempDir dir;
    std::string content;
    for (int i = 0; i < 5; ++i)
        content += testsupport::dataset_line(testsupport::fact_record(
                       "r" + std::to_string(i), "Claim", "true", "bg")) +
                   "\n";
    // line 6 lacks "question"
    content += R"({"id":"r5","task_kind":"FactCheck","options":[],"context":null,)"
               R"("gold_answer":"true","gold_background":"bg","gold_table":null,)"
               R"("image_feature_ref":null,"categories":{}})"
               "\n";
    testsupport::write_file(dir.file("d.jsonl"), content);

    try {
        corpus::load_dataset(dir.file("d.jsonl"), TaskKind::FactCheck, SplitName::Train);
        FAIL("expected SchemaViolation");
    } catch (const corpus::SchemaViolation& e) {
        CHECK(e.line() == 6);
        CHECK(e.field() == "question");
    }
}

TEST_CASE("load_dataset schema checks") {
    TempDir dir;

    SUBCASE("invalid JSON") {
        testsupport::write_file(dir.file("d.jsonl"), "not json\n");
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::FactCheck, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("duplicate id") {
        auto rec = testsupport::fact_record("dup", "Claim", "true", "bg");
        testsupport::write_dataset(dir.file("d.jsonl"), {rec, rec});
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::FactCheck, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("wrong task kind") {
        auto rec = testsupport::fact_record("r", "Claim", "true", "bg");
        testsupport::write_dataset(dir.file("d.jsonl"), {rec});
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::TableQA, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("MCQ with one option") {
        auto rec = testsupport::mcq_record("r", TaskKind::MedicalMCQ, "Q", {"only"}, "A");
        testsupport::write_dataset(dir.file("d.jsonl"), {rec});
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::MedicalMCQ, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("FactCheck with options") {
        auto rec = testsupport::fact_record("r", "Claim", "true", "bg");
        rec.options = {"x", "y"};
        testsupport::write_dataset(dir.file("d.jsonl"), {rec});
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::FactCheck, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("MCQ gold letter out of range") {
        auto rec = testsupport::mcq_record("r", TaskKind::ScienceMCQ, "Q", {"a", "b"}, "C");
        testsupport::write_dataset(dir.file("d.jsonl"), {rec});
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::ScienceMCQ, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("FactCheck gold answer not true/false") {
        auto rec = testsupport::fact_record("r", "Claim", "yes", "bg");
        testsupport::write_dataset(dir.file("d.jsonl"), {rec});
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::FactCheck, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("unexpected extra field") {
        auto rec = testsupport::fact_record("r", "Claim", "true", "bg");
        std::string line = testsupport::dataset_line(rec);
        line.insert(line.size() - 1, R"(,"surprise":1)");
        testsupport::write_file(dir.file("d.jsonl"), line + "\n");
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::FactCheck, SplitName::Train),
            corpus::SchemaViolation);
    }
    SUBCASE("ragged table row") {
        corpus::TaskRecord rec;
        rec.id = "r";
        rec.task_kind = TaskKind::TableQA;
        rec.question = "Q";
        rec.gold_answer = "x";
        corpus::Table t;
        t.caption = "c";
        t.header = {"a", "b"};
        t.rows = {{"1"}};
        rec.gold_table = t;
        testsupport::write_dataset(dir.file("d.jsonl"), {rec});
        CHECK_THROWS_AS(
            corpus::load_dataset(dir.file("d.jsonl"), TaskKind::TableQA, SplitName::Train),
            corpus::SchemaViolation);
    }
}

TEST_CASE("build_triples fact checking") {
    corpus::DatasetSplit split;
    split.task_kind = TaskKind::FactCheck;
    split.records = {testsupport::fact_record("r1", "The sky is green.", "false",
                                              "The sky appears blue due to Rayleigh scattering.")};
    const auto triples = corpus::build_triples(split);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].instruction ==
          "Generate a background document from Wikipedia to support or refute the statement.");
    CHECK(triples[0].input == "Statement: The sky is green.");
    CHECK(triples[0].output == "The sky appears blue due to Rayleigh scattering.");
}

TEST_CASE("build_triples table output uses the flattened table") {
    corpus::DatasetSplit split;
    split.task_kind = TaskKind::TableQA;
    corpus::TaskRecord rec;
    rec.id = "t1";
    rec.task_kind = TaskKind::TableQA;
    rec.question = "episode 5 release date";
    rec.gold_answer = "March 27, 2018";
    rec.gold_table = batman_table();
    split.records = {rec};

    const auto triples = corpus::build_triples(split);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].instruction ==
          "Generate a background table from Wikipedia to answer the given question.");
    CHECK(triples[0].input == "Question: episode 5 release date");
    CHECK(triples[0].output == corpus::flatten_table(batman_table()));
}

TEST_CASE("build_triples empty split and missing background") {
    corpus::DatasetSplit split;
    split.task_kind = TaskKind::FactCheck;
    CHECK(corpus::build_triples(split).empty());

    split.records = {testsupport::fact_record("r1", "Claim", "true")};
    CHECK_THROWS_AS(corpus::build_triples(split), corpus::MissingBackground);
}

TEST_CASE("build_triples count matches record count") {
    corpus::DatasetSplit split;
    split.task_kind = TaskKind::MedicalMCQ;
    for (int i = 0; i < 7; ++i) {
        auto rec = testsupport::mcq_record("m" + std::to_string(i), TaskKind::MedicalMCQ,
                                           "Q" + std::to_string(i), {"x", "y"}, "A");
        rec.gold_background = "medical background " + std::to_string(i);
        split.records.push_back(rec);
    }
    CHECK(corpus::build_triples(split).size() == split.records.size());
}

TEST_CASE("split_sentences keeps terminators and requires uppercase starts") {
    CHECK(corpus::split_sentences("A. B. C.") ==
          std::vector<std::string>{"A.", "B.", "C."});
    CHECK(corpus::split_sentences("Hi!? Ok.") == std::vector<std::string>{"Hi!?", "Ok."});
    CHECK(corpus::split_sentences("Mr. smith went. Then left.") ==
          std::vector<std::string>{"Mr. smith went.", "Then left."});
    CHECK(corpus::split_sentences("No terminator here") ==
          std::vector<std::string>{"No terminator here"});
    CHECK(corpus::split_sentences("Trailing space. ") ==
          std::vector<std::string>{"Trailing space."});
}

TEST_CASE("derive_passage_triples splits input from background") {
    const auto result = corpus::derive_passage_triples({"A. B. C."});
    REQUIRE(result.triples.size() == 1);
    CHECK(result.dropped == 0);
    CHECK(result.triples[0].input == "A.");
    CHECK(result.triples[0].output == "B. C.");
    CHECK(result.triples[0].instruction ==
          "Generate a background document from Wikipedia to support or refute the statement.");
}

TEST_CASE("derive_passage_triples drops short passages") {
    const auto result = corpus::derive_passage_triples({"Only one sentence here."});
    CHECK(result.triples.empty());
    CHECK(result.dropped == 1);
}

TEST_CASE("derive_passage_triples counts a hand-built fixture") {
    const std::vector<std::string> passages = {
        "First intro. Some follow-up fact.",
        "Second intro! Another fact. And one more.",
        "Third intro? Yes indeed.",
        "Dropped single sentence.",
    };
    const auto result = corpus::derive_passage_triples(passages);
    CHECK(result.triples.size() == 3);
    CHECK(result.dropped == 1);
    CHECK(result.triples[1].output == "Another fact. And one more.");
}

TEST_CASE("derive_passage_triples truncates at a sentence boundary") {
    auto sentence = [](const std::string& head, int words) {
        std::string s = head;
        for (int i = 1; i < words; ++i) s += " w" + std::to_string(i);
        return s + ".";
    };
    // 10 + 100 + 100 + 100 tokens; the cap of 256 keeps the first three
    const std::string passage = sentence("Alpha", 10) + " " + sentence("Beta", 100) + " " +
                                sentence("Gamma", 100) + " " + sentence("Delta", 100);
    const auto result = corpus::derive_passage_triples({passage});
    REQUIRE(result.triples.size() == 1);
    CHECK(result.triples[0].output.find("Beta") == 0);
    CHECK(result.triples[0].output.find("Gamma") != std::string::npos);
    CHECK(result.triples[0].output.find("Delta") == std::string::npos);
}

TEST_CASE("training file round trip is byte exact") {
    TempDir dir;
    std::vector<corpus::KnowledgeTriple> triples = {
        {"Instruction one.", "Statement: has \"quotes\" and\nnewlines", "output \\ backslash"},
        {"Instruction two.", "Question: unicode \xC3\xA9\xC3\xA0", "tab\there"},
    };
    const auto path = dir.file("training.json");
    corpus::export_training_file(triples, path, corpus::default_manifest(TaskKind::FactCheck));

    const auto loaded = corpus::import_training_file(path);
    CHECK(loaded == triples);

    // the sidecar records the published hyperparameters
    const std::string manifest = testsupport::read_file(dir.file("training.json.manifest.json"));
    CHECK(manifest.find("2e-05") != std::string::npos);
    CHECK(manifest.find("\"batch_size\": 64") != std::string::npos);
    CHECK(manifest.find("\"epochs\": 3") != std::string::npos);
    CHECK(manifest.find("cosine") != std::string::npos);
    CHECK(manifest.find("0.1") != std::string::npos);
}

TEST_CASE("export refuses empty triple list") {
    TempDir dir;
    CHECK_THROWS_AS(corpus::export_training_file({}, dir.file("x.json"),
                                                 corpus::default_manifest(TaskKind::FactCheck)),
                    IoFailure);
}

TEST_CASE("per-task training manifests follow the published settings") {
    CHECK(corpus::default_manifest(TaskKind::FactCheck).batch_size == 64);
    CHECK(corpus::default_manifest(TaskKind::TableQA).epochs == 10);
    CHECK(corpus::default_manifest(TaskKind::MedicalMCQ).epochs == 3);
    CHECK(corpus::default_manifest(TaskKind::ScienceMCQ).epochs == 5);
    CHECK(corpus::default_manifest(TaskKind::TableQA).peak_learning_rate == 2e-5);
    CHECK(corpus::default_manifest(TaskKind::ScienceMCQ).warmup_ratio == 0.1);
}
