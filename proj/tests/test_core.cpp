#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "essay_audit/core.hpp"
#include "essay_audit/csv.hpp"

using namespace essay_audit;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

const char* kCorpusCsv =
    "id,text,score,prompt,split,gender,grade\n"
    "e1,\"The cat sat. It was, frankly, bored.\",3,P1,train,M,8\n"
    "e2,Dogs bark loudly.,5,P1,test,F,9\n"
    "e3,Short essay text.,1,P1,train,F,8\n";

CorpusSchema test_schema() {
    CorpusSchema schema;
    schema.essay_id = "id";
    schema.full_text = "text";
    schema.holistic_score = "score";
    schema.prompt_name = "prompt";
    schema.split = "split";
    schema.gender = "gender";
    schema.grade_level = "grade";
    return schema;
}

}  // namespace

TEST_CASE("csv round-trips quoting") {
    csv::Table table;
    table.header = {"a", "b"};
    table.rows = {{"plain", "has,comma"}, {"has \"quote\"", "multi\nline"}};
    std::ostringstream ss;
    csv::write(ss, table);
    csv::Table back = csv::parse(ss.str());
    CHECK(back.header == table.header);
    CHECK(back.rows == table.rows);
}

TEST_CASE("csv rejects ragged rows") {
    CHECK_THROWS(csv::parse("a,b\n1,2,3\n"));
}

TEST_CASE("load_corpus parses a well-formed file") {
    std::string path = write_temp("corpus_ok.csv", kCorpusCsv);
    Corpus corpus = load_corpus(path, test_schema(), ScoreScale(1, 6));
    REQUIRE(corpus.records.size() == 3);
    CHECK(corpus.records[0].essay_id == "e1");
    CHECK(corpus.records[0].holistic_score == 3);
    CHECK(corpus.records[0].split == Split::train);
    CHECK(corpus.records[1].split == Split::test);
    CHECK(corpus.records[1].demographics.gender == "F");
    // no word_count column mapped: counted from text
    CHECK(corpus.records[1].word_count == 3);
    // label sets collected at ingestion
    auto genders = corpus.demographic_levels.at("gender");
    CHECK(std::find(genders.begin(), genders.end(), "M") != genders.end());
    CHECK(std::find(genders.begin(), genders.end(), "F") != genders.end());
}

TEST_CASE("load_corpus names a missing mapped column") {
    std::string path = write_temp("corpus_ok2.csv", kCorpusCsv);
    CorpusSchema schema = test_schema();
    schema.holistic_score = "holistic_score";
    CHECK_THROWS_WITH_AS(load_corpus(path, schema, ScoreScale(1, 6)),
                         doctest::Contains("holistic_score"), AuditError);
}

TEST_CASE("load_corpus cites the row of an out-of-scale score") {
    std::string body = "id,text,score\n";
    for (int i = 1; i <= 41; ++i)
        body += "e" + std::to_string(i) + ",text text.,3\n";
    body += "e42,text text.,7\n";
    std::string path = write_temp("corpus_bad_score.csv", body);
    CorpusSchema schema;
    schema.essay_id = "id";
    schema.full_text = "text";
    schema.holistic_score = "score";
    // row 42 of data is file row 43 (after the header)
    CHECK_THROWS_WITH_AS(load_corpus(path, schema, ScoreScale(1, 6)), doctest::Contains("43"),
                         AuditError);
}

TEST_CASE("load_corpus rejects duplicate ids and empty files") {
    std::string dup = write_temp("corpus_dup.csv", "id,text,score\ne1,a.,3\ne1,b.,4\n");
    CorpusSchema schema;
    schema.essay_id = "id";
    schema.full_text = "text";
    schema.holistic_score = "score";
    CHECK_THROWS_WITH_AS(load_corpus(dup, schema, ScoreScale(1, 6)), doctest::Contains("duplicate"),
                         AuditError);
    std::string empty = write_temp("corpus_empty.csv", "");
    CHECK_THROWS(load_corpus(empty, schema, ScoreScale(1, 6)));
}

TEST_CASE("corpus round-trip preserves every field") {
    std::string path = write_temp("corpus_rt.csv", kCorpusCsv);
    CorpusSchema schema = test_schema();
    ScoreScale scale(1, 6);
    Corpus corpus = load_corpus(path, schema, scale);
    std::string path2 = (std::filesystem::temp_directory_path() / "corpus_rt2.csv").string();
    save_corpus(path2, corpus, schema);
    Corpus back = load_corpus(path2, schema, scale);
    REQUIRE(back.records.size() == corpus.records.size());
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        CHECK(back.records[i].essay_id == corpus.records[i].essay_id);
        CHECK(back.records[i].full_text == corpus.records[i].full_text);
        CHECK(back.records[i].holistic_score == corpus.records[i].holistic_score);
        CHECK(back.records[i].split == corpus.records[i].split);
        CHECK(back.records[i].demographics.gender == corpus.records[i].demographics.gender);
    }
}

TEST_CASE("load_predictions handles optional columns") {
    std::string path =
        write_temp("preds1.csv", "essay_id,true_score,predicted_score\ne1,3,3\ne2,5,4\n");
    auto preds = load_predictions(path, ScoreScale(1, 6));
    REQUIRE(preds.size() == 2);
    CHECK(preds[0].predicted_score == 3);
    CHECK_FALSE(preds[0].confidence.has_value());
    CHECK_FALSE(preds[1].rationale.has_value());
}

TEST_CASE("load_predictions rejects bad confidence and scores") {
    ScoreScale scale(1, 6);
    std::string bad_conf = write_temp(
        "preds2.csv", "essay_id,true_score,predicted_score,confidence\ne1,3,3,1.3\n");
    CHECK_THROWS(load_predictions(bad_conf, scale));
    std::string bad_score =
        write_temp("preds3.csv", "essay_id,true_score,predicted_score\ne1,3,9\n");
    CHECK_THROWS(load_predictions(bad_score, scale));
    std::string non_int =
        write_temp("preds4.csv", "essay_id,true_score,predicted_score\ne1,3,3.5\n");
    CHECK_THROWS(load_predictions(non_int, scale));
}

TEST_CASE("load_predictions accepts header-only file") {
    std::string path = write_temp("preds5.csv", "essay_id,true_score,predicted_score\n");
    CHECK(load_predictions(path, ScoreScale(1, 6)).empty());
}

TEST_CASE("partition_by groups known labels and excludes unknowns") {
    std::vector<EssayRecord> records(5);
    const char* genders[] = {"M", "M", "F", "F", "unknown"};
    for (int i = 0; i < 5; ++i) {
        records[i].essay_id = "e" + std::to_string(i);
        records[i].demographics.gender = genders[i];
    }
    GroupPartition part = partition_by(records, "gender");
    CHECK(part.group_labels == std::vector<std::string>{"F", "M"});
    CHECK(part.assignment.size() == 4);
    CHECK(part.excluded_unknown == 1);
}

TEST_CASE("partition_by rejects degenerate partitions") {
    std::vector<EssayRecord> records(3);
    for (int i = 0; i < 3; ++i) {
        records[i].essay_id = "e" + std::to_string(i);
        records[i].demographics.gender = "unknown";
    }
    CHECK_THROWS(partition_by(records, "gender"));
}

TEST_CASE("partition_by is independent of record order") {
    std::vector<EssayRecord> records(20);
    std::mt19937 rng(5);
    for (int i = 0; i < 20; ++i) {
        records[i].essay_id = "e" + std::to_string(i);
        records[i].demographics.ell_status = (i % 3 == 0) ? "yes" : "no";
    }
    GroupPartition a = partition_by(records, "ell_status");
    std::shuffle(records.begin(), records.end(), rng);
    GroupPartition b = partition_by(records, "ell_status");
    CHECK(a.group_labels == b.group_labels);
    CHECK(a.assignment == b.assignment);
}
