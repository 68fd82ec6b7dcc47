#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "essay_audit/probe.hpp"
#include "essay_audit/rng.hpp"

using namespace essay_audit;
using namespace essay_audit::probe;

namespace {

EssayRecord make_record(int i, int score, const std::string& gender, const std::string& ell,
                        Split split) {
    EssayRecord rec;
    rec.essay_id = "e" + std::to_string(i);
    rec.full_text = "x.";
    rec.prompt_name = "P1";
    rec.holistic_score = score;
    rec.split = split;
    rec.demographics.gender = gender;
    rec.demographics.ell_status = ell;
    return rec;
}

// Scores fully determined by (gender, ell): the strongest possible leakage.
std::vector<EssayRecord> biased_records(std::size_t n) {
    std::vector<EssayRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
        std::string gender = (i % 2 == 0) ? "M" : "F";
        std::string ell = (i % 4 < 2) ? "yes" : "no";
        int score = 1 + static_cast<int>(i % 4);  // one score per cell
        Split split = (i % 5 == 4) ? Split::test : Split::train;
        records.push_back(make_record(static_cast<int>(i), score, gender, ell, split));
    }
    return records;
}

// Scores drawn independently of demographics.
std::vector<EssayRecord> independent_records(std::size_t n, std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::uniform_int_distribution<int> score(1, 6);
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<EssayRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
        Split split = (i % 5 == 4) ? Split::test : Split::train;
        records.push_back(make_record(static_cast<int>(i), score(rng), coin(rng) ? "M" : "F",
                                      coin(rng) ? "yes" : "no", split));
    }
    return records;
}

}  // namespace

TEST_CASE("demographic encoding is one-hot over all observed levels") {
    std::vector<EssayRecord> records;
    records.push_back(make_record(0, 3, "M", "yes", Split::train));
    records.push_back(make_record(1, 3, "F", "unknown", Split::train));
    records.push_back(make_record(2, 3, "F", "no", Split::train));
    EncodedDemographics enc = encode_demographics(records, {"gender", "ell_status"});
    // gender: F, M; ell_status: no, unknown, yes
    REQUIRE(enc.column_names.size() == 5);
    CHECK(enc.column_names[0] == "gender=F");
    CHECK(enc.column_names[1] == "gender=M");
    CHECK(enc.column_names[2] == "ell_status=no");
    CHECK(enc.column_names[3] == "ell_status=unknown");
    CHECK(enc.column_names[4] == "ell_status=yes");
    CHECK(enc.values.at(0, 1) == 1.0);
    CHECK(enc.values.at(0, 0) == 0.0);
    CHECK(enc.values.at(1, 3) == 1.0);
    CHECK(enc.values.at(2, 2) == 1.0);
    // exactly one indicator set per attribute per row
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(enc.values.at(r, 0) + enc.values.at(r, 1) == doctest::Approx(1.0));
        CHECK(enc.values.at(r, 2) + enc.values.at(r, 3) + enc.values.at(r, 4) ==
              doctest::Approx(1.0));
    }
}

TEST_CASE("encoding column order is independent of record order") {
    std::vector<EssayRecord> records;
    records.push_back(make_record(0, 3, "M", "yes", Split::train));
    records.push_back(make_record(1, 3, "F", "no", Split::train));
    EncodedDemographics a = encode_demographics(records, {"gender", "ell_status"});
    std::swap(records[0], records[1]);
    EncodedDemographics b = encode_demographics(records, {"gender", "ell_status"});
    CHECK(a.column_names == b.column_names);
}

TEST_CASE("probe finds leakage when demographics determine scores") {
    auto records = biased_records(400);
    gbm::Config config;
    config.max_iterations = 40;
    config.min_samples_leaf = 5;
    ProbeReport report = run_probe(records, ScoreScale(1, 6), config, SplitPolicy::dataset);
    CHECK(report.kappa > 0.95);
    CHECK(report.interpretation == "almost perfect");
    CHECK(report.n_train == 320);
    CHECK(report.n_test == 80);
    CHECK(report.split_policy == "dataset");
}

TEST_CASE("probe stays near zero on independent scores") {
    auto records = independent_records(600, 10);
    gbm::Config config;
    config.max_iterations = 40;
    config.min_samples_leaf = 5;
    ProbeReport report = run_probe(records, ScoreScale(1, 6), config, SplitPolicy::dataset);
    CHECK(std::abs(report.kappa) < 0.15);
}

TEST_CASE("stratified split policy is deterministic and covers every class") {
    auto records = biased_records(400);
    for (auto& r : records) r.split = Split::train;  // wipe the dataset split
    gbm::Config config;
    config.max_iterations = 30;
    config.min_samples_leaf = 5;
    config.seed = 9;
    ProbeReport a = run_probe(records, ScoreScale(1, 6), config, SplitPolicy::stratified_80_20);
    ProbeReport b = run_probe(records, ScoreScale(1, 6), config, SplitPolicy::stratified_80_20);
    CHECK(a.kappa == b.kappa);
    CHECK(a.split_policy == "stratified_80_20");
    CHECK(a.n_train + a.n_test == 400);
    double test_frac = static_cast<double>(a.n_test) / 400.0;
    CHECK(test_frac > 0.15);
    CHECK(test_frac < 0.25);
    CHECK(a.kappa > 0.95);  // leakage still detected through the stratified split
}

TEST_CASE("probe reports per-attribute column counts") {
    auto records = biased_records(100);
    gbm::Config config;
    config.max_iterations = 10;
    config.min_samples_leaf = 5;
    ProbeReport report = run_probe(records, ScoreScale(1, 6), config, SplitPolicy::dataset,
                                   {"gender", "ell_status"});
    REQUIRE(report.per_attribute_column_counts.size() == 2);
    CHECK(report.per_attribute_column_counts[0] == std::pair<std::string, int>{"gender", 2});
    CHECK(report.per_attribute_column_counts[1] == std::pair<std::string, int>{"ell_status", 2});
    CHECK(report.feature_columns.size() == 4);
}

TEST_CASE("probe csv export writes one row per prompt") {
    ProbeReport r1;
    r1.prompt_name = "P1";
    r1.kappa = 0.42;
    r1.interpretation = "moderate";
    ProbeReport r2;
    r2.prompt_name = "P2";
    r2.kappa = -0.01;
    r2.interpretation = "poor";
    std::string path = (std::filesystem::temp_directory_path() / "probe.csv").string();
    export_probe_csv(path, {r1, r2});
    std::ifstream in(path);
    std::string header, a, b;
    REQUIRE(std::getline(in, header));
    REQUIRE(std::getline(in, a));
    REQUIRE(std::getline(in, b));
    CHECK(a.rfind("P1,", 0) == 0);
    CHECK(b.rfind("P2,", 0) == 0);
    CHECK(a.find("moderate") != std::string::npos);
}
