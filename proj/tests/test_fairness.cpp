#include <doctest.h>

#include <cmath>
#include <random>

#include "essay_audit/fairness.hpp"
#include "essay_audit/rng.hpp"

using namespace essay_audit;

namespace {

struct Sample {
    int true_score;
    int pred_score;
    std::string gender;
    std::string ell = "unknown";
};

void build(const std::vector<Sample>& samples, Corpus& corpus,
           std::vector<PredictionRecord>& preds) {
    corpus = Corpus{};
    preds.clear();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EssayRecord rec;
        rec.essay_id = "e" + std::to_string(i);
        rec.full_text = "x.";
        rec.holistic_score = samples[i].true_score;
        rec.demographics.gender = samples[i].gender;
        rec.demographics.ell_status = samples[i].ell;
        corpus.records.push_back(rec);
        PredictionRecord p;
        p.essay_id = rec.essay_id;
        p.true_score = samples[i].true_score;
        p.predicted_score = samples[i].pred_score;
        preds.push_back(p);
    }
}

// Counting oracle: recompute a group's TPR/FPR at class k by direct tallies.
std::pair<std::optional<double>, std::optional<double>> rate_oracle(
    const std::vector<Sample>& samples, const std::string& group, int k) {
    long tp = 0, pos = 0, fp = 0, neg = 0;
    for (const auto& s : samples) {
        if (s.gender != group) continue;
        if (s.true_score == k) {
            ++pos;
            if (s.pred_score == k) ++tp;
        } else {
            ++neg;
            if (s.pred_score == k) ++fp;
        }
    }
    std::pair<std::optional<double>, std::optional<double>> out;
    if (pos > 0) out.first = static_cast<double>(tp) / pos;
    if (neg > 0) out.second = static_cast<double>(fp) / neg;
    return out;
}

}  // namespace

TEST_CASE("group rates match the counting oracle") {
    std::vector<Sample> samples = {
        {3, 3, "M"}, {3, 2, "M"}, {2, 3, "M"}, {4, 3, "M"}, {3, 3, "M"},
        {3, 3, "F"}, {3, 3, "F"}, {2, 2, "F"}, {4, 4, "F"}, {2, 3, "F"}, {4, 3, "F"},
    };
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    ScoreScale scale(1, 6);
    GroupRates rates = group_rates(preds, partition_by(corpus.records, "gender"), scale);
    REQUIRE(rates.groups == std::vector<std::string>{"F", "M"});
    for (std::size_t g = 0; g < rates.groups.size(); ++g) {
        for (int k = scale.min_score; k <= scale.max_score; ++k) {
            auto [tpr, fpr] = rate_oracle(samples, rates.groups[g], k);
            const RateCell& cell = rates.cells[g][scale.index(k)];
            CHECK(cell.tpr.has_value() == tpr.has_value());
            if (tpr) CHECK(*cell.tpr == doctest::Approx(*tpr));
            CHECK(cell.fpr.has_value() == fpr.has_value());
            if (fpr) CHECK(*cell.fpr == doctest::Approx(*fpr));
        }
    }
    // class 3: TPR_M = 2/3, TPR_F = 2/2; FPR_M = 2/2, FPR_F = 2/3
    const RateCell& m3 = rates.cells[1][scale.index(3)];
    CHECK(*m3.tpr == doctest::Approx(2.0 / 3.0));
    CHECK(*m3.fpr == doctest::Approx(1.0));
}

TEST_CASE("equal opportunity and equalized odds gaps, two groups") {
    std::vector<Sample> samples = {
        {3, 3, "M"}, {3, 2, "M"}, {2, 3, "M"}, {4, 3, "M"}, {3, 3, "M"},
        {3, 3, "F"}, {3, 3, "F"}, {2, 2, "F"}, {4, 4, "F"}, {2, 3, "F"}, {4, 3, "F"},
    };
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    ScoreScale scale(1, 6);
    GroupRates rates = group_rates(preds, partition_by(corpus.records, "gender"), scale);
    auto eo = equal_opportunity_gap(rates, 3);
    REQUIRE(eo.has_value());
    CHECK(*eo == doctest::Approx(std::abs(1.0 - 2.0 / 3.0)));
    OddsGapEntry odds = equalized_odds_gap(rates, 3);
    REQUIRE(odds.tpr_gap.has_value());
    REQUIRE(odds.fpr_gap.has_value());
    CHECK(*odds.tpr_gap == doctest::Approx(1.0 / 3.0));
    // FPR_M = 2/2, FPR_F = 2/4
    CHECK(*odds.fpr_gap == doctest::Approx(0.5));
    CHECK(*odds.eo_gap == doctest::Approx(std::max(*odds.tpr_gap, *odds.fpr_gap)));
}

TEST_CASE("undefined rates are surfaced, not imputed") {
    // No F essay has true score 4, so TPR_F(4) is undefined.
    std::vector<Sample> samples = {
        {4, 4, "M"}, {4, 3, "M"}, {3, 3, "M"}, {3, 3, "F"}, {2, 2, "F"}, {2, 3, "F"},
    };
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    ScoreScale scale(1, 6);
    GroupRates rates = group_rates(preds, partition_by(corpus.records, "gender"), scale);
    const RateCell& f4 = rates.cells[0][scale.index(4)];
    CHECK_FALSE(f4.tpr.has_value());
    CHECK(f4.positive_support == 0);
    auto eo = equal_opportunity_gap(rates, 4);
    CHECK_FALSE(eo.has_value());
    OddsGapEntry odds = equalized_odds_gap(rates, 4);
    CHECK_FALSE(odds.tpr_gap.has_value());
    CHECK(odds.fpr_gap.has_value());  // both groups have negatives at class 4
    CHECK_FALSE(odds.eo_gap.has_value());
}

TEST_CASE("more than two groups takes the max pairwise gap") {
    // TPRs at class 3: A=1.0 (2/2), B=0.5 (1/2), C=0.0 (0/2) -> gap 1.0
    std::vector<Sample> samples = {
        {3, 3, "A"}, {3, 3, "A"}, {3, 3, "B"}, {3, 2, "B"}, {3, 2, "C"}, {3, 1, "C"},
        {2, 2, "A"}, {2, 2, "B"}, {2, 2, "C"},
    };
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    ScoreScale scale(1, 6);
    GroupRates rates = group_rates(preds, partition_by(corpus.records, "gender"), scale);
    REQUIRE(rates.groups.size() == 3);
    auto eo = equal_opportunity_gap(rates, 3);
    REQUIRE(eo.has_value());
    CHECK(*eo == doctest::Approx(1.0));
}

TEST_CASE("design matrix drops one reference level per attribute") {
    std::vector<Sample> samples = {
        {3, 3, "M", "yes"}, {3, 2, "F", "no"}, {2, 2, "F", "yes"}, {4, 4, "M", "no"},
    };
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    DesignMatrix X = build_design_matrix(preds, corpus, {"gender", "ell_status"});
    // intercept + (gender: M, ref F) + (ell: yes, ref no)
    REQUIRE(X.column_names.size() == 3);
    CHECK(X.column_names[0] == "intercept");
    CHECK(X.n_rows == 4);
    for (std::size_t r = 0; r < X.n_rows; ++r) CHECK(X.at(r, 0) == 1.0);
    // column sums reflect level counts: two M rows, two ell=yes rows
    double m_sum = 0, ell_sum = 0;
    for (std::size_t r = 0; r < X.n_rows; ++r) {
        m_sum += X.at(r, 1);
        ell_sum += X.at(r, 2);
    }
    CHECK(m_sum == doctest::Approx(2.0));
    CHECK(ell_sum == doctest::Approx(2.0));
}

TEST_CASE("design matrix excludes single-level attributes with a warning") {
    std::vector<Sample> samples = {{3, 3, "M", "yes"}, {3, 2, "F", "yes"}, {2, 2, "F", "yes"}};
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    DesignMatrix X = build_design_matrix(preds, corpus, {"gender", "ell_status"});
    CHECK(X.excluded_attributes == std::vector<std::string>{"ell_status"});
    REQUIRE(X.column_names.size() == 2);  // intercept + gender M
}

TEST_CASE("ols recovers coefficients of an exact linear system") {
    // y = 2 + 3*x1 - x2, no noise; hand-checkable design
    std::vector<double> X = {
        1, 0, 0,
        1, 1, 0,
        1, 0, 1,
        1, 1, 1,
        1, 2, 1,
    };
    std::vector<double> y = {2, 5, 1, 4, 7};
    OlsResult fit = ols_fit(X, 5, 3, y);
    REQUIRE(fit.coefficients.size() == 3);
    CHECK(fit.coefficients[0] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.coefficients[1] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(fit.coefficients[2] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(fit.ridged);
}

TEST_CASE("ols R^2 matches a hand-solved two-group mean model") {
    // One binary regressor: fit is the two group means. Group 0: {1, 3}
    // mean 2; group 1: {4, 8} mean 6. SS_res = 2+8 = 10; grand mean 4,
    // SS_tot = 9+1+0+16 = 26; R^2 = 1 - 10/26 = 8/13.
    std::vector<double> X = {1, 0, 1, 0, 1, 1, 1, 1};
    std::vector<double> y = {1, 3, 4, 8};
    OlsResult fit = ols_fit(X, 4, 2, y);
    CHECK(fit.coefficients[0] == doctest::Approx(2.0));
    CHECK(fit.coefficients[1] == doctest::Approx(4.0));
    CHECK(fit.r_squared == doctest::Approx(8.0 / 13.0).epsilon(1e-12));
}

TEST_CASE("ols handles constant target and collinear columns") {
    std::vector<double> Xc = {1, 0, 1, 1, 1, 0, 1, 1};
    std::vector<double> yc = {5, 5, 5, 5};
    OlsResult fit = ols_fit(Xc, 4, 2, yc);
    CHECK(fit.constant_target);
    CHECK(fit.r_squared == doctest::Approx(0.0));

    // duplicate column -> singular Gram matrix, ridge fallback
    std::vector<double> Xs = {1, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0};
    std::vector<double> ys = {2, 3, 1, 2};
    OlsResult sing = ols_fit(Xs, 4, 3, ys);
    CHECK(sing.ridged);
    CHECK(std::isfinite(sing.r_squared));
    CHECK(sing.r_squared >= 0.0);
    CHECK(sing.r_squared <= 1.0);
}

TEST_CASE("weighted ols reproduces replication") {
    // Weighting a row by 3 must equal physically repeating it 3 times.
    std::vector<double> X = {1, 0, 1, 1, 1, 2};
    std::vector<double> y = {1, 2, 5};
    std::vector<double> w = {3, 1, 1};
    OlsResult weighted = ols_fit(X, 3, 2, y, &w);
    std::vector<double> Xr = {1, 0, 1, 0, 1, 0, 1, 1, 1, 2};
    std::vector<double> yr = {1, 1, 1, 2, 5};
    OlsResult repl = ols_fit(Xr, 5, 2, yr);
    CHECK(weighted.coefficients[0] == doctest::Approx(repl.coefficients[0]).epsilon(1e-9));
    CHECK(weighted.coefficients[1] == doctest::Approx(repl.coefficients[1]).epsilon(1e-9));
}

TEST_CASE("osa detects a group with inflated squared error") {
    // Group M gets noisy scores, group F near-exact: R^2 should be material
    // and the permutation p-value small.
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> score(1, 6);
    std::vector<Sample> samples;
    for (int i = 0; i < 150; ++i) {
        int t = score(rng);
        Sample s;
        s.true_score = t;
        s.gender = (i % 2 == 0) ? "M" : "F";
        if (s.gender == "M") {
            int shift = (i % 4 < 2) ? 2 : -2;
            s.pred_score = std::clamp(t + shift, 1, 6);
        } else {
            s.pred_score = t;
        }
        samples.push_back(s);
    }
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    PermutationConfig perm{1000, 7, true};
    RegressionFairnessResult r = osa(preds, corpus, {"gender"}, perm);
    CHECK(r.kind == RegressionFairnessKind::osa);
    CHECK(r.n == 150);
    CHECK(r.r_squared > 0.3);
    CHECK(r.permutation_p_value < 0.01);
}

TEST_CASE("osa p-value is large when errors are independent of groups") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> score(1, 6);
    std::uniform_int_distribution<int> noise(-1, 1);
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<Sample> samples;
    for (int i = 0; i < 200; ++i) {
        int t = score(rng);
        Sample s;
        s.true_score = t;
        s.pred_score = std::clamp(t + noise(rng), 1, 6);
        s.gender = coin(rng) ? "M" : "F";
        samples.push_back(s);
    }
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    PermutationConfig perm{1000, 3, true};
    RegressionFairnessResult r = osa(preds, corpus, {"gender"}, perm);
    CHECK(r.r_squared < 0.05);
    // not significant at the 1% level (the exact p depends on the fixed seed)
    CHECK(r.permutation_p_value > 0.01);
}

TEST_CASE("osd sees signed bias that osa-style magnitude checks would blur") {
    // M consistently +1, F consistently -1: large signed separation.
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> score(2, 5);
    std::vector<Sample> samples;
    for (int i = 0; i < 120; ++i) {
        int t = score(rng);
        Sample s;
        s.true_score = t;
        s.gender = (i % 2 == 0) ? "M" : "F";
        s.pred_score = t + (s.gender == "M" ? 1 : -1);
        samples.push_back(s);
    }
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    PermutationConfig perm{1000, 21, true};
    RegressionFairnessResult d = osd(preds, corpus, {"gender"}, perm);
    CHECK(d.kind == RegressionFairnessKind::osd);
    CHECK(d.r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.permutation_p_value < 0.01);
    // OSA sees identical squared error (always 1) for both groups.
    RegressionFairnessResult a = osa(preds, corpus, {"gender"}, perm);
    CHECK(a.constant_target);
    CHECK(a.r_squared == doctest::Approx(0.0));
}

TEST_CASE("permutation test is deterministic and parallel matches serial") {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<int> score(1, 6);
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<Sample> samples;
    for (int i = 0; i < 80; ++i) {
        int t = score(rng);
        Sample s;
        s.true_score = t;
        s.pred_score = std::clamp(t + (coin(rng) ? 1 : -1), 1, 6);
        s.gender = coin(rng) ? "M" : "F";
        s.ell = coin(rng) ? "yes" : "no";
        samples.push_back(s);
    }
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    PermutationConfig serial{500, 42, false};
    PermutationConfig parallel{500, 42, true};
    RegressionFairnessResult a = osa(preds, corpus, {"gender", "ell_status"}, serial);
    RegressionFairnessResult b = osa(preds, corpus, {"gender", "ell_status"}, parallel);
    RegressionFairnessResult c = osa(preds, corpus, {"gender", "ell_status"}, parallel);
    CHECK(a.permutation_p_value == b.permutation_p_value);
    CHECK(b.permutation_p_value == c.permutation_p_value);
    CHECK(a.r_squared == doctest::Approx(b.r_squared));
}

TEST_CASE("osa keeps unknown as its own regression level") {
    std::vector<Sample> samples = {
        {3, 4, "M"}, {3, 2, "F"}, {2, 2, "M"}, {4, 5, "F"},
        {3, 3, "unknown"}, {2, 4, "unknown"},
    };
    Corpus corpus;
    std::vector<PredictionRecord> preds;
    build(samples, corpus, preds);
    PermutationConfig perm{200, 1, false};
    RegressionFairnessResult r = osa(preds, corpus, {"gender"}, perm);
    CHECK(r.n == 6);
    // levels F (reference), M, unknown
    REQUIRE(r.coefficient_names.size() == 3);
    CHECK(r.coefficient_names[1] == "gender=M");
    CHECK(r.coefficient_names[2] == "gender=unknown");
}
