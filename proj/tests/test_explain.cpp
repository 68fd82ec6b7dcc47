#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "essay_audit/explain.hpp"
#include "essay_audit/rng.hpp"

using namespace essay_audit;
using namespace essay_audit::explain;

namespace {

// Regressor where only features 0 and 1 matter: y = 3*x0 - 2*x1.
gbm::Model linear_model(Matrix& X_out, std::vector<double>& y_out, std::size_t n = 400,
                        std::size_t n_features = 4) {
    auto rng = make_rng(33);
    std::uniform_real_distribution<double> uniform(-2.0, 2.0);
    Matrix X(n, n_features);
    for (double& v : X.data) v = uniform(rng);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 3.0 * X.at(i, 0) - 2.0 * X.at(i, 1);
    gbm::Config config;
    config.max_iterations = 120;
    config.min_samples_leaf = 5;
    gbm::Model model = gbm::fit_regressor(X, y, config);
    X_out = X;
    y_out = y;
    return model;
}

// Exact Shapley values by subset enumeration, with the background-mean value
// function the sampler estimates.
std::vector<double> shapley_exact(const gbm::Model& model, const std::vector<double>& x,
                                  const Matrix& background) {
    const std::size_t n = x.size();
    auto value = [&](unsigned mask) {
        double total = 0.0;
        for (std::size_t b = 0; b < background.rows; ++b) {
            Matrix composite(1, n);
            for (std::size_t f = 0; f < n; ++f)
                composite.at(0, f) = (mask >> f) & 1u ? x[f] : background.at(b, f);
            total += scalar_output(model, composite, 0);
        }
        return total / static_cast<double>(background.rows);
    };
    auto factorial = [](std::size_t k) {
        double r = 1.0;
        for (std::size_t i = 2; i <= k; ++i) r *= static_cast<double>(i);
        return r;
    };
    std::vector<double> phi(n, 0.0);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        std::size_t s = static_cast<std::size_t>(__builtin_popcount(mask));
        for (std::size_t f = 0; f < n; ++f) {
            if ((mask >> f) & 1u) continue;
            double weight = factorial(s) * factorial(n - s - 1) / factorial(n);
            phi[f] += weight * (value(mask | (1u << f)) - value(mask));
        }
    }
    return phi;
}

}  // namespace

TEST_CASE("scalar output of a classifier is the expected label") {
    // Two classes 1 and 5, cleanly separated on feature 0.
    Matrix X(200, 1);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        X.at(i, 0) = (i % 2 == 0) ? -1.0 : 1.0;
        y[i] = (i % 2 == 0) ? 1 : 5;
    }
    gbm::Config config;
    config.max_iterations = 30;
    config.min_samples_leaf = 5;
    gbm::Model model = gbm::fit_classifier(X, y, config);
    Matrix probe(2, 1);
    probe.at(0, 0) = -1.0;
    probe.at(1, 0) = 1.0;
    std::vector<double> out = scalar_outputs(model, probe);
    CHECK(out[0] == doctest::Approx(1.0).epsilon(0.05));
    CHECK(out[1] == doctest::Approx(5.0).epsilon(0.05));
    CHECK(scalar_output(model, probe, 0) == out[0]);
}

TEST_CASE("permutation importance: unused features score zero, used ones rank first") {
    Matrix X;
    std::vector<double> y;
    gbm::Model model = linear_model(X, y);
    ImportanceReport report =
        permutation_importance(model, X, y, ImportanceMetric::r_squared, 8, 17);
    REQUIRE(report.features.size() == 4);
    CHECK(report.metric_name == "r_squared");
    CHECK(report.baseline_metric > 0.95);
    auto by_feature = [&](int f) {
        for (const auto& fi : report.features)
            if (fi.feature == f) return fi;
        FAIL("feature not found");
        return FeatureImportance{};
    };
    CHECK(by_feature(0).rank == 1);
    CHECK(by_feature(1).rank == 2);
    CHECK(by_feature(0).mean_drop > by_feature(1).mean_drop);
    CHECK(by_feature(1).mean_drop > 0.1);
    // features 2,3 are never used by the trees -> exactly zero drop
    if (!model.iterations.empty()) {
        bool uses2 = false;
        for (const auto& iter : model.iterations)
            for (const auto& tree : iter) uses2 = uses2 || tree.uses_feature(2);
        if (!uses2) CHECK(by_feature(2).mean_drop == doctest::Approx(0.0));
    }
}

TEST_CASE("permutation importance is deterministic and parallel-invariant") {
    Matrix X;
    std::vector<double> y;
    gbm::Model model = linear_model(X, y, 200);
    ImportanceReport a = permutation_importance(model, X, y, ImportanceMetric::r_squared, 5, 3, true);
    ImportanceReport b = permutation_importance(model, X, y, ImportanceMetric::r_squared, 5, 3, true);
    ImportanceReport c =
        permutation_importance(model, X, y, ImportanceMetric::r_squared, 5, 3, false);
    REQUIRE(a.features.size() == b.features.size());
    for (std::size_t i = 0; i < a.features.size(); ++i) {
        CHECK(a.features[i].mean_drop == b.features[i].mean_drop);
        CHECK(a.features[i].mean_drop == c.features[i].mean_drop);
    }
}

TEST_CASE("permutation importance with qwk and accuracy metrics") {
    Matrix X(300, 2);
    std::vector<int> labels(300);
    auto rng = make_rng(8);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t i = 0; i < 300; ++i) {
        X.at(i, 0) = uniform(rng);
        X.at(i, 1) = uniform(rng);
        labels[i] = 1 + static_cast<int>(X.at(i, 0) * 3.999);
    }
    gbm::Config config;
    config.max_iterations = 40;
    config.min_samples_leaf = 5;
    gbm::Model model = gbm::fit_classifier(X, labels, config);
    std::vector<double> y(labels.begin(), labels.end());
    ImportanceReport qwk = permutation_importance(model, X, y, ImportanceMetric::qwk, 5, 11);
    ImportanceReport acc = permutation_importance(model, X, y, ImportanceMetric::accuracy, 5, 11);
    CHECK(qwk.metric_name == "qwk");
    CHECK(acc.metric_name == "accuracy");
    CHECK(qwk.baseline_metric > 0.8);
    CHECK(acc.baseline_metric > 0.8);
    // the signal feature dominates under both metrics
    CHECK(qwk.features[0].feature == 0);
    CHECK(acc.features[0].feature == 0);
}

TEST_CASE("monte-carlo shapley matches exact enumeration") {
    Matrix X;
    std::vector<double> y;
    gbm::Model model = linear_model(X, y, 300, 3);
    Matrix background(4, 3);
    auto rng = make_rng(91);
    std::uniform_real_distribution<double> uniform(-2.0, 2.0);
    for (double& v : background.data) v = uniform(rng);
    std::vector<double> x = {1.5, -1.0, 0.5};

    std::vector<double> exact = shapley_exact(model, x, background);
    AttributionVector mc = shapley_sample(model, x, background, 20000, 5);
    REQUIRE(mc.attributions.size() == 3);
    for (std::size_t f = 0; f < 3; ++f)
        CHECK(std::abs(mc.attributions[f] - exact[f]) < 0.08);

    // efficiency: attributions sum to output minus baseline
    double sum = 0.0;
    for (double v : mc.attributions) sum += v;
    CHECK(sum == doctest::Approx(mc.output - mc.baseline).epsilon(0.05));
}

TEST_CASE("shapley sampling is deterministic and parallel-invariant") {
    Matrix X;
    std::vector<double> y;
    gbm::Model model = linear_model(X, y, 200, 3);
    Matrix background(5, 3);
    auto rng = make_rng(6);
    std::uniform_real_distribution<double> uniform(-2.0, 2.0);
    for (double& v : background.data) v = uniform(rng);
    std::vector<double> x = {0.3, 0.7, -0.2};
    AttributionVector a = shapley_sample(model, x, background, 500, 42, true);
    AttributionVector b = shapley_sample(model, x, background, 500, 42, true);
    AttributionVector c = shapley_sample(model, x, background, 500, 42, false);
    for (std::size_t f = 0; f < 3; ++f) {
        CHECK(a.attributions[f] == b.attributions[f]);
        CHECK(a.attributions[f] == c.attributions[f]);
    }
}

TEST_CASE("local surrogate recovers the sign and dominance of the true slope") {
    Matrix X;
    std::vector<double> y;
    gbm::Model model = linear_model(X, y);
    std::vector<double> x = {0.5, -0.5, 0.0, 0.0};
    std::vector<double> scales = {1.0, 1.0, 1.0, 1.0};
    SurrogateExplanation exp = local_surrogate(model, x, scales, 2000, 0.75, 4, 13);
    REQUIRE_FALSE(exp.top_features.empty());
    CHECK(exp.top_features[0].first == 0);
    CHECK(exp.top_features[0].second > 0.0);  // slope of +3 direction
    bool found1 = false;
    for (const auto& [f, w] : exp.top_features)
        if (f == 1) {
            found1 = true;
            CHECK(w < 0.0);
        }
    CHECK(found1);
    CHECK(exp.fidelity_r_squared > 0.5);
    CHECK(exp.n_perturbations == 2000);
}

TEST_CASE("local surrogate respects top_k and is deterministic") {
    Matrix X;
    std::vector<double> y;
    gbm::Model model = linear_model(X, y, 200);
    std::vector<double> x = {0.0, 0.0, 0.0, 0.0};
    std::vector<double> scales = {1.0, 1.0, 1.0, 1.0};
    SurrogateExplanation a = local_surrogate(model, x, scales, 500, 1.0, 2, 7);
    SurrogateExplanation b = local_surrogate(model, x, scales, 500, 1.0, 2, 7);
    CHECK(a.top_features.size() <= 2);
    REQUIRE(a.top_features.size() == b.top_features.size());
    for (std::size_t i = 0; i < a.top_features.size(); ++i) {
        CHECK(a.top_features[i].first == b.top_features[i].first);
        CHECK(a.top_features[i].second == b.top_features[i].second);
    }
    // |weight| ordering
    for (std::size_t i = 1; i < a.top_features.size(); ++i)
        CHECK(std::abs(a.top_features[i - 1].second) >= std::abs(a.top_features[i].second));
}

TEST_CASE("importance csv export lists features by rank") {
    Matrix X;
    std::vector<double> y;
    gbm::Model model = linear_model(X, y, 200);
    ImportanceReport report =
        permutation_importance(model, X, y, ImportanceMetric::r_squared, 3, 1);
    std::string path = (std::filesystem::temp_directory_path() / "imp.csv").string();
    export_importance_csv(path, report, {"f0", "f1", "f2", "f3"});
    std::ifstream in(path);
    std::string header, first;
    REQUIRE(std::getline(in, header));
    REQUIRE(std::getline(in, first));
    CHECK(first.find("f0") != std::string::npos);  // top-ranked feature first
    int rows = 1;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);
}
