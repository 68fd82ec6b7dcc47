#include "essay_audit/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "essay_audit/fairness.hpp"
#include "essay_audit/metrics.hpp"
#include "essay_audit/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace essay_audit::explain {

double scalar_output(const gbm::Model& model, const Matrix& X, std::size_t row) {
    Matrix one(1, X.cols);
    for (std::size_t c = 0; c < X.cols; ++c) one.at(0, c) = X.at(row, c);
    return scalar_outputs(model, one)[0];
}

std::vector<double> scalar_outputs(const gbm::Model& model, const Matrix& X) {
    std::vector<double> out(X.rows);
    if (model.task == gbm::Model::Task::regressor) {
        return gbm::predict_values(model, X);
    }
    Matrix proba = gbm::predict_proba(model, X);
    for (std::size_t r = 0; r < X.rows; ++r) {
        double expectation = 0.0;
        for (std::size_t k = 0; k < proba.cols; ++k)
            expectation += proba.at(r, k) * model.class_labels[k];
        out[r] = expectation;
    }
    return out;
}

namespace {

double accuracy_metric(const std::vector<int>& pred, const std::vector<double>& y) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == static_cast<int>(y[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double qwk_metric(const std::vector<int>& pred, const std::vector<double>& y) {
    int lo = static_cast<int>(y[0]), hi = lo;
    for (std::size_t i = 0; i < y.size(); ++i) {
        lo = std::min({lo, static_cast<int>(y[i]), pred[i]});
        hi = std::max({hi, static_cast<int>(y[i]), pred[i]});
    }
    if (lo == hi) return 1.0;
    ScoreScale scale(lo, hi);
    std::vector<PredictionRecord> recs(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        recs[i].true_score = static_cast<int>(y[i]);
        recs[i].predicted_score = pred[i];
    }
    return quadratic_weighted_kappa(build_confusion_matrix(recs, scale)).kappa;
}

double r2_metric(const std::vector<double>& pred, const std::vector<double>& y) {
    double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - pred[i]) * (y[i] - pred[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (ss_tot <= 0.0) return 0.0;
    return 1.0 - ss_res / ss_tot;
}

double evaluate_metric(const gbm::Model& model, const Matrix& X, const std::vector<double>& y,
                       ImportanceMetric metric) {
    switch (metric) {
        case ImportanceMetric::qwk:
            return qwk_metric(gbm::predict_labels(model, X), y);
        case ImportanceMetric::accuracy:
            return accuracy_metric(gbm::predict_labels(model, X), y);
        case ImportanceMetric::r_squared:
            return r2_metric(gbm::predict_values(model, X), y);
    }
    throw AuditError("unknown importance metric");
}

const char* metric_name(ImportanceMetric m) {
    switch (m) {
        case ImportanceMetric::qwk: return "qwk";
        case ImportanceMetric::accuracy: return "accuracy";
        case ImportanceMetric::r_squared: return "r_squared";
    }
    return "?";
}

}  // namespace

ImportanceReport permutation_importance(const gbm::Model& model, const Matrix& X,
                                        const std::vector<double>& y, ImportanceMetric metric,
                                        int repeats, std::uint64_t seed, bool parallel) {
    if (X.rows < 2) throw AuditError("permutation_importance: need at least 2 rows");
    if (y.size() != X.rows) throw AuditError("permutation_importance: X/y size mismatch");
    if (repeats < 1) throw AuditError("permutation_importance: repeats must be >= 1");

    ImportanceReport report;
    report.metric_name = metric_name(metric);
    report.repeats = repeats;
    report.seed = seed;
    report.baseline_metric = evaluate_metric(model, X, y, metric);

    const int n_features = static_cast<int>(X.cols);
    report.features.resize(n_features);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (int f = 0; f < n_features; ++f) {
        std::vector<double> drops(repeats);
        for (int r = 0; r < repeats; ++r) {
            Matrix shuffled = X;
            std::vector<double> column(X.rows);
            for (std::size_t i = 0; i < X.rows; ++i) column[i] = X.at(i, f);
            auto rng = make_rng(seed, static_cast<std::uint64_t>(f) * repeats + r);
            std::shuffle(column.begin(), column.end(), rng);
            for (std::size_t i = 0; i < X.rows; ++i) shuffled.at(i, f) = column[i];
            drops[r] = report.baseline_metric - evaluate_metric(model, shuffled, y, metric);
        }
        double mean = std::accumulate(drops.begin(), drops.end(), 0.0) / repeats;
        double var = 0.0;
        for (double d : drops) var += (d - mean) * (d - mean);
        FeatureImportance& fi = report.features[f];
        fi.feature = f;
        fi.mean_drop = mean;
        fi.std_dev = repeats > 1 ? std::sqrt(var / (repeats - 1)) : 0.0;
    }

    std::vector<int> order(n_features);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return report.features[a].mean_drop > report.features[b].mean_drop;
    });
    for (int rank = 0; rank < n_features; ++rank) report.features[order[rank]].rank = rank + 1;
    return report;
}

AttributionVector shapley_sample(const gbm::Model& model, const std::vector<double>& x,
                                 const Matrix& background, int n_samples, std::uint64_t seed,
                                 bool parallel) {
    if (n_samples < 1) throw AuditError("shapley_sample: n_samples must be >= 1");
    if (background.rows == 0) throw AuditError("shapley_sample: empty background");
    if (x.size() != background.cols) throw AuditError("shapley_sample: feature arity mismatch");

    const std::size_t p = x.size();
    AttributionVector result;
    result.attributions.assign(p, 0.0);

    std::vector<double> bg_outputs = scalar_outputs(model, background);
    result.baseline =
        std::accumulate(bg_outputs.begin(), bg_outputs.end(), 0.0) / background.rows;
    Matrix x_row(1, p);
    for (std::size_t c = 0; c < p; ++c) x_row.at(0, c) = x[c];
    result.output = scalar_outputs(model, x_row)[0];

    // Per-sample contributions are stored and reduced in sample order so the
    // result does not depend on thread scheduling.
    std::vector<double> contrib(static_cast<std::size_t>(n_samples) * p, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (int s = 0; s < n_samples; ++s) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(s));
        std::size_t bg = std::uniform_int_distribution<std::size_t>(0, background.rows - 1)(rng);
        std::vector<std::size_t> order(p);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);

        Matrix z(1, p);
        for (std::size_t c = 0; c < p; ++c) z.at(0, c) = background.at(bg, c);
        double prev = scalar_outputs(model, z)[0];
        for (std::size_t f : order) {
            z.at(0, f) = x[f];
            double cur = scalar_outputs(model, z)[0];
            contrib[static_cast<std::size_t>(s) * p + f] = cur - prev;
            prev = cur;
        }
    }
    for (int s = 0; s < n_samples; ++s)
        for (std::size_t f = 0; f < p; ++f)
            result.attributions[f] += contrib[static_cast<std::size_t>(s) * p + f];
    for (double& a : result.attributions) a /= n_samples;
    return result;
}

SurrogateExplanation local_surrogate(const gbm::Model& model, const std::vector<double>& x,
                                     const std::vector<double>& feature_scales,
                                     int n_perturbations, double kernel_width, int top_k,
                                     std::uint64_t seed) {
    if (n_perturbations < 2) throw AuditError("local_surrogate: need at least 2 perturbations");
    if (!(kernel_width > 0.0)) throw AuditError("local_surrogate: kernel width must be > 0");
    if (feature_scales.size() != x.size())
        throw AuditError("local_surrogate: feature_scales arity mismatch");

    std::vector<std::size_t> active;
    for (std::size_t f = 0; f < feature_scales.size(); ++f)
        if (feature_scales[f] > 0.0) active.push_back(f);
    if (active.empty()) throw AuditError("local_surrogate: zero noise scale on every feature");

    const std::size_t p = x.size();
    Matrix samples(n_perturbations, p);
    std::vector<double> weights(n_perturbations);
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n_perturbations; ++i) {
        double dist_sq = 0.0;
        for (std::size_t f = 0; f < p; ++f) {
            double noise = feature_scales[f] > 0.0 ? gauss(rng) : 0.0;
            samples.at(i, f) = x[f] + noise * feature_scales[f];
            dist_sq += noise * noise;  // scale-normalized distance
        }
        weights[i] = std::exp(-dist_sq / (kernel_width * kernel_width));
    }
    std::vector<double> outputs = scalar_outputs(model, samples);

    // weighted least squares on intercept + active features
    const std::size_t n_cols = 1 + active.size();
    std::vector<double> design(static_cast<std::size_t>(n_perturbations) * n_cols);
    for (int i = 0; i < n_perturbations; ++i) {
        design[i * n_cols] = 1.0;
        for (std::size_t a = 0; a < active.size(); ++a)
            design[i * n_cols + 1 + a] = samples.at(i, active[a]);
    }
    OlsResult fit = ols_fit(design, n_perturbations, n_cols, outputs, &weights);

    SurrogateExplanation result;
    result.intercept = fit.coefficients[0];
    result.fidelity_r_squared = fit.r_squared;
    result.kernel_width = kernel_width;
    result.n_perturbations = n_perturbations;

    std::vector<std::pair<int, double>> ranked;
    for (std::size_t a = 0; a < active.size(); ++a)
        ranked.emplace_back(static_cast<int>(active[a]), fit.coefficients[1 + a]);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& lhs, const auto& rhs) {
        return std::abs(lhs.second) > std::abs(rhs.second);
    });
    if (static_cast<int>(ranked.size()) > top_k) ranked.resize(top_k);
    result.top_features = std::move(ranked);
    return result;
}

void export_importance_csv(const std::string& path, const ImportanceReport& report,
                           const std::vector<std::string>& feature_names) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AuditError("cannot write file: " + path);
    out << "feature,mean_drop,std_dev,rank\n";
    for (const auto& fi : report.features) {
        std::string name = fi.feature < static_cast<int>(feature_names.size())
                               ? feature_names[fi.feature]
                               : "f" + std::to_string(fi.feature);
        char buf[80];
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%d", fi.mean_drop, fi.std_dev, fi.rank);
        out << name << ',' << buf << '\n';
    }
}

}  // namespace essay_audit::explain
