#include "essay_audit/metrics.hpp"

#include <cmath>
#include <fstream>

namespace essay_audit {

std::int64_t ConfusionMatrix::row_marginal(int i) const {
    std::int64_t s = 0;
    for (auto v : counts[i]) s += v;
    return s;
}

std::int64_t ConfusionMatrix::col_marginal(int j) const {
    std::int64_t s = 0;
    for (const auto& row : counts) s += row[j];
    return s;
}

ConfusionMatrix build_confusion_matrix(const std::vector<PredictionRecord>& preds,
                                       const ScoreScale& scale) {
    if (preds.empty()) throw AuditError("build_confusion_matrix: empty prediction set");
    ConfusionMatrix cm(scale);
    for (const auto& p : preds) {
        if (!scale.contains(p.true_score) || !scale.contains(p.predicted_score))
            throw AuditError("build_confusion_matrix: score outside scale for essay '" + p.essay_id + "'");
        ++cm.counts[scale.index(p.true_score)][scale.index(p.predicted_score)];
        ++cm.total;
    }
    return cm;
}

KappaResult quadratic_weighted_kappa(const ConfusionMatrix& cm) {
    if (cm.total <= 0) throw AuditError("quadratic_weighted_kappa: empty confusion matrix");
    const int n = cm.scale.categories();
    const double denom_w = static_cast<double>(n - 1) * (n - 1);
    const double total = static_cast<double>(cm.total);

    std::vector<double> row_m(n), col_m(n);
    for (int i = 0; i < n; ++i) row_m[i] = static_cast<double>(cm.row_marginal(i));
    for (int j = 0; j < n; ++j) col_m[j] = static_cast<double>(cm.col_marginal(j));

    KappaResult result;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double w = static_cast<double>(i - j) * (i - j) / denom_w;
            result.numerator += w * static_cast<double>(cm.counts[i][j]);
            result.denominator += w * row_m[i] * col_m[j] / total;
        }
    }
    if (result.denominator == 0.0) {
        // Both marginals sit on one identical category: perfect agreement by construction.
        result.kappa = 1.0;
        result.degenerate = true;
    } else {
        result.kappa = 1.0 - result.numerator / result.denominator;
    }
    return result;
}

std::string interpret_kappa(double kappa) {
    if (kappa > 1.0) throw AuditError("interpret_kappa: kappa above 1");
    if (kappa <= 0.0) return "poor";
    if (kappa <= 0.20) return "slight";
    if (kappa <= 0.40) return "fair";
    if (kappa <= 0.60) return "moderate";
    if (kappa <= 0.80) return "substantial";
    return "almost perfect";
}

EdgeReport edge_robustness(const ConfusionMatrix& cm) {
    const int n = cm.scale.categories();
    EdgeReport report;
    report.min_edge_class = cm.scale.min_score;
    report.max_edge_class = cm.scale.max_score;
    report.per_class_recall.resize(n);
    report.per_class_support.resize(n);

    std::int64_t within_one = 0;
    for (int i = 0; i < n; ++i) {
        std::int64_t support = cm.row_marginal(i);
        report.per_class_support[i] = support;
        if (support > 0)
            report.per_class_recall[i] = static_cast<double>(cm.counts[i][i]) / static_cast<double>(support);
        for (int j = 0; j < n; ++j)
            if (std::abs(i - j) <= 1) within_one += cm.counts[i][j];
    }
    report.within_one_accuracy =
        cm.total > 0 ? static_cast<double>(within_one) / static_cast<double>(cm.total) : 0.0;
    return report;
}

void export_confusion_csv(const std::string& path, const ConfusionMatrix& cm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AuditError("cannot write file: " + path);
    const int n = cm.scale.categories();
    out << "true\\predicted";
    for (int j = 0; j < n; ++j) out << ',' << cm.scale.score_at(j);
    out << '\n';
    for (int i = 0; i < n; ++i) {
        out << cm.scale.score_at(i);
        for (int j = 0; j < n; ++j) out << ',' << cm.counts[i][j];
        out << '\n';
    }
}

}  // namespace essay_audit
