#ifndef ESSAY_AUDIT_METRICS_HPP
#define ESSAY_AUDIT_METRICS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "essay_audit/core.hpp"

namespace essay_audit {

struct ConfusionMatrix {
    ScoreScale scale;
    // counts[i][j]: true score (min+i) predicted as (min+j)
    std::vector<std::vector<std::int64_t>> counts;
    std::int64_t total = 0;

    explicit ConfusionMatrix(const ScoreScale& s)
        : scale(s), counts(s.categories(), std::vector<std::int64_t>(s.categories(), 0)) {}

    std::int64_t row_marginal(int i) const;
    std::int64_t col_marginal(int j) const;
};

struct KappaResult {
    double kappa = 0.0;
    double numerator = 0.0;    // sum w * O
    double denominator = 0.0;  // sum w * E
    bool degenerate = false;
};

struct EdgeReport {
    std::vector<std::optional<double>> per_class_recall;
    std::vector<std::int64_t> per_class_support;
    int min_edge_class;  // scale min score
    int max_edge_class;  // scale max score
    double within_one_accuracy = 0.0;
};

ConfusionMatrix build_confusion_matrix(const std::vector<PredictionRecord>& preds,
                                       const ScoreScale& scale);

KappaResult quadratic_weighted_kappa(const ConfusionMatrix& cm);

// Concordance label per the conventional kappa interpretation bands.
// Boundaries are upper-inclusive: (0.60, 0.80] -> "substantial".
std::string interpret_kappa(double kappa);

EdgeReport edge_robustness(const ConfusionMatrix& cm);

// row = true score, column = predicted score; first cell names the scale.
void export_confusion_csv(const std::string& path, const ConfusionMatrix& cm);

}  // namespace essay_audit

#endif
