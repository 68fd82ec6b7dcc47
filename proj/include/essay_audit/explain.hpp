#ifndef ESSAY_AUDIT_EXPLAIN_HPP
#define ESSAY_AUDIT_EXPLAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "essay_audit/boosting.hpp"
#include "essay_audit/core.hpp"
#include "essay_audit/matrix.hpp"

namespace essay_audit::explain {

// Scalar view of a model's output used by all attribution methods: the raw
// prediction for regressors, the probability-weighted expected label for
// classifiers.
double scalar_output(const gbm::Model& model, const Matrix& X, std::size_t row);
std::vector<double> scalar_outputs(const gbm::Model& model, const Matrix& X);

enum class ImportanceMetric { qwk, accuracy, r_squared };

struct FeatureImportance {
    int feature = 0;
    double mean_drop = 0.0;
    double std_dev = 0.0;
    int rank = 0;  // 1 = most important
};

struct ImportanceReport {
    std::vector<FeatureImportance> features;
    std::string metric_name;
    double baseline_metric = 0.0;
    int repeats = 0;
    std::uint64_t seed = 0;
};

ImportanceReport permutation_importance(const gbm::Model& model, const Matrix& X,
                                        const std::vector<double>& y, ImportanceMetric metric,
                                        int repeats, std::uint64_t seed, bool parallel = true);

struct AttributionVector {
    std::vector<double> attributions;  // per feature
    double baseline = 0.0;             // mean model output over the background
    double output = 0.0;               // model output at x
};

// Monte-Carlo permutation Shapley estimator with background-row imputation.
AttributionVector shapley_sample(const gbm::Model& model, const std::vector<double>& x,
                                 const Matrix& background, int n_samples, std::uint64_t seed,
                                 bool parallel = true);

struct SurrogateExplanation {
    std::vector<std::pair<int, double>> top_features;  // (feature, signed weight), by |weight|
    double intercept = 0.0;
    double fidelity_r_squared = 0.0;
    double kernel_width = 0.0;
    int n_perturbations = 0;
};

// Local linear surrogate: seeded Gaussian perturbations scaled per feature,
// distance-kernel-weighted least squares on model outputs.
SurrogateExplanation local_surrogate(const gbm::Model& model, const std::vector<double>& x,
                                     const std::vector<double>& feature_scales,
                                     int n_perturbations, double kernel_width, int top_k,
                                     std::uint64_t seed);

void export_importance_csv(const std::string& path, const ImportanceReport& report,
                           const std::vector<std::string>& feature_names);

}  // namespace essay_audit::explain

#endif
