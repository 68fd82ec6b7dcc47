#ifndef ESSAY_AUDIT_BOOSTING_HPP
#define ESSAY_AUDIT_BOOSTING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "essay_audit/core.hpp"
#include "essay_audit/matrix.hpp"

namespace essay_audit::gbm {

struct Config {
    double learning_rate = 0.1;
    int max_iterations = 100;
    int max_leaf_nodes = 30;
    int max_depth = 3;
    int min_samples_leaf = 20;
    int n_bins = 256;
    double leaf_regularization = 1.0;
    bool balanced_class_weights = false;
    std::uint64_t seed = 0;
    bool parallel = true;

    void validate() const;
};

// Per-feature quantile cut points. A value v lands in the first bin whose
// threshold is >= v; values above every threshold land in the last real bin;
// NaN lands in the dedicated missing bin (index thresholds.size() + 1).
struct BinMap {
    struct FeatureBins {
        std::vector<double> thresholds;  // strictly increasing
        int real_bins() const { return static_cast<int>(thresholds.size()) + 1; }
        int missing_bin() const { return real_bins(); }
        int total_bins() const { return real_bins() + 1; }
    };
    std::vector<FeatureBins> features;
    int n_bins = 256;

    int bin_value(std::size_t feature, double value) const;
};

struct BinnedMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint16_t> data;  // column-major

    std::uint16_t bin(std::size_t r, std::size_t f) const { return data[f * rows + r]; }
};

struct Binned {
    BinMap map;
    BinnedMatrix matrix;
};

Binned bin_features(const Matrix& X, const Config& config);
BinnedMatrix bin_transform(const BinMap& map, const Matrix& X);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    int bin = -1;      // split threshold index: bin <= this goes left
    bool missing_left = false;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf value, already scaled by the learning rate
};

struct Tree {
    std::vector<TreeNode> nodes;  // root at index 0

    int leaf_count() const;
    int depth() const;
    bool uses_feature(int feature) const;
    double predict_binned(const BinnedMatrix& bx, std::size_t row, const BinMap& map) const;
};

struct Model {
    enum class Task { classifier, regressor };
    Task task = Task::regressor;
    BinMap bin_map;
    std::vector<int> class_labels;  // classifier only, sorted ascending
    std::vector<double> base;       // K values (log priors) or 1 value (target mean)
    std::vector<std::vector<Tree>> iterations;  // [iter][class] or [iter][0]
    Config config;
    std::vector<double> training_loss;  // per-iteration loss after the update

    std::size_t n_features() const { return bin_map.features.size(); }
};

Model fit_classifier(const Matrix& X, const std::vector<int>& y, const Config& config);
Model fit_regressor(const Matrix& X, const std::vector<double>& y, const Config& config);

// Raw additive scores: n x K for classifiers, n x 1 for regressors.
Matrix predict_raw(const Model& model, const Matrix& X);
Matrix predict_proba(const Model& model, const Matrix& X);
// Classifier: argmax label, ties broken toward the lower label.
std::vector<int> predict_labels(const Model& model, const Matrix& X);
// Regressor: raw real-valued predictions.
std::vector<double> predict_values(const Model& model, const Matrix& X);
// Scores on the scale: classifier labels, or regressor values rounded
// half-away-from-zero and clipped.
std::vector<int> predict_scores(const Model& model, const Matrix& X, const ScoreScale& scale);

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

// Exposed histogram kernel, for tests and the benchmark. `offsets[f]` is the
// start of feature f's bins in `out`; the OpenMP version must match the serial
// one bit-for-bit.
struct HistBin {
    double sum_g = 0.0;
    double sum_h = 0.0;
    std::int64_t count = 0;
};
void build_histograms(const BinnedMatrix& bx, const std::uint32_t* row_begin,
                      const std::uint32_t* row_end, const std::vector<double>& g,
                      const std::vector<double>& h, const std::vector<std::size_t>& offsets,
                      std::vector<HistBin>& out, bool parallel);
void build_histograms_serial(const BinnedMatrix& bx, const std::uint32_t* row_begin,
                             const std::uint32_t* row_end, const std::vector<double>& g,
                             const std::vector<double>& h, const std::vector<std::size_t>& offsets,
                             std::vector<HistBin>& out);

}  // namespace essay_audit::gbm

#endif
