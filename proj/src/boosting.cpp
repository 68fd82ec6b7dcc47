#include "essay_audit/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace essay_audit::gbm {

void Config::validate() const {
    if (!(learning_rate > 0.0)) throw AuditError("GBMConfig: learning_rate must be > 0");
    if (max_iterations < 1) throw AuditError("GBMConfig: max_iterations must be >= 1");
    if (max_leaf_nodes < 2) throw AuditError("GBMConfig: max_leaf_nodes must be >= 2");
    if (max_depth < 1) throw AuditError("GBMConfig: max_depth must be >= 1");
    if (min_samples_leaf < 1) throw AuditError("GBMConfig: min_samples_leaf must be >= 1");
    if (n_bins < 2 || n_bins > 256) throw AuditError("GBMConfig: n_bins must be in [2, 256]");
    if (!(leaf_regularization >= 0.0)) throw AuditError("GBMConfig: leaf_regularization must be >= 0");
}

int BinMap::bin_value(std::size_t feature, double value) const {
    const FeatureBins& fb = features[feature];
    if (std::isnan(value)) return fb.missing_bin();
    auto it = std::lower_bound(fb.thresholds.begin(), fb.thresholds.end(), value);
    return static_cast<int>(it - fb.thresholds.begin());
}

Binned bin_features(const Matrix& X, const Config& config) {
    config.validate();
    if (X.rows == 0) throw AuditError("bin_features: empty matrix");

    Binned binned;
    binned.map.n_bins = config.n_bins;
    binned.map.features.resize(X.cols);

    for (std::size_t f = 0; f < X.cols; ++f) {
        std::vector<double> finite;
        finite.reserve(X.rows);
        for (std::size_t r = 0; r < X.rows; ++r) {
            double v = X.at(r, f);
            if (std::isnan(v)) continue;
            if (!std::isfinite(v))
                throw AuditError("bin_features: non-finite value in feature " + std::to_string(f));
            finite.push_back(v);
        }
        std::sort(finite.begin(), finite.end());
        auto& thresholds = binned.map.features[f].thresholds;
        if (finite.size() >= 2) {
            std::vector<double> uniq = finite;
            uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
            if (uniq.size() <= static_cast<std::size_t>(config.n_bins)) {
                // One bin per distinct value: midpoints between neighbours.
                for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
                    thresholds.push_back((uniq[i] + uniq[i + 1]) / 2.0);
            } else {
                // Quantile cut points over the full (duplicated) sample.
                const std::size_t n = finite.size();
                for (int b = 1; b < config.n_bins; ++b) {
                    std::size_t idx = b * n / config.n_bins;
                    if (idx == 0 || idx >= n) continue;
                    if (finite[idx - 1] == finite[idx]) continue;
                    double cut = (finite[idx - 1] + finite[idx]) / 2.0;
                    if (thresholds.empty() || cut > thresholds.back()) thresholds.push_back(cut);
                }
            }
        }
    }
    binned.matrix = bin_transform(binned.map, X);
    return binned;
}

BinnedMatrix bin_transform(const BinMap& map, const Matrix& X) {
    if (X.cols != map.features.size())
        throw AuditError("bin_transform: column arity mismatch (" + std::to_string(X.cols) + " vs " +
                         std::to_string(map.features.size()) + ")");
    BinnedMatrix bx;
    bx.rows = X.rows;
    bx.cols = X.cols;
    bx.data.resize(X.rows * X.cols);
    for (std::size_t f = 0; f < X.cols; ++f)
        for (std::size_t r = 0; r < X.rows; ++r)
            bx.data[f * bx.rows + r] = static_cast<std::uint16_t>(map.bin_value(f, X.at(r, f)));
    return bx;
}

int Tree::leaf_count() const {
    int n = 0;
    for (const auto& node : nodes)
        if (node.feature < 0) ++n;
    return n;
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    int max_d = 0;
    while (!stack.empty()) {
        auto [id, d] = stack.back();
        stack.pop_back();
        max_d = std::max(max_d, d);
        const TreeNode& n = nodes[id];
        if (n.feature >= 0) {
            stack.push_back({n.left, d + 1});
            stack.push_back({n.right, d + 1});
        }
    }
    return max_d;
}

bool Tree::uses_feature(int feature) const {
    for (const auto& node : nodes)
        if (node.feature == feature) return true;
    return false;
}

double Tree::predict_binned(const BinnedMatrix& bx, std::size_t row, const BinMap& map) const {
    int id = 0;
    while (nodes[id].feature >= 0) {
        const TreeNode& n = nodes[id];
        int bin = bx.bin(row, static_cast<std::size_t>(n.feature));
        bool go_left;
        if (bin == map.features[static_cast<std::size_t>(n.feature)].missing_bin())
            go_left = n.missing_left;
        else
            go_left = bin <= n.bin;
        id = go_left ? n.left : n.right;
    }
    return nodes[id].value;
}

namespace {

struct Split {
    double gain = -std::numeric_limits<double>::infinity();
    int feature = -1;
    int bin = -1;
    bool missing_left = false;
    double left_g = 0.0, left_h = 0.0;
    std::int64_t left_count = 0;
    bool valid() const { return feature >= 0; }
};

struct FrontierLeaf {
    int node_id = -1;
    int depth = 0;
    std::size_t begin = 0, end = 0;  // range into the row index array
    double sum_g = 0.0, sum_h = 0.0;
    std::int64_t count = 0;
    std::vector<HistBin> hist;
    Split best;
};

double leaf_objective(double g, double h, double lambda) { return g * g / (h + lambda); }

}  // namespace

void build_histograms_serial(const BinnedMatrix& bx, const std::uint32_t* row_begin,
                             const std::uint32_t* row_end, const std::vector<double>& g,
                             const std::vector<double>& h, const std::vector<std::size_t>& offsets,
                             std::vector<HistBin>& out) {
    for (std::size_t f = 0; f < bx.cols; ++f) {
        HistBin* bins = &out[offsets[f]];
        const std::uint16_t* col = &bx.data[f * bx.rows];
        for (const std::uint32_t* it = row_begin; it != row_end; ++it) {
            std::uint32_t r = *it;
            HistBin& b = bins[col[r]];
            b.sum_g += g[r];
            b.sum_h += h[r];
            ++b.count;
        }
    }
}

void build_histograms(const BinnedMatrix& bx, const std::uint32_t* row_begin,
                      const std::uint32_t* row_end, const std::vector<double>& g,
                      const std::vector<double>& h, const std::vector<std::size_t>& offsets,
                      std::vector<HistBin>& out, bool parallel) {
    const int n_features = static_cast<int>(bx.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (int f = 0; f < n_features; ++f) {
        HistBin* bins = &out[offsets[f]];
        const std::uint16_t* col = &bx.data[static_cast<std::size_t>(f) * bx.rows];
        for (const std::uint32_t* it = row_begin; it != row_end; ++it) {
            std::uint32_t r = *it;
            HistBin& b = bins[col[r]];
            b.sum_g += g[r];
            b.sum_h += h[r];
            ++b.count;
        }
    }
}

namespace {

class TreeGrower {
public:
    TreeGrower(const BinnedMatrix& bx, const BinMap& bm, const Config& cfg)
        : bx_(bx), bm_(bm), cfg_(cfg) {
        offsets_.resize(bx.cols + 1, 0);
        for (std::size_t f = 0; f < bx.cols; ++f)
            offsets_[f + 1] = offsets_[f] + static_cast<std::size_t>(bm.features[f].total_bins());
    }

    // Fits one tree to (g, h) and accumulates the scaled leaf values into
    // `update` (per training row).
    Tree fit(const std::vector<double>& g, const std::vector<double>& h,
             std::vector<double>& update) {
        Tree tree;
        const std::size_t n = bx_.rows;
        rows_.resize(n);
        std::iota(rows_.begin(), rows_.end(), 0u);

        double sum_g = std::accumulate(g.begin(), g.end(), 0.0);
        double sum_h = std::accumulate(h.begin(), h.end(), 0.0);

        tree.nodes.push_back(TreeNode{});
        std::vector<FrontierLeaf> frontier;
        FrontierLeaf root;
        root.node_id = 0;
        root.depth = 0;
        root.begin = 0;
        root.end = n;
        root.sum_g = sum_g;
        root.sum_h = sum_h;
        root.count = static_cast<std::int64_t>(n);
        root.hist.assign(offsets_.back(), HistBin{});
        build_histograms(bx_, rows_.data(), rows_.data() + n, g, h, offsets_, root.hist,
                         cfg_.parallel);
        find_best_split(root);
        frontier.push_back(std::move(root));

        int leaves = 1;
        while (leaves < cfg_.max_leaf_nodes) {
            // best-gain-first; ties broken by lowest node id
            int pick = -1;
            for (std::size_t i = 0; i < frontier.size(); ++i) {
                if (!frontier[i].best.valid() || frontier[i].best.gain <= 0.0) continue;
                if (pick < 0 || frontier[i].best.gain > frontier[pick].best.gain ||
                    (frontier[i].best.gain == frontier[pick].best.gain &&
                     frontier[i].node_id < frontier[pick].node_id))
                    pick = static_cast<int>(i);
            }
            if (pick < 0) break;

            FrontierLeaf leaf = std::move(frontier[pick]);
            frontier.erase(frontier.begin() + pick);
            split_leaf(tree, std::move(leaf), g, h, frontier);
            ++leaves;
        }

        for (const auto& leaf : frontier) {
            double value =
                cfg_.learning_rate * (-leaf.sum_g / (leaf.sum_h + cfg_.leaf_regularization));
            tree.nodes[leaf.node_id].value = value;
            for (std::size_t i = leaf.begin; i < leaf.end; ++i) update[rows_[i]] += value;
        }
        return tree;
    }

private:
    void find_best_split(FrontierLeaf& leaf) {
        leaf.best = Split{};
        if (leaf.depth >= cfg_.max_depth) return;
        if (leaf.count < 2 * static_cast<std::int64_t>(cfg_.min_samples_leaf)) return;

        const int n_features = static_cast<int>(bx_.cols);
        std::vector<Split> per_feature(n_features);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (cfg_.parallel)
#endif
        for (int f = 0; f < n_features; ++f)
            per_feature[f] = best_split_for_feature(leaf, f);

        for (int f = 0; f < n_features; ++f) {
            const Split& s = per_feature[f];
            if (s.valid() && s.gain > leaf.best.gain) leaf.best = s;
        }
    }

    Split best_split_for_feature(const FrontierLeaf& leaf, int f) const {
        const auto& fb = bm_.features[static_cast<std::size_t>(f)];
        const int m = static_cast<int>(fb.thresholds.size());
        if (m == 0) return Split{};
        const HistBin* bins = &leaf.hist[offsets_[static_cast<std::size_t>(f)]];
        const HistBin& missing = bins[fb.missing_bin()];
        const double lambda = cfg_.leaf_regularization;
        const double parent_obj = leaf_objective(leaf.sum_g, leaf.sum_h, lambda);
        const std::int64_t min_leaf = cfg_.min_samples_leaf;

        Split best;
        double gl = 0.0, hl = 0.0;
        std::int64_t cl = 0;
        for (int t = 0; t < m; ++t) {
            gl += bins[t].sum_g;
            hl += bins[t].sum_h;
            cl += bins[t].count;
            // missing routed right, then left; strict > keeps the earlier
            // (lower bin, missing-right) candidate on exact ties
            for (int option = 0; option < 2; ++option) {
                bool missing_left = option == 1;
                if (missing_left && missing.count == 0) continue;
                double gL = gl + (missing_left ? missing.sum_g : 0.0);
                double hL = hl + (missing_left ? missing.sum_h : 0.0);
                std::int64_t cL = cl + (missing_left ? missing.count : 0);
                double gR = leaf.sum_g - gL;
                double hR = leaf.sum_h - hL;
                std::int64_t cR = leaf.count - cL;
                if (cL < min_leaf || cR < min_leaf) continue;
                double gain = 0.5 * (leaf_objective(gL, hL, lambda) +
                                     leaf_objective(gR, hR, lambda) - parent_obj);
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = f;
                    best.bin = t;
                    best.missing_left = missing_left;
                    best.left_g = gL;
                    best.left_h = hL;
                    best.left_count = cL;
                }
            }
        }
        return best;
    }

    void split_leaf(Tree& tree, FrontierLeaf leaf, const std::vector<double>& g,
                    const std::vector<double>& h, std::vector<FrontierLeaf>& frontier) {
        const Split& s = leaf.best;
        const std::uint16_t* col = &bx_.data[static_cast<std::size_t>(s.feature) * bx_.rows];
        const int missing_bin = bm_.features[static_cast<std::size_t>(s.feature)].missing_bin();

        auto goes_left = [&](std::uint32_t r) {
            int bin = col[r];
            if (bin == missing_bin) return s.missing_left;
            return bin <= s.bin;
        };
        auto mid_it = std::stable_partition(rows_.begin() + leaf.begin, rows_.begin() + leaf.end,
                                            goes_left);
        std::size_t mid = static_cast<std::size_t>(mid_it - rows_.begin());

        int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        int right_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        TreeNode& parent = tree.nodes[leaf.node_id];
        parent.feature = s.feature;
        parent.bin = s.bin;
        parent.missing_left = s.missing_left;
        parent.left = left_id;
        parent.right = right_id;

        FrontierLeaf left, right;
        left.node_id = left_id;
        right.node_id = right_id;
        left.depth = right.depth = leaf.depth + 1;
        left.begin = leaf.begin;
        left.end = mid;
        right.begin = mid;
        right.end = leaf.end;
        left.sum_g = s.left_g;
        left.sum_h = s.left_h;
        left.count = s.left_count;
        right.sum_g = leaf.sum_g - s.left_g;
        right.sum_h = leaf.sum_h - s.left_h;
        right.count = leaf.count - s.left_count;

        // Build the smaller child's histogram; the sibling is the difference.
        bool left_smaller = left.count <= right.count;
        FrontierLeaf& small = left_smaller ? left : right;
        FrontierLeaf& large = left_smaller ? right : left;
        small.hist.assign(offsets_.back(), HistBin{});
        build_histograms(bx_, rows_.data() + small.begin, rows_.data() + small.end, g, h, offsets_,
                         small.hist, cfg_.parallel);
        large.hist = std::move(leaf.hist);
        for (std::size_t i = 0; i < large.hist.size(); ++i) {
            large.hist[i].sum_g -= small.hist[i].sum_g;
            large.hist[i].sum_h -= small.hist[i].sum_h;
            large.hist[i].count -= small.hist[i].count;
        }

        find_best_split(left);
        find_best_split(right);
        frontier.push_back(std::move(left));
        frontier.push_back(std::move(right));
    }

    const BinnedMatrix& bx_;
    const BinMap& bm_;
    const Config& cfg_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> rows_;
};

bool is_stump_zero(const Tree& tree) {
    return tree.nodes.size() == 1 && tree.nodes[0].value == 0.0;
}

void check_finite(const Matrix& X) {
    for (double v : X.data)
        if (!std::isfinite(v) && !std::isnan(v))
            throw AuditError("fit: non-finite feature value without missing marker");
}

}  // namespace

Model fit_classifier(const Matrix& X, const std::vector<int>& y, const Config& config) {
    config.validate();
    if (X.rows == 0 || y.size() != X.rows) throw AuditError("fit_classifier: X/y size mismatch");
    if (X.rows < static_cast<std::size_t>(config.min_samples_leaf))
        throw AuditError("fit_classifier: fewer rows than min_samples_leaf");
    check_finite(X);

    std::vector<int> labels = y;
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.size() < 2) throw AuditError("fit_classifier: only one class present");
    const int K = static_cast<int>(labels.size());
    const std::size_t n = X.rows;

    std::map<int, int> label_index;
    for (int k = 0; k < K; ++k) label_index[labels[k]] = k;
    std::vector<int> yi(n);
    for (std::size_t i = 0; i < n; ++i) yi[i] = label_index.at(y[i]);

    // sample weights: 1, or n / (K * n_c) under balanced weighting
    std::vector<std::int64_t> class_counts(K, 0);
    for (int c : yi) ++class_counts[c];
    std::vector<double> class_weight(K, 1.0);
    if (config.balanced_class_weights)
        for (int k = 0; k < K; ++k)
            class_weight[k] = static_cast<double>(n) / (static_cast<double>(K) * class_counts[k]);
    std::vector<double> w(n);
    double w_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = class_weight[yi[i]];
        w_total += w[i];
    }

    Model model;
    model.task = Model::Task::classifier;
    model.config = config;
    model.class_labels = labels;

    Binned binned = bin_features(X, config);
    model.bin_map = binned.map;

    model.base.resize(K);
    for (int k = 0; k < K; ++k) {
        double wk = class_weight[k] * class_counts[k];
        model.base[k] = std::log(wk / w_total);
    }

    // F[i*K + k]: raw score
    std::vector<double> F(n * K);
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k) F[i * K + k] = model.base[k];

    std::vector<double> p(n * K), g(n), h(n), update(n);
    TreeGrower grower(binned.matrix, model.bin_map, config);

    auto softmax_rows = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            double mx = F[i * K];
            for (int k = 1; k < K; ++k) mx = std::max(mx, F[i * K + k]);
            double sum = 0.0;
            for (int k = 0; k < K; ++k) {
                p[i * K + k] = std::exp(F[i * K + k] - mx);
                sum += p[i * K + k];
            }
            for (int k = 0; k < K; ++k) p[i * K + k] /= sum;
        }
    };
    auto weighted_ce = [&] {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            loss -= w[i] * std::log(std::max(p[i * K + yi[i]], 1e-300));
        return loss / w_total;
    };

    for (int it = 0; it < config.max_iterations; ++it) {
        softmax_rows();
        std::vector<Tree> round;
        bool all_zero = true;
        for (int k = 0; k < K; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                double pik = p[i * K + k];
                g[i] = w[i] * (pik - (yi[i] == k ? 1.0 : 0.0));
                h[i] = w[i] * pik * (1.0 - pik);
            }
            std::fill(update.begin(), update.end(), 0.0);
            Tree tree = grower.fit(g, h, update);
            if (!is_stump_zero(tree)) all_zero = false;
            for (std::size_t i = 0; i < n; ++i) F[i * K + k] += update[i];
            round.push_back(std::move(tree));
        }
        model.iterations.push_back(std::move(round));
        softmax_rows();
        model.training_loss.push_back(weighted_ce());
        if (all_zero) break;
    }
    return model;
}

Model fit_regressor(const Matrix& X, const std::vector<double>& y, const Config& config) {
    config.validate();
    if (X.rows == 0 || y.size() != X.rows) throw AuditError("fit_regressor: X/y size mismatch");
    if (X.rows < static_cast<std::size_t>(config.min_samples_leaf))
        throw AuditError("fit_regressor: fewer rows than min_samples_leaf");
    check_finite(X);
    for (double v : y)
        if (!std::isfinite(v)) throw AuditError("fit_regressor: non-finite target");

    const std::size_t n = X.rows;
    Model model;
    model.task = Model::Task::regressor;
    model.config = config;

    Binned binned = bin_features(X, config);
    model.bin_map = binned.map;

    double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    model.base = {mean};

    std::vector<double> F(n, mean), g(n), h(n, 1.0), update(n);
    TreeGrower grower(binned.matrix, model.bin_map, config);

    auto mse = [&] {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) loss += (F[i] - y[i]) * (F[i] - y[i]);
        return loss / (2.0 * static_cast<double>(n));
    };

    for (int it = 0; it < config.max_iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) g[i] = F[i] - y[i];
        std::fill(update.begin(), update.end(), 0.0);
        Tree tree = grower.fit(g, h, update);
        bool zero = is_stump_zero(tree);
        for (std::size_t i = 0; i < n; ++i) F[i] += update[i];
        model.iterations.push_back({std::move(tree)});
        model.training_loss.push_back(mse());
        if (zero) break;  // gradients cannot change; nothing left to fit
    }
    return model;
}

Matrix predict_raw(const Model& model, const Matrix& X) {
    if (X.cols != model.n_features())
        throw AuditError("predict: column arity mismatch (" + std::to_string(X.cols) + " vs " +
                         std::to_string(model.n_features()) + ")");
    BinnedMatrix bx = bin_transform(model.bin_map, X);
    const std::size_t K = model.base.size();
    Matrix out(X.rows, K);
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t k = 0; k < K; ++k) out.at(r, k) = model.base[k];
    for (const auto& round : model.iterations)
        for (std::size_t k = 0; k < round.size(); ++k)
            for (std::size_t r = 0; r < X.rows; ++r)
                out.at(r, k) += round[k].predict_binned(bx, r, model.bin_map);
    return out;
}

Matrix predict_proba(const Model& model, const Matrix& X) {
    if (model.task != Model::Task::classifier)
        throw AuditError("predict_proba: model is not a classifier");
    Matrix raw = predict_raw(model, X);
    const std::size_t K = raw.cols;
    for (std::size_t r = 0; r < raw.rows; ++r) {
        double mx = raw.at(r, 0);
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, raw.at(r, k));
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            raw.at(r, k) = std::exp(raw.at(r, k) - mx);
            sum += raw.at(r, k);
        }
        for (std::size_t k = 0; k < K; ++k) raw.at(r, k) /= sum;
    }
    return raw;
}

std::vector<int> predict_labels(const Model& model, const Matrix& X) {
    if (model.task != Model::Task::classifier)
        throw AuditError("predict_labels: model is not a classifier");
    Matrix raw = predict_raw(model, X);
    std::vector<int> labels(raw.rows);
    for (std::size_t r = 0; r < raw.rows; ++r) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < raw.cols; ++k)
            if (raw.at(r, k) > raw.at(r, best)) best = k;  // ties toward the lower label
        labels[r] = model.class_labels[best];
    }
    return labels;
}

std::vector<double> predict_values(const Model& model, const Matrix& X) {
    if (model.task != Model::Task::regressor)
        throw AuditError("predict_values: model is not a regressor");
    Matrix raw = predict_raw(model, X);
    std::vector<double> values(raw.rows);
    for (std::size_t r = 0; r < raw.rows; ++r) values[r] = raw.at(r, 0);
    return values;
}

std::vector<int> predict_scores(const Model& model, const Matrix& X, const ScoreScale& scale) {
    if (model.task == Model::Task::classifier) return predict_labels(model, X);
    std::vector<double> values = predict_values(model, X);
    std::vector<int> scores(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        // round half away from zero, then clip to the scale
        double r = values[i] >= 0.0 ? std::floor(values[i] + 0.5) : std::ceil(values[i] - 0.5);
        scores[i] = std::clamp(static_cast<int>(r), scale.min_score, scale.max_score);
    }
    return scores;
}

namespace {

using nlohmann::json;

json tree_to_json(const Tree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes)
        nodes.push_back({{"f", n.feature},
                         {"b", n.bin},
                         {"ml", n.missing_left},
                         {"l", n.left},
                         {"r", n.right},
                         {"v", n.value}});
    return nodes;
}

Tree tree_from_json(const json& nodes) {
    Tree tree;
    for (const auto& jn : nodes) {
        TreeNode n;
        n.feature = jn.at("f").get<int>();
        n.bin = jn.at("b").get<int>();
        n.missing_left = jn.at("ml").get<bool>();
        n.left = jn.at("l").get<int>();
        n.right = jn.at("r").get<int>();
        n.value = jn.at("v").get<double>();
        tree.nodes.push_back(n);
    }
    return tree;
}

}  // namespace

std::string model_to_json(const Model& model) {
    json j;
    j["format_version"] = 1;
    j["task"] = model.task == Model::Task::classifier ? "classifier" : "regressor";
    j["class_labels"] = model.class_labels;
    j["base"] = model.base;
    j["config"] = {{"learning_rate", model.config.learning_rate},
                   {"max_iterations", model.config.max_iterations},
                   {"max_leaf_nodes", model.config.max_leaf_nodes},
                   {"max_depth", model.config.max_depth},
                   {"min_samples_leaf", model.config.min_samples_leaf},
                   {"n_bins", model.config.n_bins},
                   {"leaf_regularization", model.config.leaf_regularization},
                   {"balanced_class_weights", model.config.balanced_class_weights},
                   {"seed", model.config.seed}};
    json bins = json::array();
    for (const auto& fb : model.bin_map.features) bins.push_back(fb.thresholds);
    j["bin_thresholds"] = bins;
    j["n_bins"] = model.bin_map.n_bins;
    json iters = json::array();
    for (const auto& round : model.iterations) {
        json r = json::array();
        for (const auto& tree : round) r.push_back(tree_to_json(tree));
        iters.push_back(r);
    }
    j["iterations"] = iters;
    j["training_loss"] = model.training_loss;
    return j.dump();
}

Model model_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw AuditError("model: unsupported format version");
    Model model;
    model.task = j.at("task").get<std::string>() == "classifier" ? Model::Task::classifier
                                                                 : Model::Task::regressor;
    model.class_labels = j.at("class_labels").get<std::vector<int>>();
    model.base = j.at("base").get<std::vector<double>>();
    const json& c = j.at("config");
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.max_iterations = c.at("max_iterations").get<int>();
    model.config.max_leaf_nodes = c.at("max_leaf_nodes").get<int>();
    model.config.max_depth = c.at("max_depth").get<int>();
    model.config.min_samples_leaf = c.at("min_samples_leaf").get<int>();
    model.config.n_bins = c.at("n_bins").get<int>();
    model.config.leaf_regularization = c.at("leaf_regularization").get<double>();
    model.config.balanced_class_weights = c.at("balanced_class_weights").get<bool>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto& th : j.at("bin_thresholds")) {
        BinMap::FeatureBins fb;
        fb.thresholds = th.get<std::vector<double>>();
        model.bin_map.features.push_back(std::move(fb));
    }
    model.bin_map.n_bins = j.at("n_bins").get<int>();
    for (const auto& round : j.at("iterations")) {
        std::vector<Tree> trees;
        for (const auto& t : round) trees.push_back(tree_from_json(t));
        model.iterations.push_back(std::move(trees));
    }
    model.training_loss = j.at("training_loss").get<std::vector<double>>();
    return model;
}

void save_model(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AuditError("cannot write file: " + path);
    out << model_to_json(model);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AuditError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace essay_audit::gbm
