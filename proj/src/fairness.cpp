#include "essay_audit/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "essay_audit/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace essay_audit {

GroupRates group_rates(const std::vector<PredictionRecord>& preds, const GroupPartition& partition,
                       const ScoreScale& scale) {
    if (partition.group_labels.size() < 2)
        throw AuditError("group_rates: degenerate partition");

    GroupRates rates{scale, partition.attribute_name, partition.group_labels, {}};
    const int n_classes = scale.categories();
    const std::size_t n_groups = partition.group_labels.size();

    std::map<std::string, std::size_t> group_index;
    for (std::size_t g = 0; g < n_groups; ++g) group_index[partition.group_labels[g]] = g;

    // tp[g][k], fp[g][k], pos[g][k], neg[g][k]
    std::vector<std::vector<std::int64_t>> tp(n_groups, std::vector<std::int64_t>(n_classes, 0));
    auto fp = tp, pos = tp, neg = tp;
    std::vector<std::int64_t> group_total(n_groups, 0);

    for (const auto& p : preds) {
        auto it = partition.assignment.find(p.essay_id);
        if (it == partition.assignment.end())
            throw AuditError("group_rates: prediction '" + p.essay_id + "' has no group assignment");
        std::size_t g = group_index.at(it->second);
        ++group_total[g];
        int ti = scale.index(p.true_score);
        int pi = scale.index(p.predicted_score);
        ++pos[g][ti];
        if (pi == ti) ++tp[g][ti];
        else ++fp[g][pi];
    }
    for (std::size_t g = 0; g < n_groups; ++g)
        if (group_total[g] == 0)
            throw AuditError("group_rates: group '" + partition.group_labels[g] + "' has no predictions");

    rates.cells.assign(n_groups, std::vector<RateCell>(n_classes));
    for (std::size_t g = 0; g < n_groups; ++g) {
        for (int k = 0; k < n_classes; ++k) {
            RateCell& cell = rates.cells[g][k];
            cell.positive_support = pos[g][k];
            cell.negative_support = group_total[g] - pos[g][k];
            if (cell.positive_support > 0)
                cell.tpr = static_cast<double>(tp[g][k]) / static_cast<double>(cell.positive_support);
            if (cell.negative_support > 0)
                cell.fpr = static_cast<double>(fp[g][k]) / static_cast<double>(cell.negative_support);
        }
    }
    return rates;
}

namespace {

std::optional<double> max_pairwise_gap(const GroupRates& rates, int class_idx, bool use_tpr) {
    std::vector<double> defined;
    for (const auto& group_cells : rates.cells) {
        const RateCell& cell = group_cells[class_idx];
        const auto& rate = use_tpr ? cell.tpr : cell.fpr;
        if (rate) defined.push_back(*rate);
    }
    if (defined.size() < 2) return std::nullopt;
    auto [lo, hi] = std::minmax_element(defined.begin(), defined.end());
    return *hi - *lo;
}

}  // namespace

std::optional<double> equal_opportunity_gap(const GroupRates& rates, int k) {
    if (!rates.scale.contains(k)) throw AuditError("equal_opportunity_gap: class outside scale");
    return max_pairwise_gap(rates, rates.scale.index(k), true);
}

OddsGapEntry equalized_odds_gap(const GroupRates& rates, int k) {
    if (!rates.scale.contains(k)) throw AuditError("equalized_odds_gap: class outside scale");
    int idx = rates.scale.index(k);
    OddsGapEntry entry;
    entry.tpr_gap = max_pairwise_gap(rates, idx, true);
    entry.fpr_gap = max_pairwise_gap(rates, idx, false);
    if (entry.tpr_gap && entry.fpr_gap)
        entry.eo_gap = std::max(*entry.tpr_gap, *entry.fpr_gap);
    return entry;
}

DesignMatrix build_design_matrix(const std::vector<PredictionRecord>& preds, const Corpus& corpus,
                                 const std::vector<std::string>& attributes) {
    DesignMatrix dm;
    dm.n_rows = preds.size();
    if (preds.empty()) throw AuditError("build_design_matrix: no predictions");

    std::vector<const EssayRecord*> joined;
    joined.reserve(preds.size());
    for (const auto& p : preds) {
        const EssayRecord* rec = corpus.find(p.essay_id);
        if (!rec) throw AuditError("build_design_matrix: essay '" + p.essay_id + "' not in corpus");
        joined.push_back(rec);
        dm.row_essay_ids.push_back(p.essay_id);
    }

    // Per attribute: sorted level set; reference level (first) dropped.
    struct Indicator {
        std::string attribute;
        std::string level;
    };
    std::vector<Indicator> indicators;
    for (const auto& attr : attributes) {
        std::set<std::string> levels;
        for (const EssayRecord* rec : joined) levels.insert(rec->demographics.field(attr));
        if (levels.size() < 2) {
            dm.excluded_attributes.push_back(attr);
            continue;
        }
        bool first = true;
        for (const auto& level : levels) {
            if (first) {  // reference level
                first = false;
                continue;
            }
            indicators.push_back({attr, level});
        }
    }

    dm.column_names.push_back("intercept");
    for (const auto& ind : indicators) dm.column_names.push_back(ind.attribute + "=" + ind.level);

    const std::size_t n_cols = dm.column_names.size();
    dm.values.assign(dm.n_rows * n_cols, 0.0);
    for (std::size_t r = 0; r < dm.n_rows; ++r) {
        dm.values[r * n_cols] = 1.0;
        for (std::size_t c = 0; c < indicators.size(); ++c) {
            if (joined[r]->demographics.field(indicators[c].attribute) == indicators[c].level)
                dm.values[r * n_cols + 1 + c] = 1.0;
        }
    }
    return dm;
}

namespace {

// Cholesky solve of (G + ridge I) b = rhs. Returns false when a pivot collapses.
bool cholesky_solve(std::vector<double> G, std::vector<double> rhs, std::size_t p, double ridge,
                    std::vector<double>& out, double& pivot_ratio) {
    for (std::size_t i = 0; i < p; ++i) G[i * p + i] += ridge;
    double min_pivot = std::numeric_limits<double>::infinity();
    double max_pivot = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        double d = G[j * p + j];
        for (std::size_t k = 0; k < j; ++k) d -= G[j * p + k] * G[j * p + k];
        if (!(d > 0.0)) return false;
        double l = std::sqrt(d);
        min_pivot = std::min(min_pivot, l);
        max_pivot = std::max(max_pivot, l);
        G[j * p + j] = l;
        for (std::size_t i = j + 1; i < p; ++i) {
            double s = G[i * p + j];
            for (std::size_t k = 0; k < j; ++k) s -= G[i * p + k] * G[j * p + k];
            G[i * p + j] = s / l;
        }
    }
    pivot_ratio = max_pivot / min_pivot;
    // forward then back substitution
    for (std::size_t i = 0; i < p; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= G[i * p + k] * rhs[k];
        rhs[i] = s / G[i * p + i];
    }
    for (std::size_t ii = p; ii-- > 0;) {
        double s = rhs[ii];
        for (std::size_t k = ii + 1; k < p; ++k) s -= G[k * p + ii] * rhs[k];
        rhs[ii] = s / G[ii * p + ii];
    }
    out = std::move(rhs);
    return true;
}

}  // namespace

OlsResult ols_fit(const std::vector<double>& X, std::size_t n_rows, std::size_t n_cols,
                  const std::vector<double>& y, const std::vector<double>* weights) {
    if (n_rows < n_cols) throw AuditError("ols_fit: fewer rows than columns");
    if (y.size() != n_rows) throw AuditError("ols_fit: y length mismatch");

    std::vector<double> G(n_cols * n_cols, 0.0), rhs(n_cols, 0.0);
    double sw = 0.0, swy = 0.0;
    for (std::size_t r = 0; r < n_rows; ++r) {
        double w = weights ? (*weights)[r] : 1.0;
        const double* row = &X[r * n_cols];
        for (std::size_t i = 0; i < n_cols; ++i) {
            rhs[i] += w * row[i] * y[r];
            for (std::size_t j = 0; j <= i; ++j) G[i * n_cols + j] += w * row[i] * row[j];
        }
        sw += w;
        swy += w * y[r];
    }
    for (std::size_t i = 0; i < n_cols; ++i)
        for (std::size_t j = i + 1; j < n_cols; ++j) G[i * n_cols + j] = G[j * n_cols + i];

    OlsResult result;
    double pivot_ratio = 0.0;
    bool ok = cholesky_solve(G, rhs, n_cols, 0.0, result.coefficients, pivot_ratio);
    // pivot ratio of the Cholesky factor squares to a Gram condition estimate
    if (!ok || pivot_ratio * pivot_ratio > 1e12) {
        result.ridged = true;
        if (!cholesky_solve(G, rhs, n_cols, 1e-8, result.coefficients, pivot_ratio))
            throw AuditError("ols_fit: Gram matrix not positive definite even with ridge");
    }

    double y_mean = sw > 0.0 ? swy / sw : 0.0;
    double ss_res = 0.0, ss_tot = 0.0;
    result.residuals.resize(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        double w = weights ? (*weights)[r] : 1.0;
        double fit = 0.0;
        const double* row = &X[r * n_cols];
        for (std::size_t c = 0; c < n_cols; ++c) fit += row[c] * result.coefficients[c];
        double res = y[r] - fit;
        result.residuals[r] = res;
        ss_res += w * res * res;
        ss_tot += w * (y[r] - y_mean) * (y[r] - y_mean);
    }
    if (ss_tot <= 0.0) {
        result.constant_target = true;
        result.r_squared = 0.0;
    } else {
        result.r_squared = std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
    }
    return result;
}

OlsResult ols_fit(const DesignMatrix& X, const std::vector<double>& y) {
    return ols_fit(X.values, X.n_rows, X.column_names.size(), y);
}

namespace {

RegressionFairnessResult regression_fairness(const std::vector<PredictionRecord>& preds,
                                             const Corpus& corpus,
                                             const std::vector<std::string>& attributes,
                                             RegressionFairnessKind kind,
                                             const PermutationConfig& perm) {
    DesignMatrix dm = build_design_matrix(preds, corpus, attributes);
    std::vector<double> y(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double diff = static_cast<double>(preds[i].predicted_score - preds[i].true_score);
        y[i] = kind == RegressionFairnessKind::osa ? diff * diff : diff;
    }

    OlsResult fit = ols_fit(dm, y);

    RegressionFairnessResult result;
    result.kind = kind;
    result.r_squared = fit.r_squared;
    result.coefficient_names = dm.column_names;
    result.coefficients = fit.coefficients;
    result.n = preds.size();
    result.ridged = fit.ridged;
    result.constant_target = fit.constant_target;
    result.excluded_attributes = dm.excluded_attributes;

    // Permuting the dependent variable against fixed demographic rows is the
    // same pairing null as permuting the demographic rows.
    const int B = perm.n_permutations;
    int exceed = 0;
    const std::size_t n = preds.size();
#ifdef _OPENMP
#pragma omp parallel for reduction(+ : exceed) schedule(static) if (perm.parallel)
#endif
    for (int b = 0; b < B; ++b) {
        auto rng = make_rng(perm.seed, static_cast<std::uint64_t>(b));
        std::vector<double> yp = y;
        std::shuffle(yp.begin(), yp.end(), rng);
        OlsResult pf = ols_fit(dm, yp);
        if (pf.r_squared >= result.r_squared) ++exceed;
    }
    result.permutation_p_value = B > 0 ? static_cast<double>(exceed) / static_cast<double>(B) : 1.0;
    return result;
}

}  // namespace

RegressionFairnessResult osa(const std::vector<PredictionRecord>& preds, const Corpus& corpus,
                             const std::vector<std::string>& attributes,
                             const PermutationConfig& perm) {
    return regression_fairness(preds, corpus, attributes, RegressionFairnessKind::osa, perm);
}

RegressionFairnessResult osd(const std::vector<PredictionRecord>& preds, const Corpus& corpus,
                             const std::vector<std::string>& attributes,
                             const PermutationConfig& perm) {
    return regression_fairness(preds, corpus, attributes, RegressionFairnessKind::osd, perm);
}

}  // namespace essay_audit
