#ifndef ESSAY_AUDIT_FAIRNESS_HPP
#define ESSAY_AUDIT_FAIRNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "essay_audit/core.hpp"

namespace essay_audit {

struct RateCell {
    std::optional<double> tpr;  // P(pred=k | true=k, group)
    std::optional<double> fpr;  // P(pred=k | true!=k, group)
    std::int64_t positive_support = 0;
    std::int64_t negative_support = 0;
};

struct GroupRates {
    ScoreScale scale;
    std::string attribute_name;
    std::vector<std::string> groups;          // sorted labels
    std::vector<std::vector<RateCell>> cells; // cells[group][class]
};

struct OddsGapEntry {
    std::optional<double> tpr_gap;
    std::optional<double> fpr_gap;
    std::optional<double> eo_gap;  // max of the two; unset if either is undefined
};

GroupRates group_rates(const std::vector<PredictionRecord>& preds, const GroupPartition& partition,
                       const ScoreScale& scale);

// Max pairwise |TPR difference| across groups at class k (scale score value).
std::optional<double> equal_opportunity_gap(const GroupRates& rates, int k);

OddsGapEntry equalized_odds_gap(const GroupRates& rates, int k);

struct DesignMatrix {
    std::size_t n_rows = 0;
    std::vector<std::string> column_names;  // intercept first
    std::vector<double> values;             // row-major, n_rows x column_names.size()
    std::vector<std::string> excluded_attributes;  // single-level attributes, dropped with warning
    std::vector<std::string> row_essay_ids;

    double at(std::size_t r, std::size_t c) const { return values[r * column_names.size() + c]; }
};

DesignMatrix build_design_matrix(const std::vector<PredictionRecord>& preds, const Corpus& corpus,
                                 const std::vector<std::string>& attributes);

struct OlsResult {
    std::vector<double> coefficients;
    double r_squared = 0.0;
    bool ridged = false;          // Gram matrix was near-singular, 1e-8 ridge applied
    bool constant_target = false; // SS_tot == 0, R^2 reported as 0
    std::vector<double> residuals;
};

// Normal-equations least squares. X row-major with n_cols columns; the caller
// supplies the intercept column. Optional per-row weights (weighted LS).
OlsResult ols_fit(const std::vector<double>& X, std::size_t n_rows, std::size_t n_cols,
                  const std::vector<double>& y, const std::vector<double>* weights = nullptr);

OlsResult ols_fit(const DesignMatrix& X, const std::vector<double>& y);

enum class RegressionFairnessKind { osa, osd };

struct RegressionFairnessResult {
    RegressionFairnessKind kind;
    double r_squared = 0.0;
    std::vector<std::string> coefficient_names;
    std::vector<double> coefficients;
    double permutation_p_value = 1.0;
    std::size_t n = 0;
    bool ridged = false;
    bool constant_target = false;
    std::vector<std::string> excluded_attributes;
};

struct PermutationConfig {
    int n_permutations = 1000;
    std::uint64_t seed = 0;
    bool parallel = true;
};

// Dependent variable (S - H)^2 regressed on demographic indicators.
RegressionFairnessResult osa(const std::vector<PredictionRecord>& preds, const Corpus& corpus,
                             const std::vector<std::string>& attributes,
                             const PermutationConfig& perm = {});

// Dependent variable the signed difference (S - H).
RegressionFairnessResult osd(const std::vector<PredictionRecord>& preds, const Corpus& corpus,
                             const std::vector<std::string>& attributes,
                             const PermutationConfig& perm = {});

}  // namespace essay_audit

#endif
