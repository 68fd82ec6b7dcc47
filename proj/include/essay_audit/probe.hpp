#ifndef ESSAY_AUDIT_PROBE_HPP
#define ESSAY_AUDIT_PROBE_HPP

#include <string>
#include <vector>

#include "essay_audit/boosting.hpp"
#include "essay_audit/core.hpp"
#include "essay_audit/matrix.hpp"

namespace essay_audit::probe {

struct EncodedDemographics {
    Matrix values;
    std::vector<std::string> column_names;  // attribute=level, deterministic order
    std::vector<std::string> row_essay_ids;
};

// One-hot with every level kept (tree models need no reference drop);
// "unknown" becomes its own indicator level.
EncodedDemographics encode_demographics(const std::vector<EssayRecord>& records,
                                        const std::vector<std::string>& attributes =
                                            DemographicProfile::field_names());

enum class SplitPolicy {
    dataset,          // use the records' own train/test division
    stratified_80_20  // seeded stratified split when none is present
};

struct ProbeReport {
    std::string prompt_name;
    double kappa = 0.0;
    std::string interpretation;
    std::vector<std::string> feature_columns;
    std::string split_policy;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::vector<std::pair<std::string, int>> per_attribute_column_counts;
};

ProbeReport run_probe(const std::vector<EssayRecord>& records, const ScoreScale& scale,
                      const gbm::Config& config, SplitPolicy policy,
                      const std::vector<std::string>& attributes =
                          DemographicProfile::field_names());

// Table of (prompt, kappa) rows.
void export_probe_csv(const std::string& path, const std::vector<ProbeReport>& reports);

}  // namespace essay_audit::probe

#endif
