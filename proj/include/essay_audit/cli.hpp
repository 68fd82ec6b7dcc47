#ifndef ESSAY_AUDIT_CLI_HPP
#define ESSAY_AUDIT_CLI_HPP

#include <optional>
#include <string>
#include <vector>

#include "essay_audit/boosting.hpp"
#include "essay_audit/core.hpp"
#include "essay_audit/llm.hpp"

namespace essay_audit::cli {

// Exit codes shared by every subcommand.
enum ExitCode : int {
    exit_ok = 0,
    exit_validation_failure = 1,
    exit_partial_failure = 2,
    exit_fatal = 3,
};

enum class ScorerKind {
    gbm_classifier,
    gbm_regressor,
    llm_zero_shot,
    llm_fewshot_cot,
    external_predictions,
};

struct RunConfig {
    std::string config_path;
    std::string corpus_path;
    CorpusSchema schema;
    ScoreScale scale{1, 6};
    std::optional<std::string> prompt_filter;
    ScorerKind scorer = ScorerKind::gbm_classifier;
    std::string external_predictions_path;  // external scorer only
    gbm::Config gbm;
    llm::LLMConfig llm;
    std::string rubric_path;  // llm scorers
    std::vector<std::string> fairness_attributes{"gender"};
    int fairness_permutations = 1000;
    bool fairness_test_split_only = true;
    std::string probe_split_policy = "dataset";  // or "stratified"
    std::vector<std::string> probe_attributes = DemographicProfile::field_names();
    std::string explain_metric = "accuracy";
    int explain_repeats = 5;
    int explain_top_k = 5;
    bool use_tfidf = true;
    std::string familiar_words_path;
    std::string external_features_path;
    std::string output_dir = ".";
    std::uint64_t seed = 0;

    std::string config_hash;  // FNV-1a of the canonical config serialization
};

RunConfig load_config(const std::string& path);

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Collects every violation instead of stopping at the first.
ValidationReport validate_config(const RunConfig& config);

int cmd_validate(const RunConfig& config);
int cmd_score(const RunConfig& config);
int cmd_evaluate(const RunConfig& config, const std::string& predictions_path);
int cmd_fairness(const RunConfig& config, const std::string& predictions_path);
int cmd_probe(const RunConfig& config);
int cmd_explain(const RunConfig& config);
int cmd_report(const RunConfig& config);

// `essay-audit <subcommand> --config <path> [...]`
int run_cli(int argc, const char* const* argv);

std::string sanitize_filename(const std::string& name);

}  // namespace essay_audit::cli

#endif
