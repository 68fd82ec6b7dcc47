#ifndef ESSAY_AUDIT_CORE_HPP
#define ESSAY_AUDIT_CORE_HPP

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace essay_audit {

struct AuditError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Contiguous integer score range [min_score, max_score].
struct ScoreScale {
    int min_score;
    int max_score;

    ScoreScale(int min_s, int max_s) : min_score(min_s), max_score(max_s) {
        if (min_s >= max_s) throw AuditError("ScoreScale: min_score must be < max_score");
    }
    int categories() const { return max_score - min_score + 1; }
    bool contains(int score) const { return score >= min_score && score <= max_score; }
    // Zero-based index on the scale.
    int index(int score) const { return score - min_score; }
    int score_at(int idx) const { return min_score + idx; }
};

inline const std::string kUnknownLabel = "unknown";

struct DemographicProfile {
    std::string gender = kUnknownLabel;
    std::string grade_level = kUnknownLabel;
    std::string ell_status = kUnknownLabel;
    std::string race_ethnicity = kUnknownLabel;
    std::string economic_status = kUnknownLabel;
    std::string disability_status = kUnknownLabel;

    const std::string& field(const std::string& name) const;
    static const std::vector<std::string>& field_names();
};

enum class TaskType { independent, source_based };
enum class Split { train, test };

struct EssayRecord {
    std::string essay_id;
    std::string full_text;
    std::string prompt_name;
    TaskType task_type = TaskType::independent;
    int holistic_score = 0;
    long word_count = 0;
    Split split = Split::train;
    DemographicProfile demographics;
};

struct PredictionRecord {
    std::string essay_id;
    int true_score = 0;
    int predicted_score = 0;
    std::optional<double> confidence;
    std::optional<std::string> rationale;
};

// Maps logical fields to CSV column names. essay_id, full_text and
// holistic_score are required; everything else is optional.
struct CorpusSchema {
    std::string essay_id = "essay_id";
    std::string full_text = "full_text";
    std::string holistic_score = "holistic_score";
    std::string prompt_name;
    std::string task_type;
    std::string word_count;
    std::string split;
    std::string gender;
    std::string grade_level;
    std::string ell_status;
    std::string race_ethnicity;
    std::string economic_status;
    std::string disability_status;
};

struct Corpus {
    std::vector<EssayRecord> records;
    // Observed label sets per demographic field, collected at ingestion.
    std::map<std::string, std::vector<std::string>> demographic_levels;

    const EssayRecord* find(const std::string& essay_id) const;

private:
    mutable std::unordered_map<std::string, std::size_t> index_;
};

struct GroupPartition {
    std::string attribute_name;
    std::unordered_map<std::string, std::string> assignment;  // essay_id -> group label
    std::vector<std::string> group_labels;                    // sorted, distinct
    long excluded_unknown = 0;
};

Corpus load_corpus(const std::string& path, const CorpusSchema& schema, const ScoreScale& scale);
void save_corpus(const std::string& path, const Corpus& corpus, const CorpusSchema& schema);

std::vector<PredictionRecord> load_predictions(const std::string& path, const ScoreScale& scale);
void save_predictions(const std::string& path, const std::vector<PredictionRecord>& preds);

GroupPartition partition_by(const std::vector<EssayRecord>& records, const std::string& attribute);

std::string to_string(TaskType t);
std::string to_string(Split s);

}  // namespace essay_audit

#endif
