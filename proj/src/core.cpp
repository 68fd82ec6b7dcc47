#include "essay_audit/core.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "essay_audit/csv.hpp"

namespace essay_audit {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Empty or any casing of "unknown" collapses to the explicit unknown marker.
std::string normalize_label(const std::string& raw) {
    if (raw.empty() || lower(raw) == kUnknownLabel) return kUnknownLabel;
    return raw;
}

long parse_int(const std::string& s, const std::string& what, std::size_t row) {
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw AuditError(what + " is not an integer at row " + std::to_string(row) + ": '" + s + "'");
    }
    if (pos != s.size())
        throw AuditError(what + " is not an integer at row " + std::to_string(row) + ": '" + s + "'");
    return v;
}

}  // namespace

const std::string& DemographicProfile::field(const std::string& name) const {
    if (name == "gender") return gender;
    if (name == "grade_level") return grade_level;
    if (name == "ell_status") return ell_status;
    if (name == "race_ethnicity") return race_ethnicity;
    if (name == "economic_status") return economic_status;
    if (name == "disability_status") return disability_status;
    throw AuditError("unknown demographic attribute: " + name);
}

const std::vector<std::string>& DemographicProfile::field_names() {
    static const std::vector<std::string> names = {"gender",         "grade_level",
                                                   "ell_status",     "race_ethnicity",
                                                   "economic_status", "disability_status"};
    return names;
}

const EssayRecord* Corpus::find(const std::string& essay_id) const {
    if (index_.size() != records.size()) {
        index_.clear();
        for (std::size_t i = 0; i < records.size(); ++i) index_[records[i].essay_id] = i;
    }
    auto it = index_.find(essay_id);
    return it == index_.end() ? nullptr : &records[it->second];
}

std::string to_string(TaskType t) {
    return t == TaskType::independent ? "independent" : "source-based";
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Corpus load_corpus(const std::string& path, const CorpusSchema& schema, const ScoreScale& scale) {
    csv::Table table = csv::read_file(path);
    if (table.rows.empty()) throw AuditError("corpus has no data rows: " + path);

    auto required = [&](const std::string& name) {
        int idx = table.column(name);
        if (idx < 0) throw AuditError("corpus is missing mapped column '" + name + "'");
        return idx;
    };
    auto optional = [&](const std::string& name) {
        if (name.empty()) return -1;
        int idx = table.column(name);
        if (idx < 0) throw AuditError("corpus is missing mapped column '" + name + "'");
        return idx;
    };

    int c_id = required(schema.essay_id);
    int c_text = required(schema.full_text);
    int c_score = required(schema.holistic_score);
    int c_prompt = optional(schema.prompt_name);
    int c_task = optional(schema.task_type);
    int c_wc = optional(schema.word_count);
    int c_split = optional(schema.split);
    struct DemCol {
        std::string field;
        int col;
    };
    std::vector<DemCol> dem_cols = {
        {"gender", optional(schema.gender)},
        {"grade_level", optional(schema.grade_level)},
        {"ell_status", optional(schema.ell_status)},
        {"race_ethnicity", optional(schema.race_ethnicity)},
        {"economic_status", optional(schema.economic_status)},
        {"disability_status", optional(schema.disability_status)},
    };

    Corpus corpus;
    corpus.records.reserve(table.rows.size());
    std::set<std::string> seen_ids;
    std::map<std::string, std::set<std::string>> levels;

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        std::size_t file_row = r + 2;  // 1-based, after the header

        EssayRecord rec;
        rec.essay_id = row[c_id];
        if (rec.essay_id.empty()) throw AuditError("empty essay_id at row " + std::to_string(file_row));
        if (!seen_ids.insert(rec.essay_id).second)
            throw AuditError("duplicate essay_id '" + rec.essay_id + "' at row " + std::to_string(file_row));
        rec.full_text = row[c_text];
        if (rec.full_text.empty())
            throw AuditError("empty full_text at row " + std::to_string(file_row));

        long score = parse_int(row[c_score], "holistic_score", file_row);
        if (!scale.contains(static_cast<int>(score)))
            throw AuditError("holistic_score " + std::to_string(score) + " outside scale [" +
                             std::to_string(scale.min_score) + "," + std::to_string(scale.max_score) +
                             "] at row " + std::to_string(file_row));
        rec.holistic_score = static_cast<int>(score);

        if (c_prompt >= 0) rec.prompt_name = row[c_prompt];
        if (c_task >= 0) {
            std::string t = lower(row[c_task]);
            rec.task_type = (t == "source-based" || t == "source_based" || t == "text_dependent")
                                ? TaskType::source_based
                                : TaskType::independent;
        }
        if (c_wc >= 0) {
            long wc = parse_int(row[c_wc], "word_count", file_row);
            if (wc < 0) throw AuditError("negative word_count at row " + std::to_string(file_row));
            rec.word_count = wc;
        } else {
            // Rough whitespace token count when no column is mapped.
            bool in_word = false;
            for (unsigned char c : rec.full_text) {
                bool ws = std::isspace(c);
                if (!ws && !in_word) ++rec.word_count;
                in_word = !ws;
            }
        }
        if (c_split >= 0) {
            std::string s = lower(row[c_split]);
            if (s == "train" || s == "public") rec.split = Split::train;
            else if (s == "test" || s == "private") rec.split = Split::test;
            else throw AuditError("unrecognized split label '" + row[c_split] + "' at row " +
                                  std::to_string(file_row));
        }
        for (const auto& dc : dem_cols) {
            std::string label = dc.col >= 0 ? normalize_label(row[dc.col]) : kUnknownLabel;
            if (dc.field == "gender") rec.demographics.gender = label;
            else if (dc.field == "grade_level") rec.demographics.grade_level = label;
            else if (dc.field == "ell_status") rec.demographics.ell_status = label;
            else if (dc.field == "race_ethnicity") rec.demographics.race_ethnicity = label;
            else if (dc.field == "economic_status") rec.demographics.economic_status = label;
            else rec.demographics.disability_status = label;
            levels[dc.field].insert(label);
        }
        corpus.records.push_back(std::move(rec));
    }
    for (auto& [field, set] : levels)
        corpus.demographic_levels[field] = std::vector<std::string>(set.begin(), set.end());
    return corpus;
}

void save_corpus(const std::string& path, const Corpus& corpus, const CorpusSchema& schema) {
    csv::Table table;
    auto add = [&](const std::string& name) {
        if (!name.empty()) table.header.push_back(name);
        return !name.empty();
    };
    add(schema.essay_id);
    add(schema.full_text);
    add(schema.holistic_score);
    bool has_prompt = add(schema.prompt_name);
    bool has_task = add(schema.task_type);
    bool has_wc = add(schema.word_count);
    bool has_split = add(schema.split);
    bool has_gender = add(schema.gender);
    bool has_grade = add(schema.grade_level);
    bool has_ell = add(schema.ell_status);
    bool has_race = add(schema.race_ethnicity);
    bool has_econ = add(schema.economic_status);
    bool has_dis = add(schema.disability_status);

    for (const auto& rec : corpus.records) {
        std::vector<std::string> row;
        row.push_back(rec.essay_id);
        row.push_back(rec.full_text);
        row.push_back(std::to_string(rec.holistic_score));
        if (has_prompt) row.push_back(rec.prompt_name);
        if (has_task) row.push_back(to_string(rec.task_type));
        if (has_wc) row.push_back(std::to_string(rec.word_count));
        if (has_split) row.push_back(to_string(rec.split));
        if (has_gender) row.push_back(rec.demographics.gender);
        if (has_grade) row.push_back(rec.demographics.grade_level);
        if (has_ell) row.push_back(rec.demographics.ell_status);
        if (has_race) row.push_back(rec.demographics.race_ethnicity);
        if (has_econ) row.push_back(rec.demographics.economic_status);
        if (has_dis) row.push_back(rec.demographics.disability_status);
        table.rows.push_back(std::move(row));
    }
    csv::write_file(path, table);
}

std::vector<PredictionRecord> load_predictions(const std::string& path, const ScoreScale& scale) {
    csv::Table table = csv::read_file(path);
    int c_id = table.column("essay_id");
    int c_true = table.column("true_score");
    int c_pred = table.column("predicted_score");
    if (c_id < 0) throw AuditError("predictions file is missing column 'essay_id'");
    if (c_true < 0) throw AuditError("predictions file is missing column 'true_score'");
    if (c_pred < 0) throw AuditError("predictions file is missing column 'predicted_score'");
    int c_conf = table.column("confidence");
    int c_rat = table.column("rationale");

    std::vector<PredictionRecord> preds;
    preds.reserve(table.rows.size());
    std::set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        std::size_t file_row = r + 2;
        PredictionRecord p;
        p.essay_id = row[c_id];
        if (!seen.insert(p.essay_id).second)
            throw AuditError("duplicate essay_id '" + p.essay_id + "' at row " + std::to_string(file_row));
        long t = parse_int(row[c_true], "true_score", file_row);
        long y = parse_int(row[c_pred], "predicted_score", file_row);
        for (long v : {t, y})
            if (!scale.contains(static_cast<int>(v)))
                throw AuditError("score " + std::to_string(v) + " outside scale at row " +
                                 std::to_string(file_row));
        p.true_score = static_cast<int>(t);
        p.predicted_score = static_cast<int>(y);
        if (c_conf >= 0 && !row[c_conf].empty()) {
            double c = std::stod(row[c_conf]);
            if (c < 0.0 || c > 1.0)
                throw AuditError("confidence " + row[c_conf] + " outside [0,1] at row " +
                                 std::to_string(file_row));
            p.confidence = c;
        }
        if (c_rat >= 0 && !row[c_rat].empty()) p.rationale = row[c_rat];
        preds.push_back(std::move(p));
    }
    return preds;
}

void save_predictions(const std::string& path, const std::vector<PredictionRecord>& preds) {
    csv::Table table;
    table.header = {"essay_id", "true_score", "predicted_score", "confidence", "rationale"};
    for (const auto& p : preds) {
        std::vector<std::string> row(5);
        row[0] = p.essay_id;
        row[1] = std::to_string(p.true_score);
        row[2] = std::to_string(p.predicted_score);
        if (p.confidence) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", *p.confidence);
            row[3] = buf;
        }
        if (p.rationale) row[4] = *p.rationale;
        table.rows.push_back(std::move(row));
    }
    csv::write_file(path, table);
}

GroupPartition partition_by(const std::vector<EssayRecord>& records, const std::string& attribute) {
    GroupPartition part;
    part.attribute_name = attribute;
    std::set<std::string> labels;
    for (const auto& rec : records) {
        const std::string& label = rec.demographics.field(attribute);
        if (label == kUnknownLabel) {
            ++part.excluded_unknown;
            continue;
        }
        part.assignment[rec.essay_id] = label;
        labels.insert(label);
    }
    if (labels.size() < 2)
        throw AuditError("partition by '" + attribute + "' is degenerate: fewer than 2 known groups");
    part.group_labels.assign(labels.begin(), labels.end());
    return part;
}

}  // namespace essay_audit
