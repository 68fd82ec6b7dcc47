#include "essay_audit/probe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "essay_audit/csv.hpp"
#include "essay_audit/metrics.hpp"
#include "essay_audit/rng.hpp"

namespace essay_audit::probe {

EncodedDemographics encode_demographics(const std::vector<EssayRecord>& records,
                                        const std::vector<std::string>& attributes) {
    if (records.empty()) throw AuditError("encode_demographics: no records");

    struct Indicator {
        std::string attribute;
        std::string level;
    };
    std::vector<Indicator> indicators;
    EncodedDemographics enc;
    bool any_usable = false;
    for (const auto& attr : attributes) {
        std::set<std::string> levels;
        for (const auto& rec : records) levels.insert(rec.demographics.field(attr));
        if (levels.size() >= 2) any_usable = true;
        for (const auto& level : levels) indicators.push_back({attr, level});
    }
    if (!any_usable) throw AuditError("encode_demographics: no attribute has 2 or more levels");

    for (const auto& ind : indicators) enc.column_names.push_back(ind.attribute + "=" + ind.level);
    enc.values = Matrix(records.size(), indicators.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        enc.row_essay_ids.push_back(records[r].essay_id);
        for (std::size_t c = 0; c < indicators.size(); ++c)
            if (records[r].demographics.field(indicators[c].attribute) == indicators[c].level)
                enc.values.at(r, c) = 1.0;
    }
    return enc;
}

ProbeReport run_probe(const std::vector<EssayRecord>& records, const ScoreScale& scale,
                      const gbm::Config& config, SplitPolicy policy,
                      const std::vector<std::string>& attributes) {
    if (records.empty()) throw AuditError("run_probe: no records");

    std::vector<std::size_t> train_idx, test_idx;
    if (policy == SplitPolicy::dataset) {
        for (std::size_t i = 0; i < records.size(); ++i)
            (records[i].split == Split::train ? train_idx : test_idx).push_back(i);
    } else {
        // seeded stratified 80/20: within each score class, every 5th record
        // of a seeded shuffle goes to test
        std::map<int, std::vector<std::size_t>> by_score;
        for (std::size_t i = 0; i < records.size(); ++i)
            by_score[records[i].holistic_score].push_back(i);
        for (auto& [score, idx] : by_score) {
            auto rng = make_rng(config.seed, static_cast<std::uint64_t>(score));
            std::shuffle(idx.begin(), idx.end(), rng);
            for (std::size_t j = 0; j < idx.size(); ++j)
                (j % 5 == 4 ? test_idx : train_idx).push_back(idx[j]);
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(test_idx.begin(), test_idx.end());
    }
    if (train_idx.empty() || test_idx.empty())
        throw AuditError("run_probe: degenerate split (empty train or test)");

    EncodedDemographics enc = encode_demographics(records, attributes);

    auto subset = [&](const std::vector<std::size_t>& idx) {
        Matrix m(idx.size(), enc.values.cols);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < enc.values.cols; ++c)
                m.at(r, c) = enc.values.at(idx[r], c);
        return m;
    };
    Matrix X_train = subset(train_idx);
    Matrix X_test = subset(test_idx);
    std::vector<int> y_train;
    for (std::size_t i : train_idx) y_train.push_back(records[i].holistic_score);

    gbm::Model model = gbm::fit_classifier(X_train, y_train, config);
    std::vector<int> predicted = gbm::predict_labels(model, X_test);

    std::vector<PredictionRecord> preds;
    for (std::size_t j = 0; j < test_idx.size(); ++j) {
        PredictionRecord p;
        p.essay_id = records[test_idx[j]].essay_id;
        p.true_score = records[test_idx[j]].holistic_score;
        p.predicted_score = predicted[j];
        preds.push_back(std::move(p));
    }
    KappaResult kappa = quadratic_weighted_kappa(build_confusion_matrix(preds, scale));

    ProbeReport report;
    report.prompt_name = records.front().prompt_name;
    report.kappa = kappa.kappa;
    report.interpretation = interpret_kappa(kappa.kappa);
    report.feature_columns = enc.column_names;
    report.split_policy = policy == SplitPolicy::dataset ? "dataset" : "stratified_80_20";
    report.n_train = train_idx.size();
    report.n_test = test_idx.size();
    // counts follow the caller's attribute order
    for (const auto& attr : attributes) {
        int count = 0;
        for (const auto& name : enc.column_names)
            if (name.substr(0, name.find('=')) == attr) ++count;
        if (count > 0) report.per_attribute_column_counts.emplace_back(attr, count);
    }
    return report;
}

void export_probe_csv(const std::string& path, const std::vector<ProbeReport>& reports) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AuditError("cannot write file: " + path);
    out << "prompt,kappa,interpretation\n";
    for (const auto& r : reports) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", r.kappa);
        out << csv::escape_field(r.prompt_name) << ',' << buf << ',' << r.interpretation << '\n';
    }
}

}  // namespace essay_audit::probe
