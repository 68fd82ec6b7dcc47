#include "essay_audit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "essay_audit/explain.hpp"
#include "essay_audit/fairness.hpp"
#include "essay_audit/features.hpp"
#include "essay_audit/metrics.hpp"
#include "essay_audit/probe.hpp"

namespace essay_audit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AuditError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string timestamp_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AuditError("cannot write file: " + path);
    out << text;
}

}  // namespace

std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(c));
        else if (!out.empty() && out.back() != '_') out += '_';
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "default" : out;
}

RunConfig load_config(const std::string& path) {
    std::string text = read_file(path);
    json j = json::parse(text);

    RunConfig config;
    config.config_path = path;
    config.config_hash = fnv1a_hex(j.dump());

    const json& corpus = j.at("corpus");
    config.corpus_path = corpus.at("path").get<std::string>();
    if (corpus.contains("columns")) {
        const json& cols = corpus["columns"];
        auto get = [&](const char* key, std::string& out) {
            if (cols.contains(key)) out = cols[key].get<std::string>();
        };
        get("essay_id", config.schema.essay_id);
        get("full_text", config.schema.full_text);
        get("holistic_score", config.schema.holistic_score);
        get("prompt_name", config.schema.prompt_name);
        get("task_type", config.schema.task_type);
        get("word_count", config.schema.word_count);
        get("split", config.schema.split);
        get("gender", config.schema.gender);
        get("grade_level", config.schema.grade_level);
        get("ell_status", config.schema.ell_status);
        get("race_ethnicity", config.schema.race_ethnicity);
        get("economic_status", config.schema.economic_status);
        get("disability_status", config.schema.disability_status);
    }
    if (j.contains("scale"))
        config.scale = ScoreScale(j["scale"].at("min").get<int>(), j["scale"].at("max").get<int>());
    if (j.contains("prompt_filter")) config.prompt_filter = j["prompt_filter"].get<std::string>();

    if (j.contains("scorer")) {
        const json& s = j["scorer"];
        std::string kind = s.at("kind").get<std::string>();
        if (kind == "gbm_classifier") config.scorer = ScorerKind::gbm_classifier;
        else if (kind == "gbm_regressor") config.scorer = ScorerKind::gbm_regressor;
        else if (kind == "llm_zero_shot") config.scorer = ScorerKind::llm_zero_shot;
        else if (kind == "llm_fewshot_cot") config.scorer = ScorerKind::llm_fewshot_cot;
        else if (kind == "external") config.scorer = ScorerKind::external_predictions;
        else throw AuditError("unknown scorer kind: " + kind);
        if (s.contains("predictions_path"))
            config.external_predictions_path = s["predictions_path"].get<std::string>();
    }
    if (j.contains("gbm")) {
        const json& g = j["gbm"];
        auto getd = [&](const char* key, double& out) { if (g.contains(key)) out = g[key].get<double>(); };
        auto geti = [&](const char* key, int& out) { if (g.contains(key)) out = g[key].get<int>(); };
        getd("learning_rate", config.gbm.learning_rate);
        geti("max_iterations", config.gbm.max_iterations);
        geti("max_leaf_nodes", config.gbm.max_leaf_nodes);
        geti("max_depth", config.gbm.max_depth);
        geti("min_samples_leaf", config.gbm.min_samples_leaf);
        geti("n_bins", config.gbm.n_bins);
        getd("leaf_regularization", config.gbm.leaf_regularization);
        if (g.contains("class_weighting"))
            config.gbm.balanced_class_weights = g["class_weighting"].get<std::string>() == "balanced";
    }
    if (j.contains("llm")) {
        const json& l = j["llm"];
        if (l.contains("endpoint_url")) config.llm.endpoint_url = l["endpoint_url"].get<std::string>();
        if (l.contains("model")) config.llm.model = l["model"].get<std::string>();
        if (l.contains("temperature")) config.llm.temperature = l["temperature"].get<double>();
        if (l.contains("max_retries")) config.llm.max_retries = l["max_retries"].get<int>();
        if (l.contains("backoff_base_ms"))
            config.llm.backoff_base = std::chrono::milliseconds(l["backoff_base_ms"].get<int>());
        if (l.contains("max_in_flight")) config.llm.max_in_flight = l["max_in_flight"].get<int>();
        if (l.contains("request_timeout_ms"))
            config.llm.request_timeout = std::chrono::milliseconds(l["request_timeout_ms"].get<int>());
        if (l.contains("api_key_env")) config.llm.api_key_env = l["api_key_env"].get<std::string>();
        if (l.contains("rubric_path")) config.rubric_path = l["rubric_path"].get<std::string>();
    }
    if (j.contains("fairness")) {
        const json& f = j["fairness"];
        if (f.contains("attributes"))
            config.fairness_attributes = f["attributes"].get<std::vector<std::string>>();
        if (f.contains("permutations")) config.fairness_permutations = f["permutations"].get<int>();
        if (f.contains("test_split_only"))
            config.fairness_test_split_only = f["test_split_only"].get<bool>();
    }
    if (j.contains("probe")) {
        const json& p = j["probe"];
        if (p.contains("split_policy")) config.probe_split_policy = p["split_policy"].get<std::string>();
        if (p.contains("attributes"))
            config.probe_attributes = p["attributes"].get<std::vector<std::string>>();
    }
    if (j.contains("explain")) {
        const json& e = j["explain"];
        if (e.contains("metric")) config.explain_metric = e["metric"].get<std::string>();
        if (e.contains("repeats")) config.explain_repeats = e["repeats"].get<int>();
        if (e.contains("top_k")) config.explain_top_k = e["top_k"].get<int>();
    }
    if (j.contains("features")) {
        const json& f = j["features"];
        if (f.contains("use_tfidf")) config.use_tfidf = f["use_tfidf"].get<bool>();
        if (f.contains("familiar_words_path"))
            config.familiar_words_path = f["familiar_words_path"].get<std::string>();
        if (f.contains("external_features_path"))
            config.external_features_path = f["external_features_path"].get<std::string>();
    }
    if (j.contains("output_dir")) config.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("seed")) config.seed = j["seed"].get<std::uint64_t>();
    config.gbm.seed = config.seed;
    return config;
}

ValidationReport validate_config(const RunConfig& config) {
    ValidationReport report;
    auto check_path = [&](const std::string& path, const std::string& what) {
        if (!path.empty() && !fs::exists(path))
            report.violations.push_back(what + " does not exist: " + path);
    };
    if (config.corpus_path.empty())
        report.violations.push_back("corpus.path is missing");
    else
        check_path(config.corpus_path, "corpus.path");
    if (config.scale.min_score >= config.scale.max_score)
        report.violations.push_back("scale.min must be below scale.max");
    if (config.scorer == ScorerKind::external_predictions) {
        if (config.external_predictions_path.empty())
            report.violations.push_back("scorer.predictions_path required for external scorer");
        else
            check_path(config.external_predictions_path, "scorer.predictions_path");
    } else if (!config.external_predictions_path.empty()) {
        report.violations.push_back(
            "scorer.predictions_path is set but scorer.kind is not 'external': exactly one scorer "
            "source per run");
    }
    if (config.scorer == ScorerKind::llm_zero_shot || config.scorer == ScorerKind::llm_fewshot_cot) {
        if (config.llm.endpoint_url.empty())
            report.violations.push_back("llm.endpoint_url required for LLM scorer");
        if (config.rubric_path.empty())
            report.violations.push_back("llm.rubric_path required for LLM scorer");
        else
            check_path(config.rubric_path, "llm.rubric_path");
    }
    check_path(config.familiar_words_path, "features.familiar_words_path");
    check_path(config.external_features_path, "features.external_features_path");
    try {
        config.gbm.validate();
    } catch (const std::exception& e) {
        report.violations.push_back(e.what());
    }
    if (config.fairness_permutations < 0)
        report.violations.push_back("fairness.permutations must be >= 0");
    for (const auto& attr : config.fairness_attributes) {
        const auto& names = DemographicProfile::field_names();
        if (std::find(names.begin(), names.end(), attr) == names.end())
            report.violations.push_back("unknown fairness attribute: " + attr);
    }
    if (config.probe_split_policy != "dataset" && config.probe_split_policy != "stratified")
        report.violations.push_back("probe.split_policy must be 'dataset' or 'stratified'");
    return report;
}

int cmd_validate(const RunConfig& config) {
    ValidationReport report = validate_config(config);
    if (report.ok()) {
        std::cout << "ok\n";
        return exit_ok;
    }
    for (const auto& v : report.violations) std::cout << "violation: " << v << "\n";
    return exit_validation_failure;
}

namespace {

// All per-prompt groups, file order preserved; prompt filter applied.
std::map<std::string, std::vector<EssayRecord>> group_by_prompt(const Corpus& corpus,
                                                                const RunConfig& config) {
    std::map<std::string, std::vector<EssayRecord>> groups;
    for (const auto& rec : corpus.records) {
        if (config.prompt_filter && rec.prompt_name != *config.prompt_filter) continue;
        groups[rec.prompt_name].push_back(rec);
    }
    if (groups.empty()) throw AuditError("no essays match the prompt filter");
    return groups;
}

struct TrainedScorer {
    gbm::Model model;
    features::TfidfModel tfidf;
    bool has_tfidf = false;
    features::FeatureMatrix test_features;
    std::vector<EssayRecord> test_records;
};

TrainedScorer train_gbm_scorer(const RunConfig& config, const std::vector<EssayRecord>& records) {
    std::vector<EssayRecord> train, test;
    for (const auto& rec : records)
        (rec.split == Split::train ? train : test).push_back(rec);
    if (train.empty()) throw AuditError("GBM scorer: corpus has no train split");
    if (test.empty()) throw AuditError("GBM scorer: corpus has no test split");

    TrainedScorer scorer;
    std::unique_ptr<features::FamiliarWords> familiar;
    if (!config.familiar_words_path.empty())
        familiar = std::make_unique<features::FamiliarWords>(
            features::FamiliarWords::load(config.familiar_words_path));

    const features::TfidfModel* tfidf_ptr = nullptr;
    if (config.use_tfidf) {
        std::vector<std::string> texts;
        for (const auto& rec : train) texts.push_back(rec.full_text);
        try {
            scorer.tfidf = features::tfidf_fit(texts);
            scorer.has_tfidf = true;
            tfidf_ptr = &scorer.tfidf;
        } catch (const AuditError&) {
            // tiny corpora can have nothing above min-df; fall back to stats only
        }
    }
    std::unique_ptr<features::ExternalFeatures> external;
    if (!config.external_features_path.empty())
        external = std::make_unique<features::ExternalFeatures>(
            features::load_external_features(config.external_features_path));

    features::FeatureMatrix train_fm =
        features::build_feature_matrix(train, tfidf_ptr, external.get(), familiar.get());
    scorer.test_features =
        features::build_feature_matrix(test, tfidf_ptr, external.get(), familiar.get());
    scorer.test_records = std::move(test);

    if (config.scorer == ScorerKind::gbm_classifier) {
        std::vector<int> y;
        for (const auto& rec : train) y.push_back(rec.holistic_score);
        scorer.model = gbm::fit_classifier(train_fm.values, y, config.gbm);
    } else {
        std::vector<double> y;
        for (const auto& rec : train) y.push_back(static_cast<double>(rec.holistic_score));
        scorer.model = gbm::fit_regressor(train_fm.values, y, config.gbm);
    }
    return scorer;
}

std::vector<PredictionRecord> predict_with_gbm(const RunConfig& config, TrainedScorer& scorer) {
    std::vector<int> scores =
        gbm::predict_scores(scorer.model, scorer.test_features.values, config.scale);
    std::vector<PredictionRecord> preds;
    Matrix proba;
    bool classifier = scorer.model.task == gbm::Model::Task::classifier;
    if (classifier) proba = gbm::predict_proba(scorer.model, scorer.test_features.values);
    for (std::size_t i = 0; i < scorer.test_records.size(); ++i) {
        PredictionRecord p;
        p.essay_id = scorer.test_records[i].essay_id;
        p.true_score = scorer.test_records[i].holistic_score;
        p.predicted_score = scores[i];
        if (classifier) {
            double best = 0.0;
            for (std::size_t k = 0; k < proba.cols; ++k) best = std::max(best, proba.at(i, k));
            p.confidence = best;
        }
        preds.push_back(std::move(p));
    }
    return preds;
}

llm::ScoringStrategy build_llm_strategy(const RunConfig& config,
                                        const std::vector<EssayRecord>& records) {
    llm::ScoringStrategy strategy;
    strategy.kind = config.scorer == ScorerKind::llm_zero_shot ? llm::StrategyKind::zero_shot
                                                               : llm::StrategyKind::fewshot_cot;
    strategy.rubric = read_file(config.rubric_path);
    if (strategy.kind == llm::StrategyKind::fewshot_cot) {
        // 2 examples per score from the train split, file order
        std::map<int, int> taken;
        for (const auto& rec : records) {
            if (rec.split != Split::train) continue;
            if (taken[rec.holistic_score] >= 2) continue;
            ++taken[rec.holistic_score];
            strategy.examples.push_back({rec.full_text, rec.holistic_score});
        }
        if (strategy.examples.empty())
            throw AuditError("few-shot scorer: no train-split examples available");
    }
    return strategy;
}

std::string predictions_path_for(const RunConfig& config, const std::string& prompt) {
    return (fs::path(config.output_dir) / ("predictions_" + sanitize_filename(prompt) + ".csv"))
        .string();
}

}  // namespace

int cmd_score(const RunConfig& config) {
    ValidationReport validation = validate_config(config);
    if (!validation.ok()) {
        for (const auto& v : validation.violations) std::cerr << "violation: " << v << "\n";
        return exit_validation_failure;
    }
    if (config.scorer == ScorerKind::external_predictions) {
        std::cerr << "score: external predictions are consumed directly by evaluate/fairness\n";
        return exit_validation_failure;
    }
    fs::create_directories(config.output_dir);
    Corpus corpus = load_corpus(config.corpus_path, config.schema, config.scale);
    auto groups = group_by_prompt(corpus, config);

    long failures = 0;
    for (auto& [prompt, records] : groups) {
        std::vector<PredictionRecord> preds;
        if (config.scorer == ScorerKind::gbm_classifier ||
            config.scorer == ScorerKind::gbm_regressor) {
            TrainedScorer scorer = train_gbm_scorer(config, records);
            preds = predict_with_gbm(config, scorer);
        } else {
            llm::ScoringStrategy strategy = build_llm_strategy(config, records);
            llm::Client client(config.llm, llm::make_http_transport());
            std::vector<EssayRecord> test;
            for (const auto& rec : records)
                if (rec.split == Split::test) test.push_back(rec);
            if (test.empty()) throw AuditError("LLM scorer: corpus has no test split");
            for (auto& outcome : client.score_batch(strategy, test, config.scale)) {
                if (outcome.ok) {
                    preds.push_back(std::move(outcome.prediction));
                } else {
                    ++failures;
                    std::cerr << "essay " << outcome.essay_id << " failed: " << outcome.error << "\n";
                }
            }
        }
        std::string path = predictions_path_for(config, prompt);
        save_predictions(path, preds);
        std::cout << "wrote " << path << " (" << preds.size() << " predictions)\n";
    }
    if (failures > 0) {
        std::cerr << failures << " per-essay failures\n";
        return exit_partial_failure;
    }
    return exit_ok;
}

namespace {

json evaluation_section(const RunConfig& config, const std::vector<PredictionRecord>& preds,
                        const std::string& prompt) {
    ConfusionMatrix cm = build_confusion_matrix(preds, config.scale);
    KappaResult kappa = quadratic_weighted_kappa(cm);
    EdgeReport edge = edge_robustness(cm);

    std::string confusion_path =
        (fs::path(config.output_dir) / ("confusion_" + sanitize_filename(prompt) + ".csv")).string();
    export_confusion_csv(confusion_path, cm);

    json section;
    section["kappa"] = kappa.kappa;
    section["kappa_degenerate"] = kappa.degenerate;
    section["interpretation"] = interpret_kappa(kappa.kappa);
    section["n_predictions"] = cm.total;
    section["confusion_csv"] = confusion_path;
    json recalls = json::array();
    for (int k = 0; k < config.scale.categories(); ++k) {
        json cell;
        cell["score"] = config.scale.score_at(k);
        cell["support"] = edge.per_class_support[k];
        if (edge.per_class_recall[k]) cell["recall"] = *edge.per_class_recall[k];
        else cell["recall"] = nullptr;
        recalls.push_back(cell);
    }
    section["per_class_recall"] = recalls;
    section["within_one_accuracy"] = edge.within_one_accuracy;
    return section;
}

json fairness_section(const RunConfig& config, const Corpus& corpus,
                      std::vector<PredictionRecord> preds) {
    if (config.fairness_test_split_only) {
        std::vector<PredictionRecord> filtered;
        for (auto& p : preds) {
            const EssayRecord* rec = corpus.find(p.essay_id);
            if (rec && rec->split == Split::test) filtered.push_back(std::move(p));
        }
        preds = std::move(filtered);
    }
    if (preds.empty()) throw AuditError("fairness: no predictions after split filtering");

    json section;
    section["test_split_only"] = config.fairness_test_split_only;
    json per_attribute = json::object();
    for (const auto& attr : config.fairness_attributes) {
        json entry;
        GroupPartition partition = partition_by(corpus.records, attr);
        std::vector<PredictionRecord> assigned;
        long excluded = 0;
        for (const auto& p : preds) {
            if (partition.assignment.count(p.essay_id)) assigned.push_back(p);
            else ++excluded;
        }
        entry["excluded_unknown_predictions"] = excluded;
        if (assigned.empty()) throw AuditError("fairness: no assigned predictions for " + attr);
        GroupRates rates = group_rates(assigned, partition, config.scale);
        json gaps = json::array();
        for (int k = config.scale.min_score; k <= config.scale.max_score; ++k) {
            OddsGapEntry gap = equalized_odds_gap(rates, k);
            json cell;
            cell["score"] = k;
            cell["tpr_gap"] = gap.tpr_gap ? json(*gap.tpr_gap) : json(nullptr);
            cell["fpr_gap"] = gap.fpr_gap ? json(*gap.fpr_gap) : json(nullptr);
            cell["eo_gap"] = gap.eo_gap ? json(*gap.eo_gap) : json(nullptr);
            gaps.push_back(cell);
        }
        entry["equalized_odds"] = gaps;
        entry["groups"] = rates.groups;

        PermutationConfig perm;
        perm.n_permutations = config.fairness_permutations;
        perm.seed = config.seed;
        for (auto kind : {RegressionFairnessKind::osa, RegressionFairnessKind::osd}) {
            RegressionFairnessResult reg =
                kind == RegressionFairnessKind::osa
                    ? osa(assigned, corpus, {attr}, perm)
                    : osd(assigned, corpus, {attr}, perm);
            json rj;
            rj["r_squared"] = reg.r_squared;
            rj["permutation_p_value"] = reg.permutation_p_value;
            rj["n"] = reg.n;
            rj["constant_target"] = reg.constant_target;
            rj["ridged"] = reg.ridged;
            json coefs = json::object();
            for (std::size_t i = 0; i < reg.coefficients.size(); ++i)
                coefs[reg.coefficient_names[i]] = reg.coefficients[i];
            rj["coefficients"] = coefs;
            entry[kind == RegressionFairnessKind::osa ? "osa" : "osd"] = rj;
        }
        per_attribute[attr] = entry;
    }
    section["attributes"] = per_attribute;
    return section;
}

std::vector<PredictionRecord> load_predictions_checked(const RunConfig& config,
                                                       const std::string& path) {
    std::vector<PredictionRecord> preds = load_predictions(path, config.scale);
    if (preds.empty()) throw AuditError("predictions file is empty: " + path);
    return preds;
}

}  // namespace

int cmd_evaluate(const RunConfig& config, const std::string& predictions_path) {
    fs::create_directories(config.output_dir);
    std::vector<PredictionRecord> preds = load_predictions_checked(config, predictions_path);
    json section = evaluation_section(config, preds, fs::path(predictions_path).stem().string());
    std::string out =
        (fs::path(config.output_dir) / "evaluation.json").string();
    write_text(out, section.dump(2) + "\n");
    std::cout << "kappa " << section["kappa"].get<double>() << " ("
              << section["interpretation"].get<std::string>() << "), wrote " << out << "\n";
    return exit_ok;
}

int cmd_fairness(const RunConfig& config, const std::string& predictions_path) {
    fs::create_directories(config.output_dir);
    Corpus corpus = load_corpus(config.corpus_path, config.schema, config.scale);
    std::vector<PredictionRecord> preds = load_predictions_checked(config, predictions_path);
    json section = fairness_section(config, corpus, preds);

    // Table-3-style CSV: one row per attribute, one column per score class.
    std::string matrix_path = (fs::path(config.output_dir) / "equalized_odds.csv").string();
    std::ofstream matrix(matrix_path, std::ios::binary);
    matrix << "attribute";
    for (int k = config.scale.min_score; k <= config.scale.max_score; ++k) matrix << ',' << k;
    matrix << '\n';
    for (const auto& [attr, entry] : section["attributes"].items()) {
        matrix << attr;
        for (const auto& cell : entry["equalized_odds"]) {
            matrix << ',';
            if (!cell["eo_gap"].is_null()) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.4f", cell["eo_gap"].get<double>());
                matrix << buf;
            }
        }
        matrix << '\n';
    }
    std::string out = (fs::path(config.output_dir) / "fairness.json").string();
    write_text(out, section.dump(2) + "\n");
    std::cout << "wrote " << out << " and " << matrix_path << "\n";
    return exit_ok;
}

int cmd_probe(const RunConfig& config) {
    fs::create_directories(config.output_dir);
    Corpus corpus = load_corpus(config.corpus_path, config.schema, config.scale);
    auto groups = group_by_prompt(corpus, config);

    probe::SplitPolicy policy = config.probe_split_policy == "stratified"
                                    ? probe::SplitPolicy::stratified_80_20
                                    : probe::SplitPolicy::dataset;
    std::vector<probe::ProbeReport> reports;
    for (const auto& [prompt, records] : groups)
        reports.push_back(
            probe::run_probe(records, config.scale, config.gbm, policy, config.probe_attributes));

    std::string out = (fs::path(config.output_dir) / "probe.csv").string();
    probe::export_probe_csv(out, reports);
    for (const auto& r : reports)
        std::cout << (r.prompt_name.empty() ? "(all)" : r.prompt_name) << " kappa " << r.kappa
                  << " (" << r.interpretation << ")\n";
    std::cout << "wrote " << out << "\n";
    return exit_ok;
}

namespace {

json explain_section(const RunConfig& config, const std::vector<EssayRecord>& records,
                     const std::string& prompt) {
    RunConfig gbm_config = config;
    if (gbm_config.scorer != ScorerKind::gbm_regressor)
        gbm_config.scorer = ScorerKind::gbm_classifier;
    TrainedScorer scorer = train_gbm_scorer(gbm_config, records);

    explain::ImportanceMetric metric = explain::ImportanceMetric::accuracy;
    if (config.explain_metric == "qwk") metric = explain::ImportanceMetric::qwk;
    else if (config.explain_metric == "r_squared") metric = explain::ImportanceMetric::r_squared;
    if (scorer.model.task == gbm::Model::Task::regressor)
        metric = explain::ImportanceMetric::r_squared;

    std::vector<double> y;
    for (const auto& rec : scorer.test_records) y.push_back(rec.holistic_score);
    explain::ImportanceReport report = explain::permutation_importance(
        scorer.model, scorer.test_features.values, y, metric, config.explain_repeats, config.seed);

    std::string csv_path =
        (fs::path(config.output_dir) / ("importance_" + sanitize_filename(prompt) + ".csv")).string();
    explain::export_importance_csv(csv_path, report, scorer.test_features.column_names);

    json section;
    section["metric"] = report.metric_name;
    section["baseline_metric"] = report.baseline_metric;
    section["repeats"] = report.repeats;
    section["importance_csv"] = csv_path;
    json top = json::array();
    std::vector<const explain::FeatureImportance*> ranked;
    for (const auto& fi : report.features) ranked.push_back(&fi);
    std::sort(ranked.begin(), ranked.end(),
              [](const auto* a, const auto* b) { return a->rank < b->rank; });
    for (int i = 0; i < std::min<int>(config.explain_top_k, static_cast<int>(ranked.size())); ++i) {
        json f;
        f["feature"] = scorer.test_features.column_names[ranked[i]->feature];
        f["mean_drop"] = ranked[i]->mean_drop;
        f["std_dev"] = ranked[i]->std_dev;
        top.push_back(f);
    }
    section["top_features"] = top;
    return section;
}

}  // namespace

int cmd_explain(const RunConfig& config) {
    fs::create_directories(config.output_dir);
    Corpus corpus = load_corpus(config.corpus_path, config.schema, config.scale);
    auto groups = group_by_prompt(corpus, config);
    for (const auto& [prompt, records] : groups) {
        json section = explain_section(config, records, prompt);
        std::string out =
            (fs::path(config.output_dir) / ("explain_" + sanitize_filename(prompt) + ".json"))
                .string();
        write_text(out, section.dump(2) + "\n");
        std::cout << "wrote " << out << "\n";
    }
    return exit_ok;
}

int cmd_report(const RunConfig& config) {
    ValidationReport validation = validate_config(config);
    if (!validation.ok()) {
        for (const auto& v : validation.violations) std::cerr << "violation: " << v << "\n";
        return exit_validation_failure;
    }
    fs::create_directories(config.output_dir);
    Corpus corpus = load_corpus(config.corpus_path, config.schema, config.scale);
    auto groups = group_by_prompt(corpus, config);

    json report;
    report["tool_version"] = kToolVersion;
    report["config_hash"] = config.config_hash;
    report["seed"] = config.seed;
    json prompts = json::object();
    bool partial = false;

    for (auto& [prompt, records] : groups) {
        json sections = json::object();
        auto attempt = [&](const char* name, auto&& fn) {
            try {
                sections[name] = fn();
            } catch (const std::exception& e) {
                sections[name] = {{"skipped", true}, {"reason", e.what()}};
                partial = true;
            }
        };

        std::vector<PredictionRecord> preds;
        attempt("predictions", [&] {
            if (config.scorer == ScorerKind::external_predictions) {
                preds = load_predictions_checked(config, config.external_predictions_path);
            } else {
                std::string path = predictions_path_for(config, prompt);
                if (fs::exists(path)) {
                    preds = load_predictions_checked(config, path);
                } else if (config.scorer == ScorerKind::gbm_classifier ||
                           config.scorer == ScorerKind::gbm_regressor) {
                    TrainedScorer scorer = train_gbm_scorer(config, records);
                    preds = predict_with_gbm(config, scorer);
                    save_predictions(path, preds);
                } else {
                    throw AuditError("no stored predictions at " + path +
                                     "; run the score subcommand first");
                }
            }
            return json{{"count", preds.size()}};
        });
        if (!preds.empty()) {
            attempt("evaluation", [&] { return evaluation_section(config, preds, prompt); });
            attempt("fairness", [&] { return fairness_section(config, corpus, preds); });
        } else {
            json skipped = {{"skipped", true}, {"reason", "no predictions"}};
            sections["evaluation"] = skipped;
            sections["fairness"] = skipped;
            partial = true;
        }
        attempt("probe", [&] {
            probe::SplitPolicy policy = config.probe_split_policy == "stratified"
                                            ? probe::SplitPolicy::stratified_80_20
                                            : probe::SplitPolicy::dataset;
            probe::ProbeReport pr =
                probe::run_probe(records, config.scale, config.gbm, policy, config.probe_attributes);
            return json{{"kappa", pr.kappa},
                        {"interpretation", pr.interpretation},
                        {"split_policy", pr.split_policy},
                        {"n_train", pr.n_train},
                        {"n_test", pr.n_test}};
        });
        attempt("explain", [&] { return explain_section(config, records, prompt); });
        prompts[prompt.empty() ? "(all)" : prompt] = sections;
    }
    report["prompts"] = prompts;

    json timed = report;
    timed["generated_at"] = timestamp_now();
    std::string report_path = (fs::path(config.output_dir) / "report.json").string();
    write_text(report_path, timed.dump(2) + "\n");

    // Markdown summary
    std::ostringstream md;
    md << "# Essay scoring audit\n\n";
    md << "- config hash: `" << config.config_hash << "`\n";
    md << "- seed: " << config.seed << "\n\n";
    for (const auto& [prompt, sections] : prompts.items()) {
        md << "## " << prompt << "\n\n";
        if (sections.contains("evaluation") && !sections["evaluation"].value("skipped", false)) {
            md << "- QWK: " << sections["evaluation"]["kappa"].get<double>() << " ("
               << sections["evaluation"]["interpretation"].get<std::string>() << ")\n";
            md << "- within-one accuracy: "
               << sections["evaluation"]["within_one_accuracy"].get<double>() << "\n";
        }
        if (sections.contains("probe") && !sections["probe"].value("skipped", false))
            md << "- demographic probe kappa: " << sections["probe"]["kappa"].get<double>() << "\n";
        for (const auto& [name, section] : sections.items())
            if (section.is_object() && section.value("skipped", false))
                md << "- " << name << ": skipped (" << section["reason"].get<std::string>() << ")\n";
        md << "\n";
    }
    write_text((fs::path(config.output_dir) / "summary.md").string(), md.str());
    std::cout << "wrote " << report_path << "\n";
    return partial ? exit_partial_failure : exit_ok;
}

int run_cli(int argc, const char* const* argv) {
    if (argc < 2) {
        std::cerr << "usage: essay-audit <validate|score|evaluate|fairness|probe|explain|report> "
                     "--config <path> [--predictions <path>] [--prompt <name>] [--out <dir>] "
                     "[--seed <n>]\n";
        return exit_validation_failure;
    }
    std::string subcommand = argv[1];
    std::string config_path, predictions_path, prompt, out_dir;
    std::optional<std::uint64_t> seed;
    for (int i = 2; i < argc; ++i) {
        std::string arg = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) throw AuditError("missing value for " + arg);
            return argv[++i];
        };
        try {
            if (arg == "--config") config_path = next();
            else if (arg == "--predictions") predictions_path = next();
            else if (arg == "--prompt") prompt = next();
            else if (arg == "--out") out_dir = next();
            else if (arg == "--seed") seed = std::stoull(next());
            else {
                std::cerr << "unknown argument: " << arg << "\n";
                return exit_validation_failure;
            }
        } catch (const std::exception& e) {
            std::cerr << e.what() << "\n";
            return exit_validation_failure;
        }
    }
    if (config_path.empty()) {
        std::cerr << "--config is required\n";
        return exit_validation_failure;
    }
    try {
        RunConfig config = load_config(config_path);
        if (!prompt.empty()) config.prompt_filter = prompt;
        if (!out_dir.empty()) config.output_dir = out_dir;
        if (seed) {
            config.seed = *seed;
            config.gbm.seed = *seed;
        }
        if (subcommand == "validate") return cmd_validate(config);
        if (subcommand == "score") return cmd_score(config);
        if (subcommand == "evaluate" || subcommand == "fairness") {
            std::string path = predictions_path;
            if (path.empty() && config.scorer == ScorerKind::external_predictions)
                path = config.external_predictions_path;
            if (path.empty()) {
                std::cerr << "--predictions is required for " << subcommand << "\n";
                return exit_validation_failure;
            }
            return subcommand == "evaluate" ? cmd_evaluate(config, path)
                                            : cmd_fairness(config, path);
        }
        if (subcommand == "probe") return cmd_probe(config);
        if (subcommand == "explain") return cmd_explain(config);
        if (subcommand == "report") return cmd_report(config);
        std::cerr << "unknown subcommand: " << subcommand << "\n";
        return exit_validation_failure;
    } catch (const AuditError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation_failure;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return exit_fatal;
    }
}

}  // namespace essay_audit::cli
