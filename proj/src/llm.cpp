#include "essay_audit/llm.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <thread>

#include <json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace essay_audit::llm {

namespace {

const char* kInstruction =
    "You are an expert evaluator of student essays, and your task is to score an essay based on "
    "the rubric: Holistic Rating for Source-Based Writing. After reading the essay, assign a "
    "holistic score based. Act as an impartial evaluator. Return the score in a structure with "
    "the following format: score = {score value}.";

}  // namespace

std::string build_zero_shot_prompt(const std::string& essay, const std::string& rubric) {
    if (essay.empty()) throw AuditError("build_zero_shot_prompt: empty essay");
    if (rubric.empty()) throw AuditError("build_zero_shot_prompt: empty rubric");
    std::string prompt = kInstruction;
    prompt += "\nRUBRIC:\n";
    prompt += rubric;
    prompt += "\nESSAY:\n";
    prompt += essay;
    prompt += "\n";
    return prompt;
}

std::string build_fewshot_cot_prompt(const std::string& essay, const std::string& rubric,
                                     std::vector<FewShotExample> examples, const ScoreScale& scale) {
    if (essay.empty()) throw AuditError("build_fewshot_cot_prompt: empty essay");
    if (rubric.empty()) throw AuditError("build_fewshot_cot_prompt: empty rubric");
    if (examples.empty()) throw AuditError("build_fewshot_cot_prompt: empty example list");
    for (const auto& ex : examples)
        if (!scale.contains(ex.score))
            throw AuditError("build_fewshot_cot_prompt: example score " + std::to_string(ex.score) +
                             " outside scale");

    // score ascending, input order within a score
    std::stable_sort(examples.begin(), examples.end(),
                     [](const FewShotExample& a, const FewShotExample& b) { return a.score < b.score; });

    std::string prompt = kInstruction;
    prompt += "\nLearn how the grading is performed by analyzing these examples:\n";
    for (const auto& ex : examples) {
        prompt += "EXAMPLE ESSAY:\n";
        prompt += ex.essay_text;
        prompt += "\nBased on the rubric, the student earned a score of: ";
        prompt += std::to_string(ex.score);
        prompt += "\n";
    }
    prompt += "Let's think step by step.\n";
    prompt += "RUBRIC:\n";
    prompt += rubric;
    prompt += "\nESSAY:\n";
    prompt += essay;
    prompt += "\n";
    return prompt;
}

std::string build_prompt(const ScoringStrategy& strategy, const std::string& essay,
                         const ScoreScale& scale) {
    if (strategy.kind == StrategyKind::zero_shot)
        return build_zero_shot_prompt(essay, strategy.rubric);
    return build_fewshot_cot_prompt(essay, strategy.rubric, strategy.examples, scale);
}

ParsedScore parse_score(const std::string& response, const ScoreScale& scale) {
    if (response.empty()) throw AuditError("parse_score: empty response");
    static const std::regex pattern(R"(score\s*=\s*\{?\s*(-?\d+)\s*\}?)", std::regex::icase);
    std::smatch match;
    if (!std::regex_search(response, match, pattern))
        throw AuditError("parse_score: no 'score = ...' pattern in response: " + response);
    int score = std::stoi(match[1].str());
    if (!scale.contains(score))
        throw AuditError("parse_score: score " + std::to_string(score) + " outside scale [" +
                         std::to_string(scale.min_score) + "," + std::to_string(scale.max_score) + "]");
    return ParsedScore{score, response};
}

namespace {

class HttplibTransport : public Transport {
public:
    HttpResponse post(const std::string& url, const std::string& bearer_token,
                      const std::string& json_body, std::chrono::milliseconds timeout) override {
        // split scheme://host[:port] from path
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos)
            return {false, 0, "", "malformed endpoint URL: " + url};
        auto path_start = url.find('/', scheme_end + 3);
        std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(base);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout));
        httplib::Headers headers;
        if (!bearer_token.empty())
            headers.emplace("Authorization", "Bearer " + bearer_token);
        auto result = client.Post(path, headers, json_body, "application/json");
        if (!result)
            return {false, 0, "", httplib::to_string(result.error())};
        return {true, result->status, result->body, ""};
    }
};

std::string extract_content(const std::string& body) {
    nlohmann::json j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
}

}  // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

Client::Client(LLMConfig config, std::unique_ptr<Transport> transport,
               std::function<void(std::chrono::milliseconds)> sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    if (!sleeper_)
        sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ScoreOutcome Client::score_essay(const ScoringStrategy& strategy, const EssayRecord& essay,
                                 const ScoreScale& scale) {
    ScoreOutcome outcome;
    outcome.essay_id = essay.essay_id;

    std::string prompt;
    try {
        prompt = build_prompt(strategy, essay.full_text, scale);
    } catch (const std::exception& e) {
        outcome.error = e.what();
        return outcome;
    }

    nlohmann::json request = {
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", config_.temperature},
    };
    const char* key = config_.api_key_env.empty() ? nullptr : std::getenv(config_.api_key_env.c_str());
    std::string token = key ? key : "";

    std::string error_chain;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            outcome.retries_used = attempt;
            sleeper_(config_.backoff_base * (1 << (attempt - 1)));
        }
        ++requests_sent_;
        HttpResponse resp =
            transport_->post(config_.endpoint_url, token, request.dump(), config_.request_timeout);

        bool retryable = !resp.transport_ok || resp.status == 429 || resp.status >= 500;
        if (retryable) {
            if (!error_chain.empty()) error_chain += "; ";
            error_chain += resp.transport_ok ? "HTTP " + std::to_string(resp.status) : resp.error;
            continue;
        }
        if (resp.status != 200) {
            outcome.error = "HTTP " + std::to_string(resp.status) + ": " + resp.body;
            return outcome;
        }
        // parse errors are deterministic at low temperature: fail, don't retry
        try {
            std::string content = extract_content(resp.body);
            ParsedScore parsed = parse_score(content, scale);
            outcome.ok = true;
            outcome.prediction.essay_id = essay.essay_id;
            outcome.prediction.true_score = essay.holistic_score;
            outcome.prediction.predicted_score = parsed.score;
            outcome.prediction.rationale = parsed.raw_response;
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
        return outcome;
    }
    outcome.error = "retries exhausted: " + error_chain;
    return outcome;
}

std::vector<ScoreOutcome> Client::score_batch(const ScoringStrategy& strategy,
                                              const std::vector<EssayRecord>& essays,
                                              const ScoreScale& scale) {
    std::vector<ScoreOutcome> outcomes(essays.size());
    const int n_workers = std::max(1, std::min(config_.max_in_flight,
                                               static_cast<int>(essays.size())));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= essays.size()) break;
            outcomes[i] = score_essay(strategy, essays[i], scale);
        }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    return outcomes;
}

}  // namespace essay_audit::llm
