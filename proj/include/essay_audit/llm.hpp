#ifndef ESSAY_AUDIT_LLM_HPP
#define ESSAY_AUDIT_LLM_HPP

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "essay_audit/core.hpp"

namespace essay_audit::llm {

struct LLMConfig {
    std::string endpoint_url;  // e.g. https://api.example.com/v1/chat/completions
    std::string model;
    double temperature = 0.2;
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    int max_in_flight = 4;
    std::chrono::milliseconds request_timeout{60000};
    std::string api_key_env = "LLM_API_KEY";
};

struct FewShotExample {
    std::string essay_text;
    int score = 0;
};

enum class StrategyKind { zero_shot, fewshot_cot };

struct ScoringStrategy {
    StrategyKind kind = StrategyKind::zero_shot;
    std::string rubric;
    std::vector<FewShotExample> examples;  // fewshot_cot only
};

struct ParsedScore {
    int score = 0;
    std::string raw_response;
};

std::string build_zero_shot_prompt(const std::string& essay, const std::string& rubric);
std::string build_fewshot_cot_prompt(const std::string& essay, const std::string& rubric,
                                     std::vector<FewShotExample> examples, const ScoreScale& scale);
std::string build_prompt(const ScoringStrategy& strategy, const std::string& essay,
                         const ScoreScale& scale);

// First match of `score` (case-insensitive) `=` optional `{` integer optional
// `}` wins; the integer must sit on the scale.
ParsedScore parse_score(const std::string& response, const ScoreScale& scale);

struct HttpResponse {
    bool transport_ok = false;
    int status = 0;
    std::string body;
    std::string error;
};

// Injectable wire layer; production uses cpp-httplib, tests use doubles.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url, const std::string& bearer_token,
                              const std::string& json_body,
                              std::chrono::milliseconds timeout) = 0;
};

std::unique_ptr<Transport> make_http_transport();

struct ScoreOutcome {
    std::string essay_id;
    bool ok = false;
    PredictionRecord prediction;  // valid when ok
    std::string error;            // error chain when not ok
    int retries_used = 0;
};

class Client {
public:
    Client(LLMConfig config, std::unique_ptr<Transport> transport,
           std::function<void(std::chrono::milliseconds)> sleeper = nullptr);

    ScoreOutcome score_essay(const ScoringStrategy& strategy, const EssayRecord& essay,
                             const ScoreScale& scale);

    // Bounded in-flight concurrency; output order matches input order.
    std::vector<ScoreOutcome> score_batch(const ScoringStrategy& strategy,
                                          const std::vector<EssayRecord>& essays,
                                          const ScoreScale& scale);

    long requests_sent() const { return requests_sent_; }

private:
    LLMConfig config_;
    std::unique_ptr<Transport> transport_;
    std::function<void(std::chrono::milliseconds)> sleeper_;
    std::atomic<long> requests_sent_{0};
};

}  // namespace essay_audit::llm

#endif
