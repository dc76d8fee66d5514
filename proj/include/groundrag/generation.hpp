#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundrag/timeutil.hpp"

namespace groundrag::generation {

inline constexpr int kLegacyAnswerTokens = 700;
inline constexpr int kDefaultAnswerTokens = 2000;

struct ModelProfile {
    std::string model_id;
    // http(s)://... chat-completions endpoint, or mock://?... for the scripted
    // in-process backend. Empty means: read GROUNDRAG_CHAT_URL.
    std::string endpoint_url;
    int max_answer_tokens = kDefaultAnswerTokens;
    std::chrono::milliseconds request_timeout{120000};
    bool stream = true;
    int retries = 2;
    std::string api_key_env = "GROUNDRAG_CHAT_API_KEY";
    // Extra decoding parameters merged verbatim into the request body.
    nlohmann::json params = nlohmann::json::object();

    // Throws Error(config) when max_answer_tokens < 1, timeout <= 0 or retries < 0.
    void validate() const;
};

struct ChatRequest {
    std::string model;
    std::string system_text;
    std::string user_text;
    int max_tokens = kDefaultAnswerTokens;
    bool stream = true;
    nlohmann::json params = nlohmann::json::object();
};

// {"model", "messages": [{"role": "system", ...}, {"role": "user", ...}], "max_tokens", "stream"}
nlohmann::json to_wire(const ChatRequest& request);

enum class FinishReason { stop, length, other, none };

FinishReason parse_finish_reason(std::string_view s);

struct AttemptControl {
    // Longest wait for the first byte and between any two reads.
    std::chrono::milliseconds idle_timeout{120000};
    const std::atomic<bool>* cancel = nullptr;
};

// Returns false to stop reading the stream.
using DeltaSink = std::function<bool(std::string_view delta)>;

struct AttemptOutcome {
    FinishReason finish = FinishReason::none;
    bool stopped_by_sink = false;
};

// One request/response exchange with a chat model. Implementations throw
// Error(timeout) when idle_timeout elapses, BackendError on non-2xx replies
// and StreamAbortedError when the stream breaks off.
class ChatBackend {
 public:
    virtual ~ChatBackend() = default;
    virtual AttemptOutcome run(const ChatRequest& request, const AttemptControl& control,
                               const DeltaSink& sink) = 0;
};

class HttpChatBackend final : public ChatBackend {
 public:
    HttpChatBackend(std::string endpoint_url, std::string api_key);

    AttemptOutcome run(const ChatRequest& request, const AttemptControl& control,
                       const DeltaSink& sink) override;

 private:
    std::string endpoint_url_;
    std::string api_key_;
};

// Scripted in-process backend speaking the same contract. Recognised
// mock:// query parameters:
//   tokens=N          emit N deltas "w0 ", "w1 ", ... (default: a short canned answer)
//   text=...          emit the words of this text instead (URL-encoded, '+' = space)
//   delay_ms=D        sleep D ms before each delta
//   stall_attempts=M  the first M attempts never answer (they time out)
//   status=S          fail every attempt with BackendError(S)
//   drop_after=K      break the stream after K deltas
struct MockScript {
    std::vector<std::string> deltas;
    int tokens = 0;
    std::chrono::milliseconds delay{0};
    int stall_attempts = 0;
    int status = 0;
    int drop_after = -1;

    static MockScript from_url(std::string_view url);
};

class MockChatBackend final : public ChatBackend {
 public:
    explicit MockChatBackend(MockScript script);

    AttemptOutcome run(const ChatRequest& request, const AttemptControl& control,
                       const DeltaSink& sink) override;

    int attempts() const noexcept { return attempts_.load(); }

 private:
    MockScript script_;
    std::atomic<int> attempts_{0};
};

// mock:// endpoints, or any endpoint when GROUNDRAG_CHAT_BACKEND=mock, get a
// MockChatBackend; everything else an HttpChatBackend.
std::unique_ptr<ChatBackend> make_backend(const ModelProfile& profile);

struct GenerationResult {
    std::string answer_text;
    std::string model_id;
    TimePoint started_at{};
    TimePoint first_token_at{};
    TimePoint finished_at{};
    long long latency_ms = 0;
    int token_events = 0;
    bool truncated = false;
    int attempts = 0;
};

// Returns false to cancel the generation.
using TokenCallback = std::function<bool(std::string_view increment)>;

// Streams one answer. Attempts that time out before producing any text are
// retried up to profile.retries times with a fresh timer. At most
// profile.max_answer_tokens increments are delivered; a longer stream is cut
// and reported as truncated.
GenerationResult generate(const std::string& system_text, const std::string& user_text,
                          const ModelProfile& profile, const TokenCallback& on_token,
                          ChatBackend& backend, const std::atomic<bool>* cancel = nullptr);

GenerationResult generate(const std::string& system_text, const std::string& user_text,
                          const ModelProfile& profile, const TokenCallback& on_token);

}  // namespace groundrag::generation
