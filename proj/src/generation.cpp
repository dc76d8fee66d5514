#include "groundrag/generation.hpp"

#include "groundrag/errors.hpp"

namespace groundrag::generation {

void ModelProfile::validate() const {
    if (model_id.empty()) throw Error(ErrorKind::config, "model profile without model_id");
    if (max_answer_tokens < 1) throw Error(ErrorKind::config, "max_answer_tokens must be at least 1");
    if (request_timeout.count() <= 0) throw Error(ErrorKind::config, "request_timeout must be positive");
    if (retries < 0) throw Error(ErrorKind::config, "retries must be non-negative");
}

GenerationResult generate(const std::string& system_text, const std::string& user_text,
                          const ModelProfile& profile, const TokenCallback& on_token,
                          ChatBackend& backend, const std::atomic<bool>* cancel) {
    profile.validate();

    GenerationResult result;
    result.model_id = profile.model_id;
    result.started_at = Clock::now();
    bool caller_cancelled = false;
    bool capped = false;

    const ChatRequest request{profile.model_id, system_text, user_text, profile.max_answer_tokens,
                              profile.stream, profile.params};
    const AttemptControl control{profile.request_timeout, cancel};

    auto sink = [&](std::string_view delta) {
        if (cancel && cancel->load()) {
            caller_cancelled = true;
            return false;
        }
        if (result.token_events >= profile.max_answer_tokens) {
            capped = true;
            return false;
        }
        if (result.token_events == 0) result.first_token_at = Clock::now();
        ++result.token_events;
        result.answer_text.append(delta);
        if (!on_token(delta)) {
            caller_cancelled = true;
            return false;
        }
        return true;
    };

    AttemptOutcome outcome;
    for (int attempt = 1;; ++attempt) {
        result.attempts = attempt;
        try {
            outcome = backend.run(request, control, sink);
            break;
        } catch (const StreamAbortedError& e) {
            throw StreamAbortedError(result.answer_text, false, e.what());
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::timeout) throw;
            if (cancel && cancel->load()) throw StreamAbortedError(result.answer_text, true, "cancelled by caller");
            // Once text has reached the caller a retry would duplicate it.
            if (result.token_events > 0 || attempt > profile.retries) {
                throw TimeoutError(attempt, result.answer_text);
            }
        }
    }

    if (caller_cancelled || (outcome.stopped_by_sink && !capped && cancel && cancel->load())) {
        throw StreamAbortedError(result.answer_text, true, "cancelled by caller");
    }

    result.finished_at = Clock::now();
    if (result.token_events == 0) result.first_token_at = result.finished_at;
    result.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(result.finished_at - result.started_at).count();
    result.truncated = capped || outcome.finish == FinishReason::length;
    return result;
}

GenerationResult generate(const std::string& system_text, const std::string& user_text,
                          const ModelProfile& profile, const TokenCallback& on_token) {
    auto backend = make_backend(profile);
    return generate(system_text, user_text, profile, on_token, *backend);
}

}  // namespace groundrag::generation
