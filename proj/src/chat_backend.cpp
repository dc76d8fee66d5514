#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "groundrag/errors.hpp"
#include "groundrag/generation.hpp"
#include "groundrag/sse.hpp"
#include "http_util.hpp"

namespace groundrag::generation {

using json = nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

json to_wire(const ChatRequest& request) {
    json body = request.params.is_object() ? request.params : json::object();
    body["model"] = request.model;
    body["messages"] = json::array({
        {{"role", "system"}, {"content", request.system_text}},
        {{"role", "user"}, {"content", request.user_text}},
    });
    body["max_tokens"] = request.max_tokens;
    body["stream"] = request.stream;
    return body;
}

FinishReason parse_finish_reason(std::string_view s) {
    if (s == "stop") return FinishReason::stop;
    if (s == "length") return FinishReason::length;
    return FinishReason::other;
}

namespace {

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto sp = text.find(' ', pos);
        if (sp == std::string_view::npos) {
            out.emplace_back(text.substr(pos));
            break;
        }
        out.emplace_back(text.substr(pos, sp - pos + 1));
        pos = sp + 1;
    }
    return out;
}

bool cancelled(const AttemptControl& control) {
    return control.cancel && control.cancel->load();
}

// Sleeps up to `d`, waking early on cancellation. Returns false if cancelled.
bool sleep_for(std::chrono::milliseconds d, const AttemptControl& control) {
    const auto until = SteadyClock::now() + d;
    while (SteadyClock::now() < until) {
        if (cancelled(control)) return false;
        std::this_thread::sleep_for(std::min<SteadyClock::duration>(std::chrono::milliseconds(5),
                                                                    until - SteadyClock::now()));
    }
    return true;
}

}  // namespace

HttpChatBackend::HttpChatBackend(std::string endpoint_url, std::string api_key)
    : endpoint_url_(std::move(endpoint_url)), api_key_(std::move(api_key)) {}

AttemptOutcome HttpChatBackend::run(const ChatRequest& request, const AttemptControl& control,
                                    const DeltaSink& sink) {
    const auto url = detail::split_url(endpoint_url_);
    httplib::Client client(url.base);
    const auto idle_us = std::chrono::duration_cast<std::chrono::microseconds>(control.idle_timeout).count();
    client.set_connection_timeout(idle_us / 1000000, idle_us % 1000000);
    client.set_read_timeout(idle_us / 1000000, idle_us % 1000000);
    client.set_write_timeout(idle_us / 1000000, idle_us % 1000000);

    httplib::Request req;
    req.method = "POST";
    req.path = url.path;
    req.body = to_wire(request).dump();
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", request.stream ? "text/event-stream" : "application/json");
    if (!api_key_.empty()) req.set_header("Authorization", "Bearer " + api_key_);

    int status = 0;
    std::string error_body;
    std::string plain_body;
    std::string stream_error;
    sse::Parser parser;
    AttemptOutcome outcome;
    bool done = false;
    std::size_t received = 0;
    auto last_activity = SteadyClock::now();

    req.response_handler = [&](const httplib::Response& r) {
        status = r.status;
        return true;
    };
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        last_activity = SteadyClock::now();
        received += len;
        if (cancelled(control)) {
            outcome.stopped_by_sink = true;
            return false;
        }
        if (status < 200 || status >= 300) {
            if (error_body.size() < 4096) error_body.append(data, std::min<std::size_t>(len, 4096));
            return true;
        }
        if (!request.stream) {
            plain_body.append(data, len);
            return true;
        }
        return parser.feed(std::string_view(data, len), [&](const sse::Event& ev) {
            if (ev.data == "[DONE]") {
                done = true;
                return true;
            }
            const json j = json::parse(ev.data, nullptr, false);
            if (j.is_discarded() || !j.is_object()) return true;
            if (j.contains("error")) {
                stream_error = j["error"].dump();
                return false;
            }
            if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return true;
            const auto& choice = j["choices"][0];
            if (choice.contains("delta") && choice["delta"].contains("content") &&
                choice["delta"]["content"].is_string()) {
                const auto& text = choice["delta"]["content"].get_ref<const std::string&>();
                if (!text.empty() && !sink(text)) {
                    outcome.stopped_by_sink = true;
                    return false;
                }
            }
            if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
                outcome.finish = parse_finish_reason(choice["finish_reason"].get<std::string>());
            }
            return true;
        });
    };

    // A stalled read only notices cancellation when data arrives; the watcher
    // closes the socket instead.
    std::atomic<bool> finished{false};
    std::thread watcher;
    if (control.cancel) {
        watcher = std::thread([&] {
            while (!finished.load()) {
                if (control.cancel->load()) {
                    client.stop();
                    return;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
        });
    }
    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    const bool ok = client.send(req, res, err);
    finished = true;
    if (watcher.joinable()) watcher.join();

    if (cancelled(control)) {
        outcome.stopped_by_sink = true;
        return outcome;
    }

    if (outcome.stopped_by_sink) return outcome;
    if (!stream_error.empty()) throw StreamAbortedError("", false, "backend reported " + detail::excerpt(stream_error));
    if (!ok) {
        if (err == httplib::Error::Connection) {
            throw BackendError(0, "connection failed: " + httplib::to_string(err));
        }
        const auto idle = SteadyClock::now() - last_activity;
        if (received == 0 || idle >= control.idle_timeout * 9 / 10) {
            throw Error(ErrorKind::timeout, "no data from backend within the idle timeout");
        }
        throw StreamAbortedError("", false, "connection dropped: " + httplib::to_string(err));
    }
    if (status < 200 || status >= 300) throw BackendError(status, detail::excerpt(error_body));

    if (!request.stream) {
        const json j = json::parse(plain_body, nullptr, false);
        if (j.is_discarded()) throw BackendError(status, "malformed completion body");
        try {
            const auto& choice = j.at("choices").at(0);
            const auto text = choice.at("message").at("content").get<std::string>();
            if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
                outcome.finish = parse_finish_reason(choice["finish_reason"].get<std::string>());
            } else {
                outcome.finish = FinishReason::stop;
            }
            if (!text.empty() && !sink(text)) outcome.stopped_by_sink = true;
        } catch (const json::exception&) {
            throw BackendError(status, "completion body lacks choices[0].message.content");
        }
        return outcome;
    }
    if (!done && outcome.finish == FinishReason::none) {
        throw StreamAbortedError("", false, "stream ended before completion");
    }
    if (outcome.finish == FinishReason::none) outcome.finish = FinishReason::stop;
    return outcome;
}

MockScript MockScript::from_url(std::string_view url) {
    MockScript script;
    const auto q = url.find('?');
    if (q == std::string_view::npos) return script;
    httplib::Params params;
    httplib::detail::parse_query_text(std::string(url.substr(q + 1)), params);
    auto num = [&](const char* key, int fallback) {
        auto it = params.find(key);
        if (it == params.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw Error(ErrorKind::config, std::string("mock parameter '") + key + "' is not a number");
        }
    };
    script.tokens = num("tokens", 0);
    script.delay = std::chrono::milliseconds(num("delay_ms", 0));
    script.stall_attempts = num("stall_attempts", 0);
    script.status = num("status", 0);
    script.drop_after = num("drop_after", -1);
    if (auto it = params.find("text"); it != params.end()) {
        script.deltas = split_words(httplib::detail::decode_url(it->second, true));
    }
    return script;
}

MockChatBackend::MockChatBackend(MockScript script) : script_(std::move(script)) {}

AttemptOutcome MockChatBackend::run(const ChatRequest& request, const AttemptControl& control,
                                    const DeltaSink& sink) {
    const int attempt = ++attempts_;
    if (script_.status != 0) throw BackendError(script_.status, "scripted failure");
    if (attempt <= script_.stall_attempts) {
        if (!sleep_for(control.idle_timeout, control)) return {FinishReason::none, true};
        throw Error(ErrorKind::timeout, "no data from backend within the idle timeout");
    }

    std::vector<std::string> deltas = script_.deltas;
    if (deltas.empty() && script_.tokens > 0) {
        deltas.reserve(static_cast<std::size_t>(script_.tokens));
        for (int i = 0; i < script_.tokens; ++i) deltas.push_back("w" + std::to_string(i) + " ");
    }
    if (deltas.empty()) {
        const bool grounded = request.user_text.find("[S1]") != std::string::npos;
        deltas = split_words(grounded
                                 ? "According to [S1], the retrieved material covers this question."
                                 : "No supporting documents were found for this question.");
    }

    AttemptOutcome outcome;
    const std::size_t limit = std::min<std::size_t>(deltas.size(), static_cast<std::size_t>(request.max_tokens));
    for (std::size_t i = 0; i < limit; ++i) {
        if (script_.delay.count() > 0) {
            if (script_.delay >= control.idle_timeout) {
                if (!sleep_for(control.idle_timeout, control)) return {FinishReason::none, true};
                throw Error(ErrorKind::timeout, "no data from backend within the idle timeout");
            }
            if (!sleep_for(script_.delay, control)) return {FinishReason::none, true};
        }
        if (script_.drop_after >= 0 && static_cast<int>(i) == script_.drop_after) {
            throw StreamAbortedError("", false, "scripted connection drop");
        }
        if (cancelled(control) || !sink(deltas[i])) {
            outcome.stopped_by_sink = true;
            return outcome;
        }
    }
    outcome.finish = deltas.size() > limit ? FinishReason::length : FinishReason::stop;
    return outcome;
}

std::unique_ptr<ChatBackend> make_backend(const ModelProfile& profile) {
    std::string url = profile.endpoint_url;
    if (url.empty()) {
        if (const char* env = std::getenv("GROUNDRAG_CHAT_URL")) url = env;
    }
    const char* forced = std::getenv("GROUNDRAG_CHAT_BACKEND");
    if (url.starts_with("mock:") || (forced && std::string_view(forced) == "mock")) {
        return std::make_unique<MockChatBackend>(MockScript::from_url(url));
    }
    if (url.empty()) {
        throw Error(ErrorKind::config, "model '" + profile.model_id +
                                           "' has no endpoint_url and GROUNDRAG_CHAT_URL is unset");
    }
    std::string key;
    if (const char* k = std::getenv(profile.api_key_env.c_str())) key = k;
    return std::make_unique<HttpChatBackend>(std::move(url), std::move(key));
}

}  // namespace groundrag::generation
