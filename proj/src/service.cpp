#include "groundrag/service.hpp"

#include <pthread.h>
#include <signal.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <iostream>

#include <httplib.h>

#include "groundrag/chunk_io.hpp"
#include "groundrag/errors.hpp"
#include "groundrag/generation.hpp"
#include "groundrag/prompt.hpp"
#include "groundrag/sse.hpp"
#include "groundrag/timeutil.hpp"
#include "groundrag/utf8.hpp"
#include "groundrag/vector_index.hpp"

namespace groundrag::service {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxRequestBody = 1 << 20;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
    send_json(res, status, json{{"error", kind}, {"message", message}});
}

int status_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::empty_query:
        case ErrorKind::usage:
            return 400;
        case ErrorKind::not_found:
            return 404;
        case ErrorKind::validation:
        case ErrorKind::consistency:
        case ErrorKind::corrupt_index:
        case ErrorKind::dimension:
            return 422;
        case ErrorKind::timeout:
            return 504;
        case ErrorKind::backend:
        case ErrorKind::stream_aborted:
        case ErrorKind::retrieval_failed:
        case ErrorKind::build_failed:
            return 502;
        default:
            return 500;
    }
}

// Upstream bodies may echo prompts or credentials; clients only see the status.
std::string safe_message(const Error& e) {
    if (const auto* be = dynamic_cast<const BackendError*>(&e)) {
        return be->status() > 0 ? "model backend returned HTTP " + std::to_string(be->status())
                                : "model backend unreachable";
    }
    if (e.kind() == ErrorKind::timeout) return "model backend timed out";
    if (e.kind() == ErrorKind::stream_aborted) return "model backend stream broke off";
    return e.what();
}

bool is_blank(std::string_view s) {
    for (char32_t c : utf8::decode(s)) {
        if (!utf8::is_space(c)) return false;
    }
    return true;
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) {
            send_error(res, 400, "Usage", "request body must be a JSON object");
            return std::nullopt;
        }
        return body;
    } catch (const json::exception&) {
        send_error(res, 400, "Usage", "request body is not valid JSON");
        return std::nullopt;
    }
}

std::optional<std::string> string_field(const json& body, const char* name) {
    auto it = body.find(name);
    if (it == body.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorKind::usage, std::string(name) + " must be a string");
    return it->get<std::string>();
}

std::string metadata_or(const retrieval::RetrievalHit& hit, const std::string& key) {
    auto it = hit.metadata.find(key);
    return it == hit.metadata.end() ? std::string() : it->second;
}

long long elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - since)
        .count();
}

}  // namespace

// Shared between the HTTP handler thread and the generation worker.
struct QueryStream {
    std::mutex m;
    std::condition_variable cv;
    std::deque<std::string> frames;
    bool any_token = false;
    bool finished = false;
    int early_status = 0;
    json early_body;
    std::atomic<bool> cancel{false};
    bool sources_sent = false;

    Service* service = nullptr;
    std::string session_id;
    std::thread worker;
    std::atomic<bool> released{false};

    ~QueryStream() {
        cancel = true;
        if (worker.joinable()) worker.join();
        release();
    }

    // Frees the session for its next query. Called by the worker before its
    // final frame so a client reacting to `done` is never told it is busy.
    void release() {
        if (service && !released.exchange(true)) service->release_session(session_id);
    }

    void push(std::string frame, bool is_token) {
        {
            std::lock_guard lock(m);
            frames.push_back(std::move(frame));
            any_token = any_token || is_token;
        }
        cv.notify_all();
    }

    void finish() {
        {
            std::lock_guard lock(m);
            finished = true;
        }
        cv.notify_all();
    }

    void fail(const Error& e) {
        const int status = status_for(e);
        json body{{"error", to_string(e.kind())}, {"message", safe_message(e)}, {"status", status}};
        {
            std::lock_guard lock(m);
            if (!any_token) {
                early_status = status;
                early_body = body;
            } else {
                frames.push_back(sse::format_event("error", body.dump()));
            }
            finished = true;
        }
        cv.notify_all();
    }
};

struct QueryHandler {
    static void handle(Service& svc, const httplib::Request& req, httplib::Response& res);
};

Service::Service(ServiceConfig config, ServiceOptions options)
    : config_(std::move(config)), provider_factory_(std::move(options.provider_factory)) {
    config_.validate();
    if (options.request_log) {
        log_ = options.request_log;
    } else if (!config_.request_log.empty()) {
        log_file_ = std::make_unique<std::ofstream>(config_.request_log, std::ios::app);
        if (!*log_file_) throw Error(ErrorKind::io, "cannot open request log '" + config_.request_log.string() + "'");
        log_ = log_file_.get();
    } else {
        log_ = &std::cerr;
    }
    if (!provider_factory_) {
        provider_factory_ = [emb = config_.embedding] { return make_embedding_provider(emb); };
    }
    query_provider_ = provider_factory_();
    store_ = feedback::FeedbackStore::open(config_.store_path);

    auto kb = std::make_shared<retrieval::KnowledgeBase>();
    if (fs::exists(config_.index_path)) {
        kb->index = index::load_index(config_.index_path);
        kb->chunks = retrieval::ChunkStore(ingest::load_chunks_jsonl(config_.chunks_path));
        kb->check_consistency();
        if (kb->index.provider_id() != query_provider_->provider_id()) {
            throw Error(ErrorKind::config, "index was built with '" + kb->index.provider_id() +
                                               "' but the service embeds queries with '" +
                                               query_provider_->provider_id() + "'");
        }
    } else {
        log_event(json{{"event", "degraded"}, {"reason", "index file missing"},
                       {"index_path", config_.index_path.string()}});
    }
    kb_ = std::move(kb);

    server_ = std::make_unique<httplib::Server>();
    const auto threads = static_cast<std::size_t>(std::max(1, config_.worker_threads));
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server_->set_payload_max_length(kMaxRequestBody);
    install_routes();
}

Service::~Service() {
    stop();
}

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorKind::io, "cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port)) {
        throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void Service::listen() { server_->listen_after_bind(); }

int Service::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    listener_ = std::thread([this] { listen(); });
    server_->wait_until_ready();
    return bound;
}

void Service::stop() {
    if (server_) server_->stop();
    if (listener_.joinable()) listener_.join();
}

std::shared_ptr<const retrieval::KnowledgeBase> Service::knowledge_base() const {
    std::lock_guard lock(kb_mutex_);
    return kb_;
}

void Service::publish(std::shared_ptr<const retrieval::KnowledgeBase> kb) {
    std::lock_guard lock(kb_mutex_);
    kb_ = std::move(kb);
}

bool Service::acquire_session(const std::string& session_id) {
    std::lock_guard lock(sessions_mutex_);
    return active_sessions_.insert(session_id).second;
}

void Service::release_session(const std::string& session_id) {
    std::lock_guard lock(sessions_mutex_);
    active_sessions_.erase(session_id);
}

void Service::log_event(const json& record) {
    json line = record;
    if (!line.contains("ts")) line["ts"] = now_utc();
    std::lock_guard lock(log_mutex_);
    *log_ << line.dump() << '\n';
    log_->flush();
}

void QueryHandler::handle(Service& svc, const httplib::Request& req, httplib::Response& res) {
    const auto received = std::chrono::steady_clock::now();
    auto body = parse_body(req, res);
    if (!body) return;

    std::string question, session_id, model_id, language;
    try {
        question = string_field(*body, "question").value_or("");
        session_id = string_field(*body, "session_id").value_or("");
        model_id = string_field(*body, "model_id").value_or(svc.config_.default_model);
        language = string_field(*body, "language").value_or(svc.config_.default_language);
    } catch (const Error& e) {
        send_error(res, 400, to_string(e.kind()), e.what());
        return;
    }
    if (is_blank(question)) {
        send_error(res, 400, "EmptyQuery", "question is blank");
        return;
    }
    if (session_id.empty()) {
        send_error(res, 400, "Usage", "session_id is required");
        return;
    }
    const auto* profile = svc.config_.find_model(model_id);
    if (!profile) {
        send_error(res, 404, "NotFound", "unknown model '" + model_id + "'");
        return;
    }
    const auto& langs = svc.config_.ui_languages;
    if (std::find(langs.begin(), langs.end(), language) == langs.end()) {
        send_error(res, 400, "Usage", "unsupported language '" + language + "'");
        return;
    }
    if (!svc.acquire_session(session_id)) {
        send_error(res, 409, "Conflict", "session already has an active generation");
        return;
    }

    auto stream = std::make_shared<QueryStream>();
    stream->service = &svc;
    stream->session_id = session_id;

    // Pinned for the whole request; a concurrent reindex cannot change it.
    const auto kb = svc.knowledge_base();
    retrieval::ContextBundle bundle;
    generation::RenderedPrompt prompt;
    try {
        auto hits = retrieval::retrieve(question, *kb, *svc.query_provider_, svc.config_.retrieval);
        bundle = retrieval::assemble_context(hits, svc.config_.char_budget);
        prompt = generation::render_prompt(bundle, question,
                                           generation::builtin_template(ingest::parse_language(language)));
    } catch (const Error& e) {
        send_error(res, status_for(e), to_string(e.kind()), safe_message(e));
        return;
    }

    json sources = json::array();
    std::vector<feedback::RetrievedRef> refs;
    for (std::size_t i = 0; i < bundle.hits.size(); ++i) {
        const auto& h = bundle.hits[i];
        sources.push_back(json{{"chunk_id", h.chunk_id},
                               {"doc_id", h.doc_id},
                               {"title", metadata_or(h, "title")},
                               {"source_path", metadata_or(h, "source_path")},
                               {"score", h.score},
                               {"citation", "S" + std::to_string(i + 1)}});
        refs.push_back({h.chunk_id, h.score});
    }

    std::shared_ptr<generation::ChatBackend> backend;
    try {
        backend = generation::make_backend(*profile);
    } catch (const Error& e) {
        send_error(res, status_for(e), to_string(e.kind()), safe_message(e));
        return;
    }

    feedback::InteractionRecord record;
    record.session_id = session_id;
    record.query_text = question;
    record.retrieved = std::move(refs);
    record.model_id = profile->model_id;
    record.retrieval_mode = svc.config_.retrieval.mode;
    record.language = language;

    QueryStream* s = stream.get();
    stream->worker = std::thread([s, &svc, backend, profile = *profile, prompt, record, received]() mutable {
        try {
            auto result = generation::generate(
                prompt.system_text, prompt.user_text, profile,
                [s](std::string_view inc) {
                    s->push(sse::format_event("token", json{{"text", inc}}.dump()), true);
                    return !s->cancel.load();
                },
                *backend, &s->cancel);
            record.answer_text = result.answer_text;
            record.latency_ms = elapsed_ms(received);
            json done{{"latency_ms", record.latency_ms},
                      {"truncated", result.truncated},
                      {"token_events", result.token_events},
                      {"model_id", result.model_id}};
            try {
                done["interaction_id"] = svc.store_->record_interaction(record);
            } catch (const Error& e) {
                done["interaction_id"] = nullptr;
                done["warning"] = "the answer could not be saved; rating is unavailable";
                svc.log_event(json{{"event", "store_failed"}, {"session_id", record.session_id},
                                   {"error", e.what()}});
            }
            s->release();
            s->push(sse::format_event("done", done.dump()), false);
            s->finish();
        } catch (const StreamAbortedError& e) {
            if (e.cancelled_by_caller()) {
                svc.log_event(json{{"event", "stream_aborted"}, {"session_id", record.session_id},
                                   {"partial_chars", e.partial_text().size()}});
                s->release();
                s->finish();
            } else {
                s->release();
                s->fail(e);
            }
        } catch (const Error& e) {
            s->release();
            s->fail(e);
        } catch (const std::exception& e) {
            s->release();
            s->fail(Error(ErrorKind::backend, e.what()));
        }
    });

    {
        std::unique_lock lock(stream->m);
        stream->cv.wait(lock, [&] { return stream->any_token || stream->finished; });
        if (stream->early_status != 0) {
            const int status = stream->early_status;
            const json err = stream->early_body;
            lock.unlock();
            send_json(res, status, err);
            return;  // ~QueryStream joins the worker and frees the session
        }
    }

    const std::string sources_frame = sse::format_event("sources", sources.dump());
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    res.set_chunked_content_provider(
        "text/event-stream", [stream, sources_frame](std::size_t, httplib::DataSink& sink) {
            if (!stream->sources_sent) {
                stream->sources_sent = true;
                if (!sink.write(sources_frame.data(), sources_frame.size())) {
                    stream->cancel = true;
                    return false;
                }
            }
            std::unique_lock lock(stream->m);
            stream->cv.wait(lock, [&] { return !stream->frames.empty() || stream->finished; });
            while (!stream->frames.empty()) {
                std::string frame = std::move(stream->frames.front());
                stream->frames.pop_front();
                lock.unlock();
                if (!sink.write(frame.data(), frame.size())) {
                    stream->cancel = true;
                    return false;
                }
                lock.lock();
            }
            if (stream->finished) {
                lock.unlock();
                sink.done();
            }
            return true;
        });
}

void Service::install_routes() {
    auto& svr = *server_;

    svr.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
        log_event(json{{"method", req.method},
                       {"path", req.path},
                       {"status", res.status},
                       {"remote_addr", req.remote_addr}});
    });

    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, status_for(e), to_string(e.kind()), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "Internal", e.what());
        }
    });

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            send_json(res, res.status, json{{"error", httplib::status_message(res.status)}});
        }
    });

    svr.Post("/api/query", [this](const httplib::Request& req, httplib::Response& res) {
        QueryHandler::handle(*this, req, res);
    });

    svr.Post("/api/feedback", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req, res);
        if (!body) return;
        const auto id = body->find("interaction_id");
        if (id == body->end() || !id->is_string()) {
            send_error(res, 400, "Usage", "interaction_id is required");
            return;
        }
        const auto rating = body->find("rating");
        if (rating == body->end() || !rating->is_number_integer()) {
            send_error(res, 422, "Validation", "rating must be an integer from 1 to 5");
            return;
        }
        std::optional<std::string> comment;
        std::map<std::string, std::string> labels;
        try {
            comment = string_field(*body, "comment");
            if (body->contains("labels")) labels = (*body)["labels"].get<std::map<std::string, std::string>>();
        } catch (const std::exception& e) {
            send_error(res, 400, "Usage", e.what());
            return;
        }
        try {
            store_->record_feedback(id->get<std::string>(), rating->get<int>(), std::move(comment),
                                    std::move(labels));
        } catch (const Error& e) {
            send_error(res, status_for(e), to_string(e.kind()), e.what());
            return;
        }
        res.status = 204;
    });

    svr.Get("/api/history/:session_id", [this](const httplib::Request& req, httplib::Response& res) {
        const auto& session_id = req.path_params.at("session_id");
        const auto items = store_->session_history(session_id);
        if (items.empty()) {
            send_error(res, 404, "NotFound", "no interactions for session '" + session_id + "'");
            return;
        }
        json out{{"session_id", session_id}, {"items", json::array()}};
        for (const auto& item : items) out["items"].push_back(feedback::to_json(item));
        send_json(res, 200, out);
    });

    svr.Get("/api/export/:session_id", [this](const httplib::Request& req, httplib::Response& res) {
        const auto& session_id = req.path_params.at("session_id");
        const std::string name = req.has_param("format") ? req.get_param_value("format") : "html";
        feedback::ExportFormat format;
        try {
            format = feedback::parse_export_format(name);
        } catch (const Error& e) {
            send_error(res, 400, "Usage", e.what());
            return;
        }
        std::string doc;
        try {
            doc = store_->export_history(session_id, format);
        } catch (const Error& e) {
            send_error(res, status_for(e), to_string(e.kind()), e.what());
            return;
        }
        const bool html = format == feedback::ExportFormat::html;
        res.set_header("Content-Disposition",
                       "attachment; filename=\"conversation." + std::string(html ? "html" : "md") + "\"");
        res.set_content(doc, html ? "text/html; charset=utf-8" : "text/markdown; charset=utf-8");
    });

    svr.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
        json models = json::array();
        for (const auto& m : config_.models) {
            models.push_back(json{{"model_id", m.model_id},
                                  {"max_answer_tokens", m.max_answer_tokens},
                                  {"stream", m.stream}});
        }
        send_json(res, 200, json{{"default_model", config_.default_model}, {"models", models}});
    });

    svr.Get("/api/healthz", [this](const httplib::Request&, httplib::Response& res) {
        const auto kb = knowledge_base();
        const bool index_file = fs::exists(config_.index_path);
        const bool store_ok = store_->healthy();
        const bool ok = index_file && !kb->index.empty() && store_ok;
        json out{{"status", ok ? "ok" : "degraded"},
                 {"index_entries", kb->index.size()},
                 {"store_ok", store_ok},
                 {"index_file", index_file}};
        if (!kb->index.provider_id().empty()) {
            out["provider_id"] = kb->index.provider_id();
            out["built_at"] = format_utc(kb->index.built_at());
        }
        send_json(res, ok ? 200 : 503, out);
    });

    svr.Post("/api/admin/reindex", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req, res);
        if (!body) return;
        std::optional<std::string> path;
        try {
            path = string_field(*body, "chunks_path");
        } catch (const Error& e) {
            send_error(res, 400, "Usage", e.what());
            return;
        }
        if (!path || path->empty()) {
            send_error(res, 400, "Usage", "chunks_path is required");
            return;
        }
        if (reindexing_.exchange(true)) {
            send_error(res, 409, "Conflict", "a rebuild is already running");
            return;
        }
        struct Clear {
            std::atomic<bool>& flag;
            ~Clear() { flag = false; }
        } clear{reindexing_};

        try {
            auto chunks = ingest::load_chunks_jsonl(*path);
            auto provider = provider_factory_();
            if (provider->provider_id() != query_provider_->provider_id()) {
                throw Error(ErrorKind::config, "embedding provider changed since startup");
            }
            index::BuildReport report;
            auto idx = index::build_index(chunks, *provider, config_.embedding.batch_size,
                                          config_.embedding.retries, &report);
            auto kb = std::make_shared<retrieval::KnowledgeBase>();
            kb->index = std::move(idx);
            kb->chunks = retrieval::ChunkStore(std::move(chunks));
            kb->check_consistency();

            // Persist before publishing so a restart serves what clients saw.
            if (fs::path(*path) != config_.chunks_path) {
                ingest::save_chunks_jsonl(config_.chunks_path, kb->chunks.chunks());
            }
            index::save_index(kb->index, config_.index_path);

            json out{{"entries", kb->index.size()},
                     {"built_at", format_utc(kb->index.built_at())},
                     {"dropped_zero_vectors", report.dropped_zero_vectors}};
            publish(std::move(kb));
            log_event(json{{"event", "reindexed"}, {"entries", out["entries"]}, {"chunks_path", *path}});
            send_json(res, 200, out);
        } catch (const Error& e) {
            const int status = e.kind() == ErrorKind::io ? 422 : status_for(e);
            send_error(res, status, to_string(e.kind()), e.what());
        }
    });

    if (!config_.static_dir.empty()) {
        if (!svr.set_mount_point("/", config_.static_dir.string())) {
            throw Error(ErrorKind::config, "static_dir '" + config_.static_dir.string() + "' is not a directory");
        }
    }
}

int serve(const fs::path& config_path) {
    // Signals are taken synchronously by this thread; every server thread inherits the mask.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const auto config = load_service_config(config_path);
    Service svc(config);
    const int port = svc.start(config.bind_address, config.port);
    svc.log_event(json{{"event", "listening"}, {"address", config.bind_address}, {"port", port}});

    int sig = 0;
    sigwait(&signals, &sig);
    svc.log_event(json{{"event", "shutdown"}, {"signal", sig}});
    svc.stop();
    return 0;
}

}  // namespace groundrag::service
