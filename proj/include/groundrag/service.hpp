#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "groundrag/embedding.hpp"
#include "groundrag/feedback_store.hpp"
#include "groundrag/retrieval.hpp"
#include "groundrag/service_config.hpp"

namespace httplib {
class Server;
}

namespace groundrag::service {

using ProviderFactory = std::function<std::unique_ptr<index::EmbeddingProvider>()>;

struct ServiceOptions {
    // Overrides the provider described by config.embedding.
    ProviderFactory provider_factory;
    // Overrides config.request_log.
    std::ostream* request_log = nullptr;
};

// The query/feedback/history/admin HTTP API.
//
// The served knowledge base is an immutable snapshot behind a shared_ptr;
// each request pins the snapshot it started with and reindexing publishes a
// fresh one only after it is completely built and saved.
class Service {
 public:
    // Opens the feedback store and loads index + chunks if the index file
    // exists. A missing index leaves the service running in degraded mode.
    explicit Service(ServiceConfig config, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Port 0 binds an ephemeral port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    // bind() + listen() on a background thread; returns the bound port.
    int start(const std::string& host, int port);
    void stop();

    std::shared_ptr<const retrieval::KnowledgeBase> knowledge_base() const;
    const ServiceConfig& config() const noexcept { return config_; }
    feedback::FeedbackStore& store() noexcept { return *store_; }

    // One JSON line on the request log.
    void log_event(const nlohmann::json& record);

 private:
    void install_routes();
    void publish(std::shared_ptr<const retrieval::KnowledgeBase> kb);
    bool acquire_session(const std::string& session_id);
    void release_session(const std::string& session_id);

    ServiceConfig config_;
    ProviderFactory provider_factory_;
    std::unique_ptr<index::EmbeddingProvider> query_provider_;
    std::unique_ptr<feedback::FeedbackStore> store_;

    mutable std::mutex kb_mutex_;
    std::shared_ptr<const retrieval::KnowledgeBase> kb_;
    std::atomic<bool> reindexing_{false};

    std::mutex sessions_mutex_;
    std::set<std::string> active_sessions_;

    std::unique_ptr<std::ofstream> log_file_;
    std::ostream* log_ = nullptr;
    std::mutex log_mutex_;

    std::unique_ptr<httplib::Server> server_;
    std::thread listener_;

    friend struct QueryHandler;
    friend struct QueryStream;
};

// Serves until SIGINT/SIGTERM. Returns a process exit code.
int serve(const std::filesystem::path& config_path);

}  // namespace groundrag::service
