#include "groundrag/service_config.hpp"

#include <fstream>

#include "groundrag/errors.hpp"

namespace groundrag::service {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::unique_ptr<index::EmbeddingProvider> make_embedding_provider(const EmbeddingConfig& cfg) {
    if (cfg.provider == "local") return std::make_unique<index::LocalHashEmbedder>(cfg.dim);
    if (cfg.provider == "remote") {
        index::RemoteEmbedderConfig remote = cfg.remote;
        if (remote.url.empty()) {
            if (const char* env = std::getenv("GROUNDRAG_EMBEDDING_URL")) remote.url = env;
        }
        return std::make_unique<index::RemoteEmbedder>(std::move(remote));
    }
    throw Error(ErrorKind::config, "unknown embedding provider '" + cfg.provider + "'");
}

void ServiceConfig::validate() const {
    if (models.empty()) throw Error(ErrorKind::config, "model registry is empty");
    for (const auto& m : models) m.validate();
    if (!find_model(default_model)) {
        throw Error(ErrorKind::config, "default model '" + default_model + "' is not in the registry");
    }
    if (retrieval.k < 1) throw Error(ErrorKind::config, "retrieval.k must be at least 1");
    if (retrieval.threshold < -1.0 || retrieval.threshold > 1.0) {
        throw Error(ErrorKind::config, "retrieval.threshold must lie in [-1, 1]");
    }
    if (char_budget == 0) throw Error(ErrorKind::config, "char_budget must be positive");
    if (index_path.empty() || chunks_path.empty() || store_path.empty()) {
        throw Error(ErrorKind::config, "index_path, chunks_path and store_path are required");
    }
    if (embedding.batch_size == 0) throw Error(ErrorKind::config, "embedding.batch_size must be positive");
}

const generation::ModelProfile* ServiceConfig::find_model(const std::string& model_id) const {
    for (const auto& m : models) {
        if (m.model_id == model_id) return &m;
    }
    return nullptr;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

generation::ModelProfile model_from_json(const json& j) {
    generation::ModelProfile m;
    m.model_id = j.at("model_id").get<std::string>();
    m.endpoint_url = j.value("endpoint_url", "");
    if (j.contains("answer_preset")) {
        const auto preset = j["answer_preset"].get<std::string>();
        if (preset == "legacy") {
            m.max_answer_tokens = generation::kLegacyAnswerTokens;
        } else if (preset == "default") {
            m.max_answer_tokens = generation::kDefaultAnswerTokens;
        } else {
            throw Error(ErrorKind::config, "unknown answer_preset '" + preset + "'");
        }
    }
    m.max_answer_tokens = j.value("max_answer_tokens", m.max_answer_tokens);
    if (j.contains("request_timeout_s")) {
        m.request_timeout = std::chrono::milliseconds(
            static_cast<long long>(j["request_timeout_s"].get<double>() * 1000.0));
    }
    m.stream = j.value("stream", true);
    m.retries = j.value("retries", 2);
    m.api_key_env = j.value("api_key_env", m.api_key_env);
    if (j.contains("params")) m.params = j["params"];
    return m;
}

}  // namespace

ServiceConfig service_config_from_json(const json& j, const fs::path& base_dir) {
    ServiceConfig c;
    try {
        c.index_path = resolve(base_dir, j.at("index_path").get<std::string>());
        c.chunks_path = resolve(base_dir, j.at("chunks_path").get<std::string>());
        c.store_path = resolve(base_dir, j.at("store_path").get<std::string>());
        c.request_log = resolve(base_dir, j.value("request_log", ""));
        c.static_dir = resolve(base_dir, j.value("static_dir", ""));
        for (const auto& m : j.at("models")) c.models.push_back(model_from_json(m));
        c.default_model = j.value("default_model", c.models.empty() ? "" : c.models.front().model_id);
        if (j.contains("retrieval")) {
            const auto& r = j["retrieval"];
            const auto k = r.value("k", 5);
            if (k < 1) throw Error(ErrorKind::config, "retrieval.k must be at least 1");
            c.retrieval.k = static_cast<std::size_t>(k);
            c.retrieval.threshold = r.value("threshold", 0.0);
            c.retrieval.mode = retrieval::parse_retrieval_mode(r.value("mode", "full_chunk"));
            c.char_budget = r.value("char_budget", retrieval::kDefaultCharBudget);
        }
        if (j.contains("ui_languages")) c.ui_languages = j["ui_languages"].get<std::vector<std::string>>();
        c.default_language = j.value("default_language", c.default_language);
        c.bind_address = j.value("bind_address", c.bind_address);
        c.port = j.value("port", c.port);
        c.worker_threads = j.value("worker_threads", c.worker_threads);
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            c.embedding.provider = e.value("provider", "local");
            c.embedding.dim = e.value("dim", c.embedding.dim);
            c.embedding.batch_size = e.value("batch_size", c.embedding.batch_size);
            c.embedding.retries = e.value("retries", c.embedding.retries);
            c.embedding.remote.url = e.value("url", "");
            c.embedding.remote.model = e.value("model", c.embedding.remote.model);
            c.embedding.remote.api_key_env = e.value("api_key_env", c.embedding.remote.api_key_env);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("invalid service config: ") + e.what());
    }
    c.validate();
    return c;
}

ServiceConfig load_service_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, "config '" + path.string() + "': " + e.what());
    }
    return service_config_from_json(j, path.parent_path());
}

}  // namespace groundrag::service
