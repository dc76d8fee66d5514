#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundrag/embedding.hpp"
#include "groundrag/generation.hpp"
#include "groundrag/retrieval.hpp"

namespace groundrag::service {

struct EmbeddingConfig {
    std::string provider = "local";  // "local" | "remote"
    std::size_t dim = 256;           // local provider only
    index::RemoteEmbedderConfig remote;
    std::size_t batch_size = 64;
    int retries = 2;
};

std::unique_ptr<index::EmbeddingProvider> make_embedding_provider(const EmbeddingConfig& cfg);

struct ServiceConfig {
    std::filesystem::path index_path;
    std::filesystem::path chunks_path;
    std::filesystem::path store_path;
    // Empty: request log goes to stderr.
    std::filesystem::path request_log;
    // Optional directory served at "/" (e.g. a built web client).
    std::filesystem::path static_dir;

    std::vector<generation::ModelProfile> models;
    std::string default_model;

    retrieval::RetrievalParams retrieval;
    std::size_t char_budget = retrieval::kDefaultCharBudget;

    std::vector<std::string> ui_languages{"fi", "sv", "en"};
    std::string default_language = "fi";

    std::string bind_address = "127.0.0.1";
    int port = 8080;
    int worker_threads = 32;

    EmbeddingConfig embedding;

    // Default model must exist in the registry; k >= 1; budget > 0.
    void validate() const;
    const generation::ModelProfile* find_model(const std::string& model_id) const;
};

// Relative paths in the document are resolved against `base_dir`.
ServiceConfig service_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ServiceConfig load_service_config(const std::filesystem::path& path);

}  // namespace groundrag::service
