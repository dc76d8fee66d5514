#include "groundrag/embedding.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "groundrag/errors.hpp"
#include "groundrag/utf8.hpp"
#include "http_util.hpp"

namespace groundrag::index {

using json = nlohmann::json;

double l2_norm(std::span<const float> v) {
    double sum = 0.0;
    for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sum);
}

EmbeddingVector normalize(std::span<const float> v) {
    if (v.empty()) throw Error(ErrorKind::validation, "cannot normalize an empty vector");
    for (float x : v) {
        if (!std::isfinite(x)) throw Error(ErrorKind::validation, "vector has non-finite component");
    }
    const double norm = l2_norm(v);
    if (norm < 1e-12) throw Error(ErrorKind::zero_vector, "vector norm below 1e-12");
    EmbeddingVector out;
    out.values.reserve(v.size());
    for (float x : v) out.values.push_back(static_cast<float>(static_cast<double>(x) / norm));
    return out;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::u32string current;
    for (char32_t c : utf8::decode(text)) {
        if (utf8::is_word_char(c)) {
            current.push_back(utf8::to_lower(c));
        } else if (!current.empty()) {
            tokens.push_back(utf8::encode(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(utf8::encode(current));
    return tokens;
}

namespace {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

LocalHashEmbedder::LocalHashEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw Error(ErrorKind::config, "embedding dimension must be positive");
}

std::string LocalHashEmbedder::provider_id() const { return "local-hash-" + std::to_string(dim_); }

EmbeddingVector LocalHashEmbedder::embed(const std::string& text) const {
    EmbeddingVector v;
    v.values.assign(dim_, 0.0f);
    for (const auto& tok : tokenize(text)) v.values[fnv1a64(tok) % dim_] += 1.0f;
    return v;
}

std::vector<EmbeddingVector> LocalHashEmbedder::embed_batch(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
    if (config_.url.empty()) throw Error(ErrorKind::config, "remote embedder needs an endpoint URL");
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string RemoteEmbedder::provider_id() const { return "remote:" + config_.model; }

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) {
    if (texts.empty()) return {};
    const auto url = detail::split_url(config_.url);
    httplib::Client client(url.base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const json body{{"model", config_.model},
                    {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) {
        throw Error(ErrorKind::backend, "embedding request failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) throw BackendError(res->status, detail::excerpt(res->body));

    std::vector<EmbeddingVector> out;
    try {
        const json reply = json::parse(res->body);
        const auto& data = reply.at("data");
        if (data.size() != texts.size()) {
            throw Error(ErrorKind::backend, "embedding response has " + std::to_string(data.size()) +
                                                " items for " + std::to_string(texts.size()) + " inputs");
        }
        for (const auto& item : data) {
            EmbeddingVector v;
            v.values = item.at("embedding").get<std::vector<float>>();
            std::size_t expected = 0;
            dim_.compare_exchange_strong(expected, v.dim());
            if (v.dim() != dim_.load()) {
                throw Error(ErrorKind::dimension, "embedding dimension changed from " +
                                                      std::to_string(dim_.load()) + " to " +
                                                      std::to_string(v.dim()));
            }
            out.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::backend, std::string("malformed embedding response: ") + e.what());
    }
    return out;
}

}  // namespace groundrag::index
