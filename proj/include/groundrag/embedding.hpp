#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace groundrag::index {

// A raw embedding as produced by a provider. Vectors stored in a
// VectorIndex are additionally unit-norm.
struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dim() const noexcept { return values.size(); }
};

// v / ||v||_2. Throws Error(zero_vector) when ||v||_2 < 1e-12 and
// Error(validation) for empty or non-finite input.
EmbeddingVector normalize(std::span<const float> v);

double l2_norm(std::span<const float> v);

class EmbeddingProvider {
 public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string provider_id() const = 0;
    // 0 until known (remote providers learn it from their first response).
    virtual std::size_t dim() const = 0;
    // Output length equals input length. Vectors are not necessarily normalized.
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
};

// Hashed bag-of-words: lowercase word tokens, each hashed (FNV-1a 64) into
// one of `dim` buckets and counted. Offline and deterministic.
class LocalHashEmbedder final : public EmbeddingProvider {
 public:
    explicit LocalHashEmbedder(std::size_t dim = 256);

    std::string provider_id() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

    EmbeddingVector embed(const std::string& text) const;

 private:
    std::size_t dim_;
};

// Lowercased word tokens, split on Unicode whitespace and punctuation.
std::vector<std::string> tokenize(const std::string& text);

struct RemoteEmbedderConfig {
    // Full endpoint URL, e.g. https://api.example.com/v1/embeddings
    std::string url;
    std::string model = "text-embedding-ada-002";
    // Name of the environment variable holding the bearer token.
    std::string api_key_env = "GROUNDRAG_EMBEDDING_API_KEY";
    std::chrono::milliseconds timeout{60000};
};

// POST {"model", "input": [...]} -> {"data": [{"embedding": [...]}, ...]}.
// The dimension is taken from the first response and enforced afterwards.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
    explicit RemoteEmbedder(RemoteEmbedderConfig config);

    std::string provider_id() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
    RemoteEmbedderConfig config_;
    std::string api_key_;
    std::atomic<std::size_t> dim_{0};
};

}  // namespace groundrag::index
