#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groundrag/embedding.hpp"
#include "groundrag/ingest.hpp"
#include "groundrag/timeutil.hpp"

namespace groundrag::index {

inline constexpr std::uint32_t kIndexFormatVersion = 1;
inline constexpr double kNormTolerance = 1e-6;

struct IndexEntry {
    std::string chunk_id;
    std::vector<float> vector;
};

struct SearchHit {
    std::string chunk_id;
    double score = 0.0;

    bool operator==(const SearchHit&) const = default;
};

// Flat exact index over unit-norm vectors. Immutable once constructed.
class VectorIndex {
 public:
    VectorIndex() = default;
    // Sorts entries by chunk_id; throws Error(validation) on duplicate ids,
    // dimension mismatches or vectors whose norm is not within kNormTolerance of 1.
    VectorIndex(std::size_t dim, std::string provider_id, std::vector<IndexEntry> entries,
                TimePoint built_at = Clock::now());

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
    const std::string& provider_id() const noexcept { return provider_id_; }
    TimePoint built_at() const noexcept { return built_at_; }
    bool contains(std::string_view chunk_id) const;

    // Top-k entries by dot product with score >= threshold, sorted by
    // descending score then ascending chunk_id.
    std::vector<SearchHit> search(std::span<const float> query, std::size_t k,
                                  double threshold) const;

 private:
    std::size_t dim_ = 0;
    std::string provider_id_;
    std::vector<IndexEntry> entries_;
    TimePoint built_at_{};
};

double dot(std::span<const float> a, std::span<const float> b);

struct BuildReport {
    std::size_t embedded = 0;
    std::vector<std::string> dropped_zero_vectors;
};

// Embeds chunk texts in batches. Each failing batch is retried `retries`
// times before BuildFailedError is raised with the count embedded so far.
VectorIndex build_index(std::span<const ingest::Chunk> chunks, EmbeddingProvider& provider,
                        std::size_t batch_size, int retries = 2, BuildReport* report = nullptr);

// "ARGX" | version u32 | dim u32 | count u64 | provider_id (u16 len + bytes) |
// per entry: chunk_id (u16 len + bytes), dim x f32. All integers little-endian.
std::string encode_index(const VectorIndex& index);
// Throws CorruptIndexError carrying the failing byte offset.
VectorIndex decode_index(std::string_view bytes, TimePoint built_at = Clock::now());

// Writes to a sibling temporary file then renames over `path`.
void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace groundrag::index
