#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "groundrag/embedding.hpp"
#include "groundrag/ingest.hpp"
#include "groundrag/vector_index.hpp"

namespace groundrag::retrieval {

enum class RetrievalMode {
    full_chunk,
    // Legacy: one best chunk per source document.
    filename_grouped,
};

std::string_view to_string(RetrievalMode mode);
RetrievalMode parse_retrieval_mode(std::string_view name);

struct RetrievalHit {
    std::string chunk_id;
    std::string doc_id;
    double score = 0.0;
    std::string chunk_text;
    std::map<std::string, std::string> metadata;
};

// Chunk lookup by id for joining search results with text and metadata.
class ChunkStore {
 public:
    ChunkStore() = default;
    explicit ChunkStore(std::vector<ingest::Chunk> chunks);

    const ingest::Chunk* find(std::string_view chunk_id) const;
    std::size_t size() const noexcept { return chunks_.size(); }
    const std::vector<ingest::Chunk>& chunks() const noexcept { return chunks_; }

 private:
    std::vector<ingest::Chunk> chunks_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// An index together with the chunk texts it was built from.
struct KnowledgeBase {
    index::VectorIndex index;
    ChunkStore chunks;

    // Throws Error(consistency) if an indexed id has no chunk.
    void check_consistency() const;
};

struct RetrievalParams {
    std::size_t k = 5;
    double threshold = 0.0;
    RetrievalMode mode = RetrievalMode::full_chunk;
};

// Embeds the query with `provider` and searches `kb`. A query that embeds to
// the zero vector (e.g. only punctuation) yields no hits.
std::vector<RetrievalHit> retrieve(std::string_view query_text, const KnowledgeBase& kb,
                                   index::EmbeddingProvider& provider, const RetrievalParams& params);

// Keeps the first (highest ranked) hit per doc_id, then truncates to k.
std::vector<RetrievalHit> group_by_document(std::vector<RetrievalHit> ranked, std::size_t k);

inline constexpr std::size_t kDefaultCharBudget = 6000;

struct ContextBundle {
    // Hits actually rendered into context_text, in rank order; hit i is cited as [S(i+1)].
    std::vector<RetrievalHit> hits;
    std::string context_text;
    std::size_t char_budget = 0;
    std::size_t used_chars = 0;
    std::size_t skipped = 0;
    bool no_context = true;
};

// "[S<n>] (<title> — <source_path>)\n<chunk text>\n\n"
std::string render_hit(std::size_t citation_number, const RetrievalHit& hit);

// Greedy in rank order; a hit that does not fit the remaining budget is
// skipped whole and later, smaller hits may still be included.
// Sizes are counted in code points.
ContextBundle assemble_context(std::span<const RetrievalHit> hits, std::size_t char_budget);

}  // namespace groundrag::retrieval
