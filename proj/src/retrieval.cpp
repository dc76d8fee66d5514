#include "groundrag/retrieval.hpp"

#include <algorithm>
#include <set>

#include "groundrag/errors.hpp"
#include "groundrag/utf8.hpp"

namespace groundrag::retrieval {

std::string_view to_string(RetrievalMode mode) {
    return mode == RetrievalMode::full_chunk ? "full_chunk" : "filename_grouped";
}

RetrievalMode parse_retrieval_mode(std::string_view name) {
    if (name == "full_chunk") return RetrievalMode::full_chunk;
    if (name == "filename_grouped") return RetrievalMode::filename_grouped;
    throw Error(ErrorKind::config, "unknown retrieval mode '" + std::string(name) + "'");
}

ChunkStore::ChunkStore(std::vector<ingest::Chunk> chunks) : chunks_(std::move(chunks)) {
    by_id_.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (!by_id_.emplace(chunks_[i].chunk_id, i).second) {
            throw Error(ErrorKind::validation, "duplicate chunk id '" + chunks_[i].chunk_id + "'");
        }
    }
}

const ingest::Chunk* ChunkStore::find(std::string_view chunk_id) const {
    auto it = by_id_.find(std::string(chunk_id));
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

void KnowledgeBase::check_consistency() const {
    for (const auto& e : index.entries()) {
        if (!chunks.find(e.chunk_id)) {
            throw Error(ErrorKind::consistency, "indexed chunk '" + e.chunk_id + "' missing from chunk store");
        }
    }
}

std::vector<RetrievalHit> group_by_document(std::vector<RetrievalHit> ranked, std::size_t k) {
    std::vector<RetrievalHit> out;
    std::set<std::string> seen;
    for (auto& hit : ranked) {
        if (out.size() >= k) break;
        if (seen.insert(hit.doc_id).second) out.push_back(std::move(hit));
    }
    return out;
}

std::vector<RetrievalHit> retrieve(std::string_view query_text, const KnowledgeBase& kb,
                                   index::EmbeddingProvider& provider, const RetrievalParams& params) {
    const std::u32string decoded = utf8::decode(query_text);
    const bool blank = std::all_of(decoded.begin(), decoded.end(), [](char32_t c) { return utf8::is_space(c); });
    if (blank) throw Error(ErrorKind::empty_query, "query is blank");
    if (params.k == 0) throw Error(ErrorKind::validation, "k must be at least 1");
    if (kb.index.empty()) return {};

    std::vector<index::EmbeddingVector> embedded;
    try {
        const std::string text(query_text);
        embedded = provider.embed_batch(std::span<const std::string>(&text, 1));
    } catch (const std::exception& e) {
        throw Error(ErrorKind::retrieval_failed, std::string("query embedding failed: ") + e.what());
    }
    if (embedded.size() != 1) throw Error(ErrorKind::retrieval_failed, "provider returned no query vector");

    index::EmbeddingVector query;
    try {
        query = index::normalize(embedded.front().values);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::zero_vector) return {};
        throw;
    }

    // Grouping needs the whole ranking so that each document's best chunk is visible.
    const std::size_t depth = params.mode == RetrievalMode::full_chunk ? params.k : kb.index.size();
    const auto found = kb.index.search(query.values, depth, params.threshold);

    std::vector<RetrievalHit> hits;
    hits.reserve(found.size());
    for (const auto& f : found) {
        const ingest::Chunk* chunk = kb.chunks.find(f.chunk_id);
        if (!chunk) {
            throw Error(ErrorKind::consistency, "indexed chunk '" + f.chunk_id + "' missing from chunk store");
        }
        hits.push_back({f.chunk_id, chunk->doc_id, f.score, chunk->text, chunk->metadata});
    }
    if (params.mode == RetrievalMode::filename_grouped) return group_by_document(std::move(hits), params.k);
    return hits;
}

std::string render_hit(std::size_t citation_number, const RetrievalHit& hit) {
    auto field = [&](const char* key) {
        auto it = hit.metadata.find(key);
        return it == hit.metadata.end() ? std::string{} : it->second;
    };
    return "[S" + std::to_string(citation_number) + "] (" + field("title") + " — " +
           field("source_path") + ")\n" + hit.chunk_text + "\n\n";
}

ContextBundle assemble_context(std::span<const RetrievalHit> hits, std::size_t char_budget) {
    if (char_budget == 0) throw Error(ErrorKind::validation, "char_budget must be positive");
    ContextBundle bundle;
    bundle.char_budget = char_budget;
    for (const auto& hit : hits) {
        const std::string rendered = render_hit(bundle.hits.size() + 1, hit);
        const std::size_t size = utf8::length(rendered);
        if (bundle.used_chars + size > char_budget) {
            ++bundle.skipped;
            continue;
        }
        bundle.context_text += rendered;
        bundle.used_chars += size;
        bundle.hits.push_back(hit);
    }
    bundle.no_context = bundle.hits.empty();
    return bundle;
}

}  // namespace groundrag::retrieval
