#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <regex>
#include <set>

#include "groundrag/errors.hpp"
#include "groundrag/retrieval.hpp"
#include "groundrag/utf8.hpp"
#include "test_support.hpp"

using namespace groundrag;
using namespace groundrag::retrieval;
using groundrag::testing::FixedProvider;

namespace {

ingest::Chunk chunk(const std::string& doc, std::size_t ordinal, const std::string& text) {
    ingest::Chunk c;
    c.doc_id = doc;
    c.ordinal = ordinal;
    c.chunk_id = doc + "#" + std::to_string(ordinal);
    c.text = text;
    c.metadata = {{"title", "Title " + doc}, {"source_path", doc + ".txt"}, {"language", "en"}};
    return c;
}

std::vector<float> at_cosine(double s) {
    return {static_cast<float>(s), static_cast<float>(std::sqrt(1.0 - s * s)), 0.0f};
}

// Two documents of three chunks; against the query (1,0,0) the chunk scores are
// A: 0.9 0.8 0.7   B: 0.6 0.5 0.4
struct ScoreTable {
    std::vector<ingest::Chunk> chunks;
    std::map<std::string, std::vector<float>> vectors;
    KnowledgeBase kb;

    ScoreTable() {
        const double a[] = {0.9, 0.8, 0.7};
        const double b[] = {0.6, 0.5, 0.4};
        for (std::size_t i = 0; i < 3; ++i) {
            chunks.push_back(chunk("A", i, "a" + std::to_string(i)));
            vectors["a" + std::to_string(i)] = at_cosine(a[i]);
            chunks.push_back(chunk("B", i, "b" + std::to_string(i)));
            vectors["b" + std::to_string(i)] = at_cosine(b[i]);
        }
        vectors["query"] = {1.0f, 0.0f, 0.0f};
        FixedProvider p(3, vectors);
        kb.index = index::build_index(chunks, p, 16);
        kb.chunks = ChunkStore(chunks);
    }

    FixedProvider provider() const { return FixedProvider(3, vectors); }
};

std::vector<std::string> ids(const std::vector<RetrievalHit>& hits) {
    std::vector<std::string> out;
    for (const auto& h : hits) out.push_back(h.chunk_id);
    return out;
}

RetrievalHit hit_with_text(const std::string& id, const std::string& text) {
    RetrievalHit h;
    h.chunk_id = id;
    h.doc_id = id;
    h.score = 0.5;
    h.chunk_text = text;
    h.metadata = {{"title", "T"}, {"source_path", "p.txt"}};
    return h;
}

// A hit whose rendered block is exactly `size` characters when cited with a one-digit number.
RetrievalHit hit_of_rendered_size(const std::string& id, std::size_t size) {
    const std::size_t overhead = utf8::length(render_hit(1, hit_with_text(id, "")));
    return hit_with_text(id, std::string(size - overhead, 'x'));
}

// Greedy simulation over rendered sizes: include if it fits, otherwise skip.
std::vector<std::size_t> greedy_oracle(const std::vector<std::size_t>& sizes, std::size_t budget) {
    std::vector<std::size_t> taken;
    std::size_t used = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (used + sizes[i] <= budget) {
            used += sizes[i];
            taken.push_back(i);
        }
    }
    return taken;
}

}  // namespace

TEST(Retrieve, FullChunkVersusGroupedOnScoreTable) {
    ScoreTable t;
    auto p = t.provider();
    const auto full = retrieve("query", t.kb, p, {3, 0.0, RetrievalMode::full_chunk});
    EXPECT_EQ(ids(full), (std::vector<std::string>{"A#0", "A#1", "A#2"}));
    const auto grouped = retrieve("query", t.kb, p, {3, 0.0, RetrievalMode::filename_grouped});
    EXPECT_EQ(ids(grouped), (std::vector<std::string>{"A#0", "B#0"}));
    EXPECT_NEAR(grouped[0].score, 0.9, 1e-6);
    EXPECT_NEAR(grouped[1].score, 0.6, 1e-6);
}

TEST(Retrieve, JoinsTextAndMetadata) {
    ScoreTable t;
    auto p = t.provider();
    const auto hits = retrieve("query", t.kb, p, {1, 0.0, RetrievalMode::full_chunk});
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].chunk_text, "a0");
    EXPECT_EQ(hits[0].doc_id, "A");
    EXPECT_EQ(hits[0].metadata.at("title"), "Title A");
}

TEST(Retrieve, KLargerThanCorpusReturnsAllAboveThreshold) {
    ScoreTable t;
    auto p = t.provider();
    EXPECT_EQ(retrieve("query", t.kb, p, {50, 0.0, RetrievalMode::full_chunk}).size(), 6u);
    EXPECT_EQ(retrieve("query", t.kb, p, {50, 0.55, RetrievalMode::full_chunk}).size(), 4u);
}

TEST(Retrieve, SelfSimilarityWithLocalProvider) {
    const auto docs = ingest::load_corpus(groundrag::testing::fixtures_dir() / "corpus");
    const auto chunks = ingest::chunk_corpus(docs, {300, 50, ingest::BoundaryMode::hard});
    index::LocalHashEmbedder p(256);
    KnowledgeBase kb{index::build_index(chunks, p, 8), ChunkStore(chunks)};
    for (const auto& c : chunks) {
        const auto hits = retrieve(c.text, kb, p, {3, 0.0, RetrievalMode::full_chunk});
        ASSERT_FALSE(hits.empty());
        EXPECT_EQ(hits[0].chunk_id, c.chunk_id);
        EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
    }
}

TEST(Retrieve, BlankQueryRejected) {
    ScoreTable t;
    auto p = t.provider();
    for (const std::string q : {"", "   ", "\t\n", "  "}) {
        try {
            retrieve(q, t.kb, p, {});
            FAIL() << "accepted blank query";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::empty_query);
        }
    }
}

TEST(Retrieve, ProviderFailureIsRetrievalFailed) {
    class Broken final : public index::EmbeddingProvider {
     public:
        std::string provider_id() const override { return "broken"; }
        std::size_t dim() const override { return 3; }
        std::vector<index::EmbeddingVector> embed_batch(std::span<const std::string>) override {
            throw Error(ErrorKind::backend, "down");
        }
    } broken;
    ScoreTable t;
    try {
        retrieve("query", t.kb, broken, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::retrieval_failed);
    }
}

TEST(Retrieve, ZeroQueryVectorGivesNoHits) {
    ScoreTable t;
    auto p = t.provider();  // unknown text maps to the zero vector
    EXPECT_TRUE(retrieve("?!", t.kb, p, {}).empty());
}

TEST(Retrieve, ModeNamesRoundTrip) {
    EXPECT_EQ(parse_retrieval_mode("full_chunk"), RetrievalMode::full_chunk);
    EXPECT_EQ(parse_retrieval_mode("filename_grouped"), RetrievalMode::filename_grouped);
    EXPECT_EQ(to_string(RetrievalMode::filename_grouped), "filename_grouped");
    EXPECT_THROW(parse_retrieval_mode("bm25"), Error);
}

TEST(Retrieve, KnowledgeBaseConsistency) {
    ScoreTable t;
    KnowledgeBase broken{t.kb.index, ChunkStore({chunk("A", 0, "a0")})};
    EXPECT_THROW(broken.check_consistency(), Error);
    EXPECT_NO_THROW(t.kb.check_consistency());
}

TEST(Group, KeepsFirstHitPerDocument) {
    std::vector<RetrievalHit> ranked;
    for (const char* d : {"x", "y", "x", "z", "y"}) {
        auto h = hit_with_text(std::string(d) + std::to_string(ranked.size()), "t");
        h.doc_id = d;
        ranked.push_back(h);
    }
    const auto g = group_by_document(ranked, 2);
    EXPECT_EQ(ids(g), (std::vector<std::string>{"x0", "y1"}));
}

TEST(ModeProperty, FullChunkDominatesGroupedAtEachRank) {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ingest::Chunk> chunks;
        std::map<std::string, std::vector<float>> vectors;
        std::normal_distribution<float> nd;
        const int docs = 1 + static_cast<int>(rng() % 5);
        for (int d = 0; d < docs; ++d) {
            const int n = 1 + static_cast<int>(rng() % 5);
            for (int i = 0; i < n; ++i) {
                const std::string text = "t" + std::to_string(d) + "_" + std::to_string(i);
                chunks.push_back(chunk("doc" + std::to_string(d), i, text));
                vectors[text] = {nd(rng), nd(rng), nd(rng), nd(rng)};
            }
        }
        vectors["q"] = {nd(rng), nd(rng), nd(rng), nd(rng)};
        FixedProvider p(4, vectors);
        KnowledgeBase kb{index::build_index(chunks, p, 8), ChunkStore(chunks)};
        const std::size_t k = 1 + rng() % 8;
        const auto full = retrieve("q", kb, p, {k, -1.0, RetrievalMode::full_chunk});
        const auto grouped = retrieve("q", kb, p, {k, -1.0, RetrievalMode::filename_grouped});
        std::set<std::string> seen;
        for (const auto& h : grouped) EXPECT_TRUE(seen.insert(h.doc_id).second);
        ASSERT_LE(grouped.size(), full.size());
        for (std::size_t i = 0; i < grouped.size(); ++i) EXPECT_GE(full[i].score, grouped[i].score);
    }
}

TEST(Context, RenderFormat) {
    auto h = hit_with_text("c", "Body text");
    h.metadata = {{"title", "Guide"}, {"source_path", "docs/guide.md"}};
    EXPECT_EQ(render_hit(2, h), "[S2] (Guide — docs/guide.md)\nBody text\n\n");
}

TEST(Context, AllFitUnderLargeBudget) {
    std::vector<RetrievalHit> hits;
    for (int i = 0; i < 3; ++i) hits.push_back(hit_with_text("h" + std::to_string(i), std::string(100, 'a')));
    const auto b = assemble_context(hits, 10000);
    EXPECT_EQ(b.hits.size(), 3u);
    EXPECT_FALSE(b.no_context);
    EXPECT_EQ(b.used_chars, utf8::length(b.context_text));
    EXPECT_EQ(b.skipped, 0u);
}

TEST(Context, BudgetBelowFirstHitFlagsNoContext) {
    const std::vector<RetrievalHit> hits{hit_with_text("h", std::string(100, 'a'))};
    const auto b = assemble_context(hits, 50);
    EXPECT_TRUE(b.no_context);
    EXPECT_TRUE(b.hits.empty());
    EXPECT_EQ(b.context_text, "");
    EXPECT_EQ(b.used_chars, 0u);
}

TEST(Context, SkipsOverflowingHitButKeepsLaterSmallerOne) {
    const std::vector<std::size_t> sizes{400, 700, 300};
    EXPECT_EQ(greedy_oracle(sizes, 800), (std::vector<std::size_t>{0, 2}));
    std::vector<RetrievalHit> hits;
    for (std::size_t i = 0; i < sizes.size(); ++i) hits.push_back(hit_of_rendered_size("h" + std::to_string(i + 1), sizes[i]));
    const auto b = assemble_context(hits, 800);
    EXPECT_EQ(ids(b.hits), (std::vector<std::string>{"h1", "h3"}));
    EXPECT_EQ(b.used_chars, 700u);
    EXPECT_EQ(b.skipped, 1u);
    // The third hit is cited as S2: citations stay consecutive.
    EXPECT_NE(b.context_text.find("[S2]"), std::string::npos);
    EXPECT_EQ(b.context_text.find("[S3]"), std::string::npos);
}

TEST(Context, ZeroBudgetRejected) {
    EXPECT_THROW(assemble_context({}, 0), Error);
}

TEST(ContextProperty, BudgetSafetyAndCitationCompleteness) {
    std::mt19937 rng(5);
    const std::regex marker(R"(\[S(\d+)\] \()");
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<RetrievalHit> hits;
        const int n = static_cast<int>(rng() % 9);
        for (int i = 0; i < n; ++i) {
            std::string text(1 + rng() % 400, 'a');
            if (rng() % 3 == 0) text += "äö€";
            hits.push_back(hit_with_text("h" + std::to_string(i), text));
        }
        const std::size_t budget = 1 + rng() % 1500;
        const auto b = assemble_context(hits, budget);
        EXPECT_LE(b.used_chars, budget);
        EXPECT_EQ(b.used_chars, utf8::length(b.context_text));
        EXPECT_EQ(b.hits.size() + b.skipped, hits.size());
        std::vector<int> cited;
        for (auto it = std::sregex_iterator(b.context_text.begin(), b.context_text.end(), marker);
             it != std::sregex_iterator(); ++it) {
            cited.push_back(std::stoi((*it)[1]));
        }
        ASSERT_EQ(cited.size(), b.hits.size());
        for (std::size_t i = 0; i < cited.size(); ++i) EXPECT_EQ(cited[i], static_cast<int>(i + 1));
        // Rank order preserved: included hits are a subsequence of the input.
        std::size_t pos = 0;
        for (const auto& h : b.hits) {
            while (pos < hits.size() && hits[pos].chunk_id != h.chunk_id) ++pos;
            EXPECT_LT(pos, hits.size());
        }
    }
}
