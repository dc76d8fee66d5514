#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "groundrag/chunk_io.hpp"
#include "groundrag/cli.hpp"
#include "groundrag/feedback_store.hpp"
#include "groundrag/vector_index.hpp"
#include "test_support.hpp"

using namespace groundrag;
using namespace groundrag::testing;
using json = nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "groundrag");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::size_t line_count(const std::filesystem::path& p) {
    std::istringstream in(read_file(p));
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

std::string corpus() { return (fixtures_dir() / "corpus").string(); }

}  // namespace

TEST(Cli, IngestThenIndex) {
    TempDir dir;
    const auto chunks = (dir / "chunks.jsonl").string();
    const auto idx = (dir / "index.bin").string();
    auto r = run_cli({"ingest", "--corpus", corpus(), "--out", chunks, "--max-chars", "300", "--overlap", "50"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto summary = json::parse(r.out);
    EXPECT_EQ(summary["documents"], 3);
    EXPECT_EQ(summary["chunks"], 7);
    EXPECT_EQ(line_count(chunks), 7u);

    r = run_cli({"index", "--chunks", chunks, "--out", idx});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_EQ(json::parse(r.out)["entries"], line_count(chunks));
    const auto loaded = index::load_index(idx);
    EXPECT_EQ(loaded.size(), line_count(chunks));
    EXPECT_EQ(loaded.dim(), 256u);
}

TEST(Cli, SentenceModeIngest) {
    TempDir dir;
    const auto r = run_cli({"ingest", "--corpus", corpus(), "--out", (dir / "c.jsonl").string(), "--boundary",
                            "sentence", "--max-chars", "200", "--overlap", "40"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const auto& c : ingest::load_chunks_jsonl(dir / "c.jsonl")) EXPECT_LE(c.span.end - c.span.start, 200u);
}

TEST(Cli, UsageErrors) {
    auto r = run_cli({"ingest", "--corpus", corpus()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_EQ(json::parse(r.err)["error"], "Usage");
    EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"ingest", "--corpus", corpus(), "--out", "x", "--boundary", "word"}).code, cli::kExitUsage);
    TempDir dir;
    r = run_cli({"ingest", "--corpus", corpus(), "--out", (dir / "c.jsonl").string(), "--max-chars", "100",
                 "--overlap", "100"});
    EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST(Cli, IoErrors) {
    TempDir dir;
    auto r = run_cli({"ingest", "--corpus", (dir / "missing").string(), "--out", (dir / "c.jsonl").string()});
    EXPECT_EQ(r.code, cli::kExitIo);
    EXPECT_NO_THROW(json::parse(r.err));
    r = run_cli({"index", "--chunks", (dir / "missing.jsonl").string(), "--out", (dir / "i.bin").string()});
    EXPECT_EQ(r.code, cli::kExitIo);
    write_file(dir / "bad.bin", "ARGX garbage");
    r = run_cli({"ask", "--index", (dir / "bad.bin").string(), "--chunks", (dir / "missing.jsonl").string(),
                 "--question", "q"});
    EXPECT_EQ(r.code, cli::kExitIo);
    EXPECT_EQ(run_cli({"export", "--store", (dir / "nope.sqlite").string(), "--all"}).code, cli::kExitIo);
}

TEST(Cli, HelpExitsZero) {
    auto r = run_cli({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("ingest"), std::string::npos);
    EXPECT_NE(r.out.find("eval"), std::string::npos);
    r = run_cli({"ask", "--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("--question"), std::string::npos);
    EXPECT_EQ(r.out.find("api-key"), std::string::npos);
}

TEST(Cli, EvalReportOnAprilFixture) {
    TempDir dir;
    const auto from = (fixtures_dir() / "ratings" / "april.jsonl").string();
    const auto report_path = (dir / "april.json").string();
    auto r = run_cli({"eval", "report", "--from", from, "--round", "April 2025", "--out", report_path});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* row : {"22%", "24%", "25%", "3%"}) EXPECT_NE(r.out.find(row), std::string::npos) << row;
    const auto report = json::parse(read_file(report_path));
    EXPECT_EQ(report["total"], 67);
    EXPECT_EQ(report["percents"]["1"], 22);
    EXPECT_EQ(report["percents"]["5"], 3);
    EXPECT_EQ(report["low_share_percent"], 46);
    EXPECT_EQ(report["latency"]["n"], 67);

    const auto aug_path = (dir / "august.json").string();
    r = run_cli({"eval", "report", "--from", (fixtures_dir() / "ratings" / "august.jsonl").string(), "--round",
                 "August 2025", "--json"});
    ASSERT_EQ(r.code, 0);
    write_file(aug_path, r.out);
    EXPECT_EQ(json::parse(r.out)["percents"]["3"], 32);

    r = run_cli({"eval", "compare", "--a", report_path, "--b", aug_path, "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto cmp = json::parse(r.out);
    EXPECT_EQ(cmp["low_share"]["from"], 46);
    EXPECT_EQ(cmp["low_share"]["to"], 38);
    EXPECT_EQ(cmp["top_share"]["to"], 21);
    r = run_cli({"eval", "compare", "--a", report_path, "--b", aug_path});
    EXPECT_NE(r.out.find("46% -> 38%"), std::string::npos);
}

TEST(Cli, EvalReportFilterToNothingFails) {
    const auto from = (fixtures_dir() / "ratings" / "april.jsonl").string();
    const auto r = run_cli({"eval", "report", "--from", from, "--round", "x", "--model", "unknown-model"});
    EXPECT_EQ(r.code, cli::kExitIo);
    EXPECT_EQ(json::parse(r.err)["error"], "EmptyEvaluation");
}

TEST(Cli, AskWithMockBackend) {
    TempDir dir;
    const auto chunks = (dir / "chunks.jsonl").string();
    const auto idx = (dir / "index.bin").string();
    ASSERT_EQ(run_cli({"ingest", "--corpus", corpus(), "--out", chunks, "--max-chars", "300", "--overlap", "50"}).code,
              0);
    ASSERT_EQ(run_cli({"index", "--chunks", chunks, "--out", idx}).code, 0);
    setenv("GROUNDRAG_CHAT_BACKEND", "mock", 1);
    auto r = run_cli({"ask", "--index", idx, "--chunks", chunks, "--question",
                      "When is the course registration deadline?", "--language", "en"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("[S1] ", 0), 0u) << r.out;
    EXPECT_NE(r.out.find("Course registration"), std::string::npos);
    EXPECT_NE(r.out.find("According to [S1]"), std::string::npos);
    EXPECT_TRUE(r.err.empty());

    setenv("GROUNDRAG_CHAT_URL", "mock://?tokens=50", 1);
    r = run_cli({"ask", "--index", idx, "--chunks", chunks, "--question", "deadline", "--max-tokens", "10"});
    unsetenv("GROUNDRAG_CHAT_URL");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("w9 "), std::string::npos);
    EXPECT_EQ(r.out.find("w10 "), std::string::npos);
    EXPECT_EQ(json::parse(r.err)["warning"], "answer truncated");

    r = run_cli({"ask", "--index", idx, "--chunks", chunks, "--question", "   "});
    EXPECT_EQ(r.code, cli::kExitUsage);

    setenv("GROUNDRAG_CHAT_URL", "mock://?status=503", 1);
    r = run_cli({"ask", "--index", idx, "--chunks", chunks, "--question", "deadline"});
    unsetenv("GROUNDRAG_CHAT_URL");
    EXPECT_EQ(r.code, cli::kExitBackend);
    unsetenv("GROUNDRAG_CHAT_BACKEND");
}

TEST(Cli, ExportSessionAndAll) {
    TempDir dir;
    const auto store_path = dir / "fb.sqlite";
    {
        auto store = feedback::FeedbackStore::open(store_path);
        feedback::InteractionRecord rec;
        rec.session_id = "s1";
        rec.query_text = "Where is the spill kit?";
        rec.answer_text = "Next to the emergency shower [S1].";
        rec.model_id = "current";
        rec.retrieved = {{"lab#0", 0.7}};
        store->record_feedback(store->record_interaction(rec), 4);
    }
    auto r = run_cli({"export", "--store", store_path.string(), "--session", "s1", "--format", "md"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("Where is the spill kit?"), std::string::npos);
    EXPECT_NE(r.out.find("4/5"), std::string::npos);

    r = run_cli({"export", "--store", store_path.string(), "--session", "s1", "--out", (dir / "s1.html").string()});
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(read_file(dir / "s1.html").find("Where is the spill kit?"), std::string::npos);

    r = run_cli({"export", "--store", store_path.string(), "--all"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(json::parse(r.out)["rating"], 4);

    EXPECT_EQ(run_cli({"export", "--store", store_path.string(), "--session", "ghost"}).code, cli::kExitIo);
    EXPECT_EQ(run_cli({"export", "--store", store_path.string()}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"export", "--store", store_path.string(), "--session", "s1", "--all"}).code, cli::kExitUsage);
}
