#include "groundrag/cli.hpp"

#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "groundrag/chunk_io.hpp"
#include "groundrag/embedding.hpp"
#include "groundrag/errors.hpp"
#include "groundrag/eval.hpp"
#include "groundrag/feedback_store.hpp"
#include "groundrag/generation.hpp"
#include "groundrag/ingest.hpp"
#include "groundrag/prompt.hpp"
#include "groundrag/retrieval.hpp"
#include "groundrag/service.hpp"
#include "groundrag/service_config.hpp"
#include "groundrag/vector_index.hpp"

namespace groundrag::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config:
        case ErrorKind::empty_query:
        case ErrorKind::template_error:
            return kExitUsage;
        case ErrorKind::io:
        case ErrorKind::empty_document:
        case ErrorKind::consistency:
        case ErrorKind::corrupt_index:
        case ErrorKind::dimension:
        case ErrorKind::storage:
        case ErrorKind::not_found:
        case ErrorKind::validation:
        case ErrorKind::empty_evaluation:
        case ErrorKind::zero_vector:
            return kExitIo;
        case ErrorKind::build_failed:
        case ErrorKind::retrieval_failed:
        case ErrorKind::timeout:
        case ErrorKind::backend:
        case ErrorKind::stream_aborted:
            return kExitBackend;
    }
    return kExitFailure;
}

void report_error(std::ostream& err, std::string_view kind, const std::string& message) {
    err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, std::ostream& out, const std::string& text) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::io, "cannot write '" + path + "'");
    f << text;
    if (!f) throw Error(ErrorKind::io, "failed writing '" + path + "'");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::validation, "'" + path + "' is not valid JSON: " + e.what());
    }
}

// Recreates the provider an index was built with from its provider_id.
std::unique_ptr<index::EmbeddingProvider> provider_for(const index::VectorIndex& idx,
                                                       const std::string& embedding_url) {
    const auto& id = idx.provider_id();
    const std::string local = "local-hash-";
    const std::string remote = "remote:";
    if (id.rfind(local, 0) == 0) {
        return std::make_unique<index::LocalHashEmbedder>(idx.dim());
    }
    if (id.rfind(remote, 0) == 0) {
        service::EmbeddingConfig cfg;
        cfg.provider = "remote";
        cfg.remote.url = embedding_url;
        cfg.remote.model = id.substr(remote.size());
        return service::make_embedding_provider(cfg);
    }
    throw Error(ErrorKind::config, "index built with unknown provider '" + id + "'");
}

struct IngestArgs {
    std::string corpus;
    std::string out;
    std::size_t max_chars = 1000;
    std::size_t overlap = 200;
    std::string boundary = "hard";
    std::string extractor;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
    ingest::ChunkingConfig cfg;
    cfg.max_chars = a.max_chars;
    cfg.overlap_chars = a.overlap;
    cfg.boundary_mode = ingest::parse_boundary_mode(a.boundary);
    cfg.validate();
    ingest::CorpusOptions opts;
    if (!a.extractor.empty()) opts.extractor_command = a.extractor;
    const auto docs = ingest::load_corpus(a.corpus, opts);
    const auto chunks = ingest::chunk_corpus(docs, cfg);
    ingest::save_chunks_jsonl(a.out, chunks);
    std::size_t replaced = 0;
    for (const auto& d : docs) replaced += d.replaced_sequences;
    out << json{{"documents", docs.size()},
                {"chunks", chunks.size()},
                {"replaced_sequences", replaced},
                {"out", a.out}}
               .dump()
        << '\n';
    return kExitOk;
}

struct IndexArgs {
    std::string chunks;
    std::string provider = "local";
    std::string out;
    std::size_t dim = 256;
    std::size_t batch_size = 64;
    int retries = 2;
    std::string embedding_url;
    std::string embedding_model = "text-embedding-ada-002";
};

int cmd_index(const IndexArgs& a, std::ostream& out) {
    service::EmbeddingConfig cfg;
    cfg.provider = a.provider;
    cfg.dim = a.dim;
    cfg.remote.url = a.embedding_url;
    cfg.remote.model = a.embedding_model;
    auto provider = service::make_embedding_provider(cfg);
    const auto chunks = ingest::load_chunks_jsonl(a.chunks);
    index::BuildReport report;
    const auto idx = index::build_index(chunks, *provider, a.batch_size, a.retries, &report);
    index::save_index(idx, a.out);
    out << json{{"entries", idx.size()},
                {"dim", idx.dim()},
                {"provider_id", idx.provider_id()},
                {"dropped_zero_vectors", report.dropped_zero_vectors},
                {"out", a.out}}
               .dump()
        << '\n';
    return kExitOk;
}

struct EvalReportArgs {
    std::string from;
    std::string round;
    std::string model;
    std::string since;
    std::string until;
    std::string out;
    bool json_output = false;
};

int cmd_eval_report(const EvalReportArgs& a, std::ostream& out) {
    eval::SampleFilter filter;
    if (!a.model.empty()) filter.model_id = a.model;
    if (!a.since.empty()) filter.since = a.since;
    if (!a.until.empty()) filter.until = a.until;
    const auto samples = eval::load_rated_samples(a.from, filter);
    std::vector<int> ratings;
    std::vector<long long> latencies;
    for (const auto& s : samples) {
        ratings.push_back(s.rating);
        if (s.latency_ms) latencies.push_back(*s.latency_ms);
    }
    const auto report = eval::likert_report(a.round, ratings);
    json j = eval::to_json(report);
    if (!latencies.empty()) j["latency"] = eval::to_json(eval::latency_stats(latencies));
    if (!a.out.empty()) emit(a.out, out, j.dump(2) + "\n");
    if (a.json_output) {
        out << j.dump(2) << '\n';
    } else {
        out << eval::render_table(report);
    }
    return kExitOk;
}

struct EvalCompareArgs {
    std::string a;
    std::string b;
    bool json_output = false;
};

int cmd_eval_compare(const EvalCompareArgs& args, std::ostream& out) {
    const auto a = eval::report_from_json(read_json_file(args.a));
    const auto b = eval::report_from_json(read_json_file(args.b));
    const auto cmp = eval::compare_rounds(a, b);
    if (args.json_output) {
        out << eval::to_json(cmp).dump(2) << '\n';
    } else {
        out << eval::render_table(a, b) << '\n' << eval::render_comparison(cmp);
    }
    return kExitOk;
}

struct ExportArgs {
    std::string store;
    std::string session;
    std::string format = "html";
    bool all = false;
    std::string out;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
    if (!fs::exists(a.store)) throw Error(ErrorKind::io, "store '" + a.store + "' does not exist");
    auto store = feedback::FeedbackStore::open(a.store);
    if (a.all) {
        std::ostringstream buf;
        store->export_all_jsonl(buf);
        emit(a.out, out, buf.str());
        return kExitOk;
    }
    if (a.session.empty()) throw Error(ErrorKind::usage, "either --session or --all is required");
    emit(a.out, out, store->export_history(a.session, feedback::parse_export_format(a.format)));
    return kExitOk;
}

struct AskArgs {
    std::string index;
    std::string chunks;
    std::string question;
    std::optional<std::size_t> k;
    std::optional<double> threshold;
    std::string mode;
    std::string model;
    std::string language = "fi";
    std::string config;
    std::optional<int> max_tokens;
    std::optional<std::size_t> char_budget;
    std::string embedding_url;
};

int cmd_ask(const AskArgs& a, std::ostream& out, std::ostream& err) {
    std::optional<service::ServiceConfig> cfg;
    if (!a.config.empty()) cfg = service::load_service_config(a.config);

    retrieval::RetrievalParams params = cfg ? cfg->retrieval : retrieval::RetrievalParams{};
    if (a.k) params.k = *a.k;
    if (a.threshold) params.threshold = *a.threshold;
    if (!a.mode.empty()) params.mode = retrieval::parse_retrieval_mode(a.mode);
    if (params.k < 1) throw Error(ErrorKind::usage, "--k must be at least 1");
    const std::size_t budget = a.char_budget.value_or(cfg ? cfg->char_budget : retrieval::kDefaultCharBudget);

    generation::ModelProfile profile;
    if (cfg) {
        const auto* p = cfg->find_model(a.model.empty() ? cfg->default_model : a.model);
        if (!p) throw Error(ErrorKind::usage, "unknown model '" + a.model + "'");
        profile = *p;
    } else {
        profile.model_id = a.model.empty() ? "default" : a.model;
    }
    if (a.max_tokens) profile.max_answer_tokens = *a.max_tokens;
    profile.validate();

    retrieval::KnowledgeBase kb;
    kb.index = index::load_index(a.index);
    kb.chunks = retrieval::ChunkStore(ingest::load_chunks_jsonl(a.chunks));
    kb.check_consistency();
    auto provider = provider_for(kb.index, a.embedding_url);

    const auto hits = retrieval::retrieve(a.question, kb, *provider, params);
    const auto bundle = retrieval::assemble_context(hits, budget);
    const auto prompt = generation::render_prompt(
        bundle, a.question, generation::builtin_template(ingest::parse_language(a.language)));

    for (std::size_t i = 0; i < bundle.hits.size(); ++i) {
        const auto& h = bundle.hits[i];
        auto meta = [&](const char* key) {
            auto it = h.metadata.find(key);
            return it == h.metadata.end() ? std::string() : it->second;
        };
        out << "[S" << (i + 1) << "] " << std::fixed << std::setprecision(4) << h.score << ' '
            << meta("title") << " (" << meta("source_path") << ") " << h.chunk_id << '\n';
    }
    if (bundle.hits.empty()) out << "(no sources)\n";
    out << '\n';
    out.flush();

    const auto result = generation::generate(prompt.system_text, prompt.user_text, profile,
                                             [&out](std::string_view inc) {
                                                 out << inc;
                                                 out.flush();
                                                 return true;
                                             });
    out << '\n';
    if (result.truncated) {
        err << json{{"warning", "answer truncated"}, {"max_answer_tokens", profile.max_answer_tokens}}.dump()
            << '\n';
    }
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Grounded question answering over a document collection"};
    app.name("groundrag");
    app.require_subcommand(1);

    IngestArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "Extract, normalize and chunk a corpus into JSON Lines");
    ingest_cmd->add_option("--corpus", ingest_args.corpus, "Corpus directory or JSON manifest")->required();
    ingest_cmd->add_option("--out", ingest_args.out, "Output chunks file (.jsonl)")->required();
    ingest_cmd->add_option("--max-chars", ingest_args.max_chars, "Maximum chunk length in characters")
        ->capture_default_str();
    ingest_cmd->add_option("--overlap", ingest_args.overlap, "Overlap between consecutive chunks")
        ->capture_default_str();
    ingest_cmd->add_option("--boundary", ingest_args.boundary, "Chunk boundary mode")
        ->check(CLI::IsMember({"hard", "sentence"}))
        ->capture_default_str();
    ingest_cmd->add_option("--extractor", ingest_args.extractor,
                           "Command converting other formats (e.g. PDF) to text; gets the file path as last argument");

    IndexArgs index_args;
    auto* index_cmd = app.add_subcommand("index", "Embed chunks and write a vector index");
    index_cmd->add_option("--chunks", index_args.chunks, "Chunks file from `ingest`")->required();
    index_cmd->add_option("--out", index_args.out, "Output index file")->required();
    index_cmd->add_option("--provider", index_args.provider, "Embedding provider")
        ->check(CLI::IsMember({"local", "remote"}))
        ->capture_default_str();
    index_cmd->add_option("--dim", index_args.dim, "Dimension of the local provider")->capture_default_str();
    index_cmd->add_option("--batch-size", index_args.batch_size, "Texts per embedding request")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    index_cmd->add_option("--retries", index_args.retries, "Retries per failing batch")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    index_cmd->add_option("--embedding-url", index_args.embedding_url,
                          "Remote embeddings endpoint (default: $GROUNDRAG_EMBEDDING_URL)");
    index_cmd->add_option("--embedding-model", index_args.embedding_model, "Remote embedding model")
        ->capture_default_str();

    std::string serve_config;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--config", serve_config, "Service config file (JSON)")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Summarize user ratings");
    eval_cmd->require_subcommand(1);
    EvalReportArgs report_args;
    auto* report_cmd = eval_cmd->add_subcommand("report", "Rating distribution for one round");
    report_cmd->add_option("--from", report_args.from, "Feedback store or JSON Lines export")->required();
    report_cmd->add_option("--round", report_args.round, "Label for this round")->required();
    report_cmd->add_option("--model", report_args.model, "Only interactions answered by this model");
    report_cmd->add_option("--since", report_args.since, "Earliest created_at (inclusive, ISO-8601 UTC)");
    report_cmd->add_option("--until", report_args.until, "Latest created_at (inclusive, ISO-8601 UTC)");
    report_cmd->add_option("--out", report_args.out, "Also write the JSON report here");
    report_cmd->add_flag("--json", report_args.json_output, "Print JSON instead of the table");
    EvalCompareArgs compare_args;
    auto* compare_cmd = eval_cmd->add_subcommand("compare", "Compare two round reports");
    compare_cmd->add_option("--a", compare_args.a, "Earlier report (JSON)")->required();
    compare_cmd->add_option("--b", compare_args.b, "Later report (JSON)")->required();
    compare_cmd->add_flag("--json", compare_args.json_output, "Print JSON instead of text");

    ExportArgs export_args;
    auto* export_cmd = app.add_subcommand("export", "Export conversation history from the feedback store");
    export_cmd->add_option("--store", export_args.store, "Feedback store file")->required();
    auto* session_opt = export_cmd->add_option("--session", export_args.session, "Session to export");
    export_cmd->add_option("--format", export_args.format, "Document format")
        ->check(CLI::IsMember({"html", "md"}))
        ->capture_default_str();
    auto* all_flag = export_cmd->add_flag("--all", export_args.all, "Every interaction as JSON Lines");
    session_opt->excludes(all_flag);
    export_cmd->add_option("--out", export_args.out, "Output file (default: stdout)");

    AskArgs ask_args;
    auto* ask_cmd = app.add_subcommand("ask", "Answer one question from the command line");
    ask_cmd->add_option("--index", ask_args.index, "Index file")->required();
    ask_cmd->add_option("--chunks", ask_args.chunks, "Chunks file the index was built from")->required();
    ask_cmd->add_option("--question", ask_args.question, "Question text")->required();
    ask_cmd->add_option("--k", ask_args.k, "Number of hits");
    ask_cmd->add_option("--threshold", ask_args.threshold, "Minimum similarity score");
    ask_cmd->add_option("--mode", ask_args.mode, "Retrieval mode")
        ->check(CLI::IsMember({"full_chunk", "filename_grouped"}));
    ask_cmd->add_option("--model", ask_args.model, "Model id");
    ask_cmd->add_option("--language", ask_args.language, "Prompt language")
        ->check(CLI::IsMember({"fi", "sv", "en"}))
        ->capture_default_str();
    ask_cmd->add_option("--config", ask_args.config, "Service config supplying the model registry");
    ask_cmd->add_option("--max-tokens", ask_args.max_tokens, "Answer token cap");
    ask_cmd->add_option("--char-budget", ask_args.char_budget, "Context budget in characters");
    ask_cmd->add_option("--embedding-url", ask_args.embedding_url,
                        "Remote embeddings endpoint for remote-built indexes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        report_error(err, "Usage", e.what());
        return kExitUsage;
    }

    try {
        if (*ingest_cmd) return cmd_ingest(ingest_args, out);
        if (*index_cmd) return cmd_index(index_args, out);
        if (*serve_cmd) return service::serve(serve_config);
        if (*report_cmd) return cmd_eval_report(report_args, out);
        if (*compare_cmd) return cmd_eval_compare(compare_args, out);
        if (*export_cmd) return cmd_export(export_args, out);
        if (*ask_cmd) return cmd_ask(ask_args, out, err);
    } catch (const Error& e) {
        report_error(err, to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        report_error(err, "Internal", e.what());
        return kExitFailure;
    }
    report_error(err, "Usage", "no subcommand given");
    return kExitUsage;
}

}  // namespace groundrag::cli
