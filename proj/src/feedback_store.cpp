#include "groundrag/feedback_store.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include <sqlite3.h>

#include "groundrag/errors.hpp"
#include "groundrag/timeutil.hpp"

namespace groundrag::feedback {

using json = nlohmann::json;

namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS schema_info (version INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS interactions (
    seq            INTEGER PRIMARY KEY AUTOINCREMENT,
    interaction_id TEXT NOT NULL UNIQUE,
    session_id     TEXT NOT NULL,
    query_text     TEXT NOT NULL,
    answer_text    TEXT NOT NULL,
    model_id       TEXT NOT NULL,
    retrieval_mode TEXT NOT NULL,
    language       TEXT NOT NULL,
    created_at     TEXT NOT NULL,
    latency_ms     INTEGER NOT NULL CHECK (latency_ms >= 0)
);
CREATE INDEX IF NOT EXISTS interactions_by_session ON interactions (session_id, created_at, seq);
CREATE TABLE IF NOT EXISTS retrieved (
    interaction_id TEXT NOT NULL REFERENCES interactions (interaction_id),
    rank           INTEGER NOT NULL,
    chunk_id       TEXT NOT NULL,
    score          REAL NOT NULL,
    PRIMARY KEY (interaction_id, rank)
);
CREATE TABLE IF NOT EXISTS feedback (
    interaction_id TEXT PRIMARY KEY REFERENCES interactions (interaction_id),
    rating         INTEGER NOT NULL CHECK (rating BETWEEN 1 AND 5),
    comment        TEXT,
    labels         TEXT NOT NULL,
    rated_at       TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS feedback_audit (
    seq            INTEGER PRIMARY KEY AUTOINCREMENT,
    interaction_id TEXT NOT NULL REFERENCES interactions (interaction_id),
    rating         INTEGER NOT NULL,
    comment        TEXT,
    labels         TEXT NOT NULL,
    rated_at       TEXT NOT NULL,
    replaced_at    TEXT NOT NULL
);
)sql";

[[noreturn]] void fail(sqlite3* db, const std::string& what) {
    throw Error(ErrorKind::storage, what + ": " + (db ? sqlite3_errmsg(db) : "no database"));
}

void exec(sqlite3* db, const char* sql) {
    char* msg = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &msg) != SQLITE_OK) {
        std::string text = msg ? msg : "unknown error";
        sqlite3_free(msg);
        throw Error(ErrorKind::storage, text);
    }
}

class Statement {
 public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) fail(db, "prepare");
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, const std::string& v) {
        check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int i, const std::optional<std::string>& v) {
        if (!v) {
            check(sqlite3_bind_null(stmt_, i));
            return *this;
        }
        return bind(i, *v);
    }
    Statement& bind(int i, long long v) {
        check(sqlite3_bind_int64(stmt_, i, v));
        return *this;
    }
    Statement& bind(int i, double v) {
        check(sqlite3_bind_double(stmt_, i, v));
        return *this;
    }

    // True while a row is available.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        fail(db_, "step");
    }

    std::string text(int col) const {
        const auto* p = sqlite3_column_text(stmt_, col);
        return p ? std::string(reinterpret_cast<const char*>(p), sqlite3_column_bytes(stmt_, col)) : std::string{};
    }
    std::optional<std::string> optional_text(int col) const {
        if (sqlite3_column_type(stmt_, col) == SQLITE_NULL) return std::nullopt;
        return text(col);
    }
    long long integer(int col) const { return sqlite3_column_int64(stmt_, col); }
    double real(int col) const { return sqlite3_column_double(stmt_, col); }

 private:
    void check(int rc) {
        if (rc != SQLITE_OK) fail(db_, "bind");
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

// Rolls back unless committed.
class Transaction {
 public:
    explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
    ~Transaction() {
        if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    }
    void commit() {
        exec(db_, "COMMIT");
        done_ = true;
    }

 private:
    sqlite3* db_;
    bool done_ = false;
};

std::string labels_to_text(const std::map<std::string, std::string>& labels) { return json(labels).dump(); }

std::map<std::string, std::string> labels_from_text(const std::string& text) {
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return {};
    return j.get<std::map<std::string, std::string>>();
}

bool interaction_exists(sqlite3* db, const std::string& id) {
    Statement st(db, "SELECT 1 FROM interactions WHERE interaction_id = ?");
    st.bind(1, id);
    return st.step();
}

std::string html_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", score);
    return buf;
}

std::string rating_text(const HistoryItem& item) {
    if (!item.feedback) return "not rated";
    std::string s = std::to_string(item.feedback->rating) + "/5";
    if (!item.audit.empty()) s += " (revised " + std::to_string(item.audit.size()) + "x)";
    return s;
}

std::string export_markdown(const std::string& session_id, const std::vector<HistoryItem>& items) {
    std::ostringstream out;
    out << "# Conversation " << session_id << "\n\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& rec = items[i].interaction;
        out << "## " << (i + 1) << ". " << rec.created_at << " - " << rec.model_id << "\n\n";
        out << "**Question:** " << rec.query_text << "\n\n";
        out << "**Answer:**\n\n" << rec.answer_text << "\n\n";
        out << "**Sources:**";
        if (rec.retrieved.empty()) out << " none";
        out << "\n\n";
        for (std::size_t s = 0; s < rec.retrieved.size(); ++s) {
            out << "- [S" << (s + 1) << "] " << rec.retrieved[s].chunk_id << " (score "
                << format_score(rec.retrieved[s].score) << ")\n";
        }
        if (!rec.retrieved.empty()) out << "\n";
        out << "**Rating:** " << rating_text(items[i]) << "\n";
        if (items[i].feedback && items[i].feedback->comment) {
            out << "\n**Comment:** " << *items[i].feedback->comment << "\n";
        }
        out << "\n";
    }
    return out.str();
}

std::string export_html(const std::string& session_id, const std::vector<HistoryItem>& items) {
    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        << "<title>Conversation " << html_escape(session_id) << "</title>\n"
        << "<style>\nbody{font-family:serif;max-width:48em;margin:2em auto}\n"
        << ".turn{page-break-inside:avoid;border-top:1px solid #999;padding-top:1em}\n"
        << ".answer{white-space:pre-wrap}\n@media print{body{margin:0}}\n</style>\n</head>\n<body>\n"
        << "<h1>Conversation " << html_escape(session_id) << "</h1>\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& rec = items[i].interaction;
        out << "<section class=\"turn\">\n<h2>" << (i + 1) << ". " << html_escape(rec.created_at) << " - "
            << html_escape(rec.model_id) << "</h2>\n";
        out << "<p class=\"question\"><strong>Question:</strong> " << html_escape(rec.query_text) << "</p>\n";
        out << "<div class=\"answer\">" << html_escape(rec.answer_text) << "</div>\n";
        out << "<p><strong>Sources:</strong>" << (rec.retrieved.empty() ? " none" : "") << "</p>\n";
        if (!rec.retrieved.empty()) {
            out << "<ol class=\"sources\">\n";
            for (const auto& r : rec.retrieved) {
                out << "<li>" << html_escape(r.chunk_id) << " (score " << format_score(r.score) << ")</li>\n";
            }
            out << "</ol>\n";
        }
        out << "<p><strong>Rating:</strong> " << html_escape(rating_text(items[i])) << "</p>\n";
        if (items[i].feedback && items[i].feedback->comment) {
            out << "<p><strong>Comment:</strong> " << html_escape(*items[i].feedback->comment) << "</p>\n";
        }
        out << "</section>\n";
    }
    out << "</body>\n</html>\n";
    return out.str();
}

void validate(const InteractionRecord& rec) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw Error(ErrorKind::validation, what);
    };
    require(!rec.session_id.empty(), "interaction needs a session_id");
    require(!rec.query_text.empty(), "interaction needs query_text");
    require(!rec.model_id.empty(), "interaction needs model_id");
    require(rec.latency_ms >= 0, "latency_ms must be non-negative");
    for (std::size_t i = 1; i < rec.retrieved.size(); ++i) {
        require(rec.retrieved[i - 1].score >= rec.retrieved[i].score, "retrieved scores must be descending");
    }
}

}  // namespace

ExportFormat parse_export_format(std::string_view name) {
    if (name == "html") return ExportFormat::html;
    if (name == "md") return ExportFormat::md;
    throw Error(ErrorKind::validation, "unknown export format '" + std::string(name) + "'");
}

json to_json(const InteractionRecord& rec) {
    json retrieved = json::array();
    for (const auto& r : rec.retrieved) retrieved.push_back({{"chunk_id", r.chunk_id}, {"score", r.score}});
    return json{{"interaction_id", rec.interaction_id},
                {"session_id", rec.session_id},
                {"query_text", rec.query_text},
                {"retrieved", retrieved},
                {"answer_text", rec.answer_text},
                {"model_id", rec.model_id},
                {"retrieval_mode", retrieval::to_string(rec.retrieval_mode)},
                {"language", rec.language},
                {"created_at", rec.created_at},
                {"latency_ms", rec.latency_ms}};
}

json to_json(const FeedbackRecord& rec) {
    return json{{"interaction_id", rec.interaction_id},
                {"rating", rec.rating},
                {"comment", rec.comment ? json(*rec.comment) : json(nullptr)},
                {"rated_at", rec.rated_at},
                {"labels", rec.labels}};
}

json to_json(const HistoryItem& item) {
    json j = to_json(item.interaction);
    j["rating"] = item.feedback ? json(item.feedback->rating) : json(nullptr);
    j["feedback"] = item.feedback ? to_json(*item.feedback) : json(nullptr);
    json audit = json::array();
    for (const auto& a : item.audit) audit.push_back(to_json(a));
    j["rating_audit"] = audit;
    return j;
}

std::unique_ptr<FeedbackStore> FeedbackStore::open(const std::filesystem::path& path) {
    sqlite3* db = nullptr;
    const int rc = sqlite3_open_v2(path.c_str(), &db,
                                   SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr);
    if (rc != SQLITE_OK) {
        std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
        sqlite3_close(db);
        throw Error(ErrorKind::storage, "cannot open store '" + path.string() + "': " + msg);
    }
    std::unique_ptr<FeedbackStore> store(new FeedbackStore(path, db));
    sqlite3_busy_timeout(db, 5000);
    exec(db, "PRAGMA journal_mode=WAL");
    exec(db, "PRAGMA synchronous=FULL");
    exec(db, "PRAGMA foreign_keys=ON");
    {
        Transaction tx(db);
        exec(db, kSchema);
        Statement st(db, "SELECT version FROM schema_info");
        if (st.step()) {
            const auto version = st.integer(0);
            if (version > kSchemaVersion) {
                throw Error(ErrorKind::storage, "store schema version " + std::to_string(version) +
                                                    " is newer than supported " + std::to_string(kSchemaVersion));
            }
        } else {
            Statement ins(db, "INSERT INTO schema_info (version) VALUES (?)");
            ins.bind(1, static_cast<long long>(kSchemaVersion));
            ins.step();
        }
        tx.commit();
    }
    return store;
}

FeedbackStore::FeedbackStore(std::filesystem::path path, sqlite3* db) : path_(std::move(path)), db_(db) {}

FeedbackStore::~FeedbackStore() { sqlite3_close(db_); }

std::string FeedbackStore::record_interaction(InteractionRecord rec) {
    validate(rec);
    if (rec.created_at.empty()) rec.created_at = now_utc();
    std::lock_guard lock(mutex_);
    Transaction tx(db_);
    if (rec.interaction_id.empty()) {
        Statement next(db_, "SELECT COALESCE(MAX(seq), 0) + 1 FROM interactions");
        next.step();
        char buf[32];
        std::snprintf(buf, sizeof buf, "ix-%08lld", next.integer(0));
        rec.interaction_id = buf;
    } else if (interaction_exists(db_, rec.interaction_id)) {
        throw Error(ErrorKind::validation, "interaction '" + rec.interaction_id + "' already exists");
    }
    Statement ins(db_,
                  "INSERT INTO interactions (interaction_id, session_id, query_text, answer_text, model_id,"
                  " retrieval_mode, language, created_at, latency_ms) VALUES (?,?,?,?,?,?,?,?,?)");
    ins.bind(1, rec.interaction_id)
        .bind(2, rec.session_id)
        .bind(3, rec.query_text)
        .bind(4, rec.answer_text)
        .bind(5, rec.model_id)
        .bind(6, std::string(retrieval::to_string(rec.retrieval_mode)))
        .bind(7, rec.language)
        .bind(8, rec.created_at)
        .bind(9, rec.latency_ms);
    ins.step();
    for (std::size_t i = 0; i < rec.retrieved.size(); ++i) {
        Statement r(db_, "INSERT INTO retrieved (interaction_id, rank, chunk_id, score) VALUES (?,?,?,?)");
        r.bind(1, rec.interaction_id)
            .bind(2, static_cast<long long>(i))
            .bind(3, rec.retrieved[i].chunk_id)
            .bind(4, rec.retrieved[i].score);
        r.step();
    }
    tx.commit();
    return rec.interaction_id;
}

void FeedbackStore::record_feedback(const std::string& interaction_id, int rating,
                                    std::optional<std::string> comment,
                                    std::map<std::string, std::string> labels) {
    if (rating < 1 || rating > 5) {
        throw Error(ErrorKind::validation, "rating must be between 1 and 5, got " + std::to_string(rating));
    }
    const std::string now = now_utc();
    std::lock_guard lock(mutex_);
    Transaction tx(db_);
    if (!interaction_exists(db_, interaction_id)) {
        throw Error(ErrorKind::not_found, "unknown interaction '" + interaction_id + "'");
    }
    {
        Statement move_old(db_,
                           "INSERT INTO feedback_audit (interaction_id, rating, comment, labels, rated_at,"
                           " replaced_at) SELECT interaction_id, rating, comment, labels, rated_at, ?"
                           " FROM feedback WHERE interaction_id = ?");
        move_old.bind(1, now).bind(2, interaction_id);
        move_old.step();
    }
    Statement upsert(db_,
                     "INSERT INTO feedback (interaction_id, rating, comment, labels, rated_at) VALUES (?,?,?,?,?)"
                     " ON CONFLICT (interaction_id) DO UPDATE SET rating = excluded.rating,"
                     " comment = excluded.comment, labels = excluded.labels, rated_at = excluded.rated_at");
    upsert.bind(1, interaction_id)
        .bind(2, static_cast<long long>(rating))
        .bind(3, comment)
        .bind(4, labels_to_text(labels))
        .bind(5, now);
    upsert.step();
    tx.commit();
}

std::optional<InteractionRecord> FeedbackStore::get_interaction(const std::string& interaction_id) const {
    std::lock_guard lock(mutex_);
    Statement st(db_,
                 "SELECT interaction_id, session_id, query_text, answer_text, model_id, retrieval_mode,"
                 " language, created_at, latency_ms FROM interactions WHERE interaction_id = ?");
    st.bind(1, interaction_id);
    if (!st.step()) return std::nullopt;
    InteractionRecord rec;
    rec.interaction_id = st.text(0);
    rec.session_id = st.text(1);
    rec.query_text = st.text(2);
    rec.answer_text = st.text(3);
    rec.model_id = st.text(4);
    rec.retrieval_mode = retrieval::parse_retrieval_mode(st.text(5));
    rec.language = st.text(6);
    rec.created_at = st.text(7);
    rec.latency_ms = st.integer(8);
    Statement r(db_, "SELECT chunk_id, score FROM retrieved WHERE interaction_id = ? ORDER BY rank");
    r.bind(1, interaction_id);
    while (r.step()) rec.retrieved.push_back({r.text(0), r.real(1)});
    return rec;
}

std::optional<FeedbackRecord> FeedbackStore::current_feedback(const std::string& interaction_id) const {
    std::lock_guard lock(mutex_);
    Statement st(db_, "SELECT rating, comment, labels, rated_at FROM feedback WHERE interaction_id = ?");
    st.bind(1, interaction_id);
    if (!st.step()) return std::nullopt;
    return FeedbackRecord{interaction_id, static_cast<int>(st.integer(0)), st.optional_text(1), st.text(3),
                          labels_from_text(st.text(2))};
}

std::vector<FeedbackRecord> FeedbackStore::feedback_audit(const std::string& interaction_id) const {
    std::lock_guard lock(mutex_);
    Statement st(db_,
                 "SELECT rating, comment, labels, rated_at FROM feedback_audit WHERE interaction_id = ?"
                 " ORDER BY seq");
    st.bind(1, interaction_id);
    std::vector<FeedbackRecord> out;
    while (st.step()) {
        out.push_back({interaction_id, static_cast<int>(st.integer(0)), st.optional_text(1), st.text(3),
                       labels_from_text(st.text(2))});
    }
    return out;
}

std::vector<HistoryItem> FeedbackStore::load_history(const std::string* session_id) const {
    std::vector<std::string> ids;
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, session_id
                              ? "SELECT interaction_id FROM interactions WHERE session_id = ? ORDER BY created_at, seq"
                              : "SELECT interaction_id FROM interactions ORDER BY created_at, seq");
        if (session_id) st.bind(1, *session_id);
        while (st.step()) ids.push_back(st.text(0));
    }
    std::vector<HistoryItem> items;
    items.reserve(ids.size());
    for (const auto& id : ids) {
        HistoryItem item;
        auto rec = get_interaction(id);
        if (!rec) continue;
        item.interaction = std::move(*rec);
        item.feedback = current_feedback(id);
        item.audit = feedback_audit(id);
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<HistoryItem> FeedbackStore::session_history(const std::string& session_id) const {
    return load_history(&session_id);
}

std::vector<HistoryItem> FeedbackStore::all_history() const { return load_history(nullptr); }

std::string FeedbackStore::export_history(const std::string& session_id, ExportFormat format) const {
    const auto items = session_history(session_id);
    if (items.empty()) throw Error(ErrorKind::not_found, "no interactions for session '" + session_id + "'");
    return format == ExportFormat::md ? export_markdown(session_id, items) : export_html(session_id, items);
}

void FeedbackStore::export_all_jsonl(std::ostream& out) const {
    for (const auto& item : all_history()) out << to_json(item).dump() << '\n';
}

bool FeedbackStore::healthy() const {
    try {
        std::lock_guard lock(mutex_);
        Statement st(db_, "SELECT version FROM schema_info");
        return st.step();
    } catch (const Error&) {
        return false;
    }
}

}  // namespace groundrag::feedback
