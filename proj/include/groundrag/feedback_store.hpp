#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundrag/retrieval.hpp"

struct sqlite3;

namespace groundrag::feedback {

inline constexpr int kSchemaVersion = 1;

struct RetrievedRef {
    std::string chunk_id;
    double score = 0.0;

    bool operator==(const RetrievedRef&) const = default;
};

struct InteractionRecord {
    // Assigned by the store when left empty.
    std::string interaction_id;
    std::string session_id;
    std::string query_text;
    std::vector<RetrievedRef> retrieved;
    std::string answer_text;
    std::string model_id;
    retrieval::RetrievalMode retrieval_mode = retrieval::RetrievalMode::full_chunk;
    std::string language = "fi";
    // UTC "YYYY-MM-DDTHH:MM:SS.mmmZ"; filled with the current time when empty.
    std::string created_at;
    long long latency_ms = 0;

    bool operator==(const InteractionRecord&) const = default;
};

struct FeedbackRecord {
    std::string interaction_id;
    int rating = 0;
    std::optional<std::string> comment;
    std::string rated_at;
    // Human-entered judgements such as factual_accuracy or fluency.
    std::map<std::string, std::string> labels;

    bool operator==(const FeedbackRecord&) const = default;
};

struct HistoryItem {
    InteractionRecord interaction;
    std::optional<FeedbackRecord> feedback;
    // Superseded ratings, oldest first.
    std::vector<FeedbackRecord> audit;
};

enum class ExportFormat { html, md };

ExportFormat parse_export_format(std::string_view name);

nlohmann::json to_json(const InteractionRecord& rec);
nlohmann::json to_json(const FeedbackRecord& rec);
nlohmann::json to_json(const HistoryItem& item);

// Single-file SQLite store in WAL mode. Writes are serialized; every
// completed call is visible to all later reads.
class FeedbackStore {
 public:
    // Creates the schema when the file is new. Throws Error(storage) on
    // failure or when the file carries a newer schema version.
    static std::unique_ptr<FeedbackStore> open(const std::filesystem::path& path);

    ~FeedbackStore();
    FeedbackStore(const FeedbackStore&) = delete;
    FeedbackStore& operator=(const FeedbackStore&) = delete;

    // Validates then persists (fsync'd) before returning the id.
    std::string record_interaction(InteractionRecord rec);

    // Replaces the current rating, moving the previous one to the audit list.
    void record_feedback(const std::string& interaction_id, int rating,
                         std::optional<std::string> comment = std::nullopt,
                         std::map<std::string, std::string> labels = {});

    std::optional<InteractionRecord> get_interaction(const std::string& interaction_id) const;
    std::optional<FeedbackRecord> current_feedback(const std::string& interaction_id) const;
    std::vector<FeedbackRecord> feedback_audit(const std::string& interaction_id) const;

    // Ordered by created_at, then insertion order.
    std::vector<HistoryItem> session_history(const std::string& session_id) const;
    std::vector<HistoryItem> all_history() const;

    // Printable conversation document; byte-identical for identical store content.
    std::string export_history(const std::string& session_id, ExportFormat format) const;

    // One JSON object per interaction with its current rating and audit trail.
    void export_all_jsonl(std::ostream& out) const;

    bool healthy() const;
    const std::filesystem::path& path() const noexcept { return path_; }

 private:
    FeedbackStore(std::filesystem::path path, sqlite3* db);

    std::vector<HistoryItem> load_history(const std::string* session_id) const;

    std::filesystem::path path_;
    sqlite3* db_;
    mutable std::mutex mutex_;
};

}  // namespace groundrag::feedback
