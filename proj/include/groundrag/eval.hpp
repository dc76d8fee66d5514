#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundrag/feedback_store.hpp"

namespace groundrag::eval {

// Index i holds rating i + 1.
using RatingCounts = std::array<long long, 5>;
using RatingPercents = std::array<int, 5>;

struct LikertReport {
    std::string label;
    RatingCounts counts{};
    long long total = 0;
    RatingPercents percents{};
    int low_share_percent = 0;   // ratings 1-2
    int mid_share_percent = 0;   // rating 3
    int top_share_percent = 0;   // rating 5

    bool operator==(const LikertReport&) const = default;
};

// round(100 * part / total), halves away from zero; exact integer arithmetic.
int rounded_percent(long long part, long long total);

// Throws Error(empty_evaluation) for no ratings, Error(validation) for values outside 1..5.
LikertReport likert_report(std::string label, std::span<const int> ratings);
LikertReport likert_from_counts(std::string label, const RatingCounts& counts);

struct ShareChange {
    int from = 0;
    int to = 0;

    int delta() const noexcept { return to - from; }
    bool operator==(const ShareChange&) const = default;
};

struct RoundComparison {
    std::string label_a;
    std::string label_b;
    ShareChange low_share;
    ShareChange mid_share;
    ShareChange top_share;
    // b.percents[i] - a.percents[i]
    std::array<int, 5> percent_deltas{};
};

RoundComparison compare_rounds(const LikertReport& a, const LikertReport& b);

struct LatencyStats {
    std::size_t n = 0;
    double mean_ms = 0.0;
    double median_ms = 0.0;  // mean of the two middle values when n is even
    double p95_ms = 0.0;     // nearest rank: the ceil(0.95 n)-th smallest
};

LatencyStats latency_stats(std::span<const long long> latencies_ms);
LatencyStats latency_stats(std::span<const feedback::InteractionRecord> records);

nlohmann::json to_json(const LikertReport& report);
LikertReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RoundComparison& cmp);
nlohmann::json to_json(const LatencyStats& stats);

// Rating | Responses | % rows, one per rating, then the derived shares.
std::string render_table(const LikertReport& report);
// Two rounds side by side.
std::string render_table(const LikertReport& a, const LikertReport& b);
std::string render_comparison(const RoundComparison& cmp);

struct RatedSample {
    int rating = 0;
    std::string model_id;
    std::string created_at;
    std::optional<long long> latency_ms;
};

struct SampleFilter {
    std::optional<std::string> model_id;
    // Inclusive bounds compared against created_at as strings.
    std::optional<std::string> since;
    std::optional<std::string> until;
};

// Reads a feedback store (SQLite file) or a JSON Lines export. Unrated
// interactions are skipped.
std::vector<RatedSample> load_rated_samples(const std::filesystem::path& path, const SampleFilter& filter = {});

}  // namespace groundrag::eval
