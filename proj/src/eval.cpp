#include "groundrag/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "groundrag/errors.hpp"

namespace groundrag::eval {

using json = nlohmann::json;

int rounded_percent(long long part, long long total) {
    if (total <= 0) throw Error(ErrorKind::empty_evaluation, "percent of an empty total");
    const long long num = 100 * part;
    const long long sign = num < 0 ? -1 : 1;
    const long long mag = num < 0 ? -num : num;
    return static_cast<int>(sign * ((2 * mag + total) / (2 * total)));
}

LikertReport likert_from_counts(std::string label, const RatingCounts& counts) {
    LikertReport r;
    r.label = std::move(label);
    r.counts = counts;
    for (long long c : counts) {
        if (c < 0) throw Error(ErrorKind::validation, "rating counts must be non-negative");
        r.total += c;
    }
    if (r.total == 0) throw Error(ErrorKind::empty_evaluation, "no ratings for '" + r.label + "'");
    for (std::size_t i = 0; i < 5; ++i) r.percents[i] = rounded_percent(counts[i], r.total);
    r.low_share_percent = rounded_percent(counts[0] + counts[1], r.total);
    r.mid_share_percent = rounded_percent(counts[2], r.total);
    r.top_share_percent = rounded_percent(counts[4], r.total);
    return r;
}

LikertReport likert_report(std::string label, std::span<const int> ratings) {
    if (ratings.empty()) throw Error(ErrorKind::empty_evaluation, "no ratings for '" + label + "'");
    RatingCounts counts{};
    for (int rating : ratings) {
        if (rating < 1 || rating > 5) {
            throw Error(ErrorKind::validation, "rating " + std::to_string(rating) + " outside 1..5");
        }
        ++counts[static_cast<std::size_t>(rating - 1)];
    }
    return likert_from_counts(std::move(label), counts);
}

RoundComparison compare_rounds(const LikertReport& a, const LikertReport& b) {
    RoundComparison c;
    c.label_a = a.label;
    c.label_b = b.label;
    c.low_share = {a.low_share_percent, b.low_share_percent};
    c.mid_share = {a.mid_share_percent, b.mid_share_percent};
    c.top_share = {a.top_share_percent, b.top_share_percent};
    for (std::size_t i = 0; i < 5; ++i) c.percent_deltas[i] = b.percents[i] - a.percents[i];
    return c;
}

LatencyStats latency_stats(std::span<const long long> latencies_ms) {
    if (latencies_ms.empty()) throw Error(ErrorKind::empty_evaluation, "no latency samples");
    std::vector<long long> sorted(latencies_ms.begin(), latencies_ms.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    LatencyStats s;
    s.n = n;
    s.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    s.median_ms = n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                             : (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
    const std::size_t rank = (95 * n + 99) / 100;
    s.p95_ms = static_cast<double>(sorted[rank - 1]);
    return s;
}

LatencyStats latency_stats(std::span<const feedback::InteractionRecord> records) {
    std::vector<long long> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(r.latency_ms);
    return latency_stats(values);
}

json to_json(const LikertReport& r) {
    json counts = json::object();
    json percents = json::object();
    for (std::size_t i = 0; i < 5; ++i) {
        counts[std::to_string(i + 1)] = r.counts[i];
        percents[std::to_string(i + 1)] = r.percents[i];
    }
    return json{{"label", r.label},
                {"counts", counts},
                {"total", r.total},
                {"percents", percents},
                {"low_share_percent", r.low_share_percent},
                {"mid_share_percent", r.mid_share_percent},
                {"top_share_percent", r.top_share_percent}};
}

LikertReport report_from_json(const json& j) {
    try {
        RatingCounts counts{};
        for (std::size_t i = 0; i < 5; ++i) counts[i] = j.at("counts").at(std::to_string(i + 1)).get<long long>();
        // Everything else is derived again so that a hand-edited report cannot drift.
        return likert_from_counts(j.at("label").get<std::string>(), counts);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::validation, std::string("malformed report: ") + e.what());
    }
}

json to_json(const RoundComparison& c) {
    auto share = [](const ShareChange& s) { return json{{"from", s.from}, {"to", s.to}, {"delta", s.delta()}}; };
    json deltas = json::object();
    for (std::size_t i = 0; i < 5; ++i) deltas[std::to_string(i + 1)] = c.percent_deltas[i];
    return json{{"a", c.label_a},
                {"b", c.label_b},
                {"low_share", share(c.low_share)},
                {"mid_share", share(c.mid_share)},
                {"top_share", share(c.top_share)},
                {"percent_deltas", deltas}};
}

json to_json(const LatencyStats& s) {
    return json{{"n", s.n}, {"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}};
}

namespace {

std::string pad(const std::string& s, std::size_t width, bool right = true) {
    if (s.size() >= width) return s;
    return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

std::string pct(int p) { return std::to_string(p) + "%"; }

}  // namespace

std::string render_table(const LikertReport& r) {
    const std::size_t w = std::max<std::size_t>(10, r.label.size());
    std::ostringstream out;
    out << pad("", 6) << " | " << pad(r.label, w + 7, false) << "\n";
    out << pad("Rating", 6) << " | " << pad("Responses", w) << " | " << pad("%", 4) << "\n";
    out << std::string(6 + 3 + w + 3 + 4, '-') << "\n";
    for (std::size_t i = 0; i < 5; ++i) {
        out << pad(std::to_string(i + 1), 6) << " | " << pad(std::to_string(r.counts[i]), w) << " | "
            << pad(pct(r.percents[i]), 4) << "\n";
    }
    out << std::string(6 + 3 + w + 3 + 4, '-') << "\n";
    out << pad("Total", 6) << " | " << pad(std::to_string(r.total), w) << " |\n";
    out << "low (1-2): " << pct(r.low_share_percent) << "  mid (3): " << pct(r.mid_share_percent)
        << "  top (5): " << pct(r.top_share_percent) << "\n";
    return out.str();
}

std::string render_table(const LikertReport& a, const LikertReport& b) {
    const std::size_t wa = std::max<std::size_t>(9, a.label.size());
    const std::size_t wb = std::max<std::size_t>(9, b.label.size());
    std::ostringstream out;
    out << pad("", 6) << " | " << pad(a.label, wa + 7, false) << " | " << pad(b.label, wb + 7, false) << "\n";
    out << pad("Rating", 6) << " | " << pad("Responses", wa) << " | " << pad("%", 4) << " | "
        << pad("Responses", wb) << " | " << pad("%", 4) << "\n";
    const std::string rule(6 + 3 + wa + 3 + 4 + 3 + wb + 3 + 4, '-');
    out << rule << "\n";
    for (std::size_t i = 0; i < 5; ++i) {
        out << pad(std::to_string(i + 1), 6) << " | " << pad(std::to_string(a.counts[i]), wa) << " | "
            << pad(pct(a.percents[i]), 4) << " | " << pad(std::to_string(b.counts[i]), wb) << " | "
            << pad(pct(b.percents[i]), 4) << "\n";
    }
    out << rule << "\n";
    out << pad("Total", 6) << " | " << pad(std::to_string(a.total), wa) << " | " << pad("", 4) << " | "
        << pad(std::to_string(b.total), wb) << " |\n";
    return out.str();
}

std::string render_comparison(const RoundComparison& c) {
    std::ostringstream out;
    auto line = [&](const char* name, const ShareChange& s) {
        out << pad(name, 10, false) << pct(s.from) << " -> " << pct(s.to) << " (" << (s.delta() >= 0 ? "+" : "")
            << s.delta() << ")\n";
    };
    out << c.label_a << " -> " << c.label_b << "\n";
    line("low 1-2", c.low_share);
    line("mid 3", c.mid_share);
    line("top 5", c.top_share);
    out << "per rating:";
    for (std::size_t i = 0; i < 5; ++i) {
        out << " " << (i + 1) << ":" << (c.percent_deltas[i] >= 0 ? "+" : "") << c.percent_deltas[i];
    }
    out << "\n";
    return out.str();
}

namespace {

bool is_sqlite_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
    char header[16] = {};
    in.read(header, sizeof header);
    return in.gcount() == 16 && std::string_view(header, 16) == std::string_view("SQLite format 3\0", 16);
}

bool accept(const RatedSample& s, const SampleFilter& f) {
    if (f.model_id && s.model_id != *f.model_id) return false;
    if (f.since && s.created_at < *f.since) return false;
    if (f.until && s.created_at > *f.until) return false;
    return true;
}

}  // namespace

std::vector<RatedSample> load_rated_samples(const std::filesystem::path& path, const SampleFilter& filter) {
    std::vector<RatedSample> out;
    if (is_sqlite_file(path)) {
        auto store = feedback::FeedbackStore::open(path);
        for (const auto& item : store->all_history()) {
            if (!item.feedback) continue;
            RatedSample s{item.feedback->rating, item.interaction.model_id, item.interaction.created_at,
                          item.interaction.latency_ms};
            if (accept(s, filter)) out.push_back(std::move(s));
        }
        return out;
    }
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorKind::validation, path.string() + " line " + std::to_string(line_no) + ": not a JSON object");
        }
        if (!j.contains("rating") || j["rating"].is_null()) continue;
        if (!j["rating"].is_number_integer()) {
            throw Error(ErrorKind::validation, path.string() + " line " + std::to_string(line_no) + ": rating is not an integer");
        }
        RatedSample s;
        s.rating = j["rating"].get<int>();
        if (j.contains("model_id") && j["model_id"].is_string()) s.model_id = j["model_id"].get<std::string>();
        if (j.contains("created_at") && j["created_at"].is_string()) s.created_at = j["created_at"].get<std::string>();
        if (j.contains("latency_ms") && j["latency_ms"].is_number_integer()) s.latency_ms = j["latency_ms"].get<long long>();
        if (accept(s, filter)) out.push_back(std::move(s));
    }
    return out;
}

}  // namespace groundrag::eval
