#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "groundrag/errors.hpp"
#include "groundrag/eval.hpp"
#include "test_support.hpp"

using namespace groundrag;
using namespace groundrag::eval;

namespace {

const RatingCounts kApril{15, 16, 17, 17, 2};
const RatingCounts kAugust{9, 9, 15, 4, 10};

std::vector<int> expand(const RatingCounts& counts) {
    std::vector<int> out;
    for (int r = 1; r <= 5; ++r) out.insert(out.end(), counts[r - 1], r);
    return out;
}

// Independent percent oracle: exact rational rounding, halves upward (all inputs non-negative).
int oracle_percent(long long part, long long total) { return static_cast<int>((200 * part + total) / (2 * total)); }

struct LatencyOracle {
    double mean, median, p95;
};

LatencyOracle latency_oracle(std::vector<long long> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    long double sum = 0;
    for (auto x : v) sum += x;
    const double median = n % 2 ? double(v[n / 2]) : (double(v[n / 2 - 1]) + double(v[n / 2])) / 2.0;
    std::size_t rank = (95 * n + 99) / 100;  // ceil(0.95 n)
    if (rank == 0) rank = 1;
    return {double(sum / n), median, double(v[rank - 1])};
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::io;
}

}  // namespace

TEST(Likert, AprilColumn) {
    const auto r = likert_from_counts("April 2025", kApril);
    EXPECT_EQ(r.total, 67);
    EXPECT_EQ(r.percents, (RatingPercents{22, 24, 25, 25, 3}));
    EXPECT_EQ(std::accumulate(r.percents.begin(), r.percents.end(), 0), 99);
    EXPECT_EQ(r.low_share_percent, 46);
    EXPECT_EQ(r.mid_share_percent, 25);
    EXPECT_EQ(r.top_share_percent, 3);
}

TEST(Likert, AugustColumn) {
    const auto r = likert_from_counts("August 2025", kAugust);
    EXPECT_EQ(r.total, 47);
    EXPECT_EQ(r.percents, (RatingPercents{19, 19, 32, 9, 21}));
    EXPECT_EQ(std::accumulate(r.percents.begin(), r.percents.end(), 0), 100);
    EXPECT_EQ(r.low_share_percent, 38);
}

TEST(Likert, RawRatingsMatchCounts) {
    const auto ratings = expand(kApril);
    EXPECT_EQ(likert_report("April 2025", ratings), likert_from_counts("April 2025", kApril));
}

TEST(Likert, AllThrees) {
    const std::vector<int> ratings(47, 3);
    const auto r = likert_report("flat", ratings);
    EXPECT_EQ(r.percents, (RatingPercents{0, 0, 100, 0, 0}));
    EXPECT_EQ(r.mid_share_percent, 100);
    EXPECT_EQ(r.low_share_percent, 0);
}

TEST(Likert, RoundingIsHalfAwayFromZero) {
    EXPECT_EQ(rounded_percent(1, 8), 13);   // 12.5
    EXPECT_EQ(rounded_percent(1, 200), 1);  // 0.5
    EXPECT_EQ(rounded_percent(1, 3), 33);
    EXPECT_EQ(rounded_percent(2, 3), 67);
    EXPECT_EQ(rounded_percent(0, 5), 0);
    EXPECT_EQ(rounded_percent(5, 5), 100);
}

TEST(Likert, Errors) {
    EXPECT_EQ(kind_of([] { likert_report("x", std::vector<int>{}); }), ErrorKind::empty_evaluation);
    EXPECT_EQ(kind_of([] { likert_report("x", std::vector<int>{3, 0}); }), ErrorKind::validation);
    EXPECT_EQ(kind_of([] { likert_report("x", std::vector<int>{6}); }), ErrorKind::validation);
    EXPECT_EQ(kind_of([] { likert_from_counts("x", RatingCounts{}); }), ErrorKind::empty_evaluation);
    EXPECT_EQ(kind_of([] { likert_from_counts("x", RatingCounts{1, -1, 0, 0, 0}); }), ErrorKind::validation);
}

TEST(Likert, PropertiesOnRandomDistributions) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> rating(1, 5);
    std::uniform_int_distribution<int> size(1, 400);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<int> ratings(size(rng));
        for (auto& r : ratings) r = rating(rng);
        const auto rep = likert_report("r", ratings);
        RatingCounts counts{};
        for (int r : ratings) ++counts[r - 1];
        EXPECT_EQ(rep.counts, counts);
        long long total = 0;
        for (auto c : counts) total += c;
        ASSERT_EQ(rep.total, total);
        int sum = 0;
        for (int i = 0; i < 5; ++i) {
            EXPECT_EQ(rep.percents[i], oracle_percent(counts[i], total));
            EXPECT_GE(rep.percents[i], 0);
            EXPECT_LE(rep.percents[i], 100);
            sum += rep.percents[i];
        }
        EXPECT_GE(sum, 98);
        EXPECT_LE(sum, 102);
        EXPECT_EQ(rep.low_share_percent, oracle_percent(counts[0] + counts[1], total));
        EXPECT_EQ(rep.mid_share_percent, oracle_percent(counts[2], total));
        EXPECT_EQ(rep.top_share_percent, oracle_percent(counts[4], total));

        auto shuffled = ratings;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        EXPECT_EQ(likert_report("r", shuffled), rep);
    }
}

TEST(Compare, AprilToAugust) {
    const auto cmp = compare_rounds(likert_from_counts("April 2025", kApril), likert_from_counts("August 2025", kAugust));
    EXPECT_EQ(cmp.low_share, (ShareChange{46, 38}));
    EXPECT_EQ(cmp.top_share, (ShareChange{3, 21}));
    EXPECT_EQ(cmp.mid_share, (ShareChange{25, 32}));
    EXPECT_EQ(cmp.low_share.delta(), -8);
    EXPECT_EQ(cmp.percent_deltas, (std::array<int, 5>{-3, -5, 7, -16, 18}));
    EXPECT_EQ(cmp.label_a, "April 2025");
    const auto text = render_comparison(cmp);
    EXPECT_NE(text.find("46% -> 38%"), std::string::npos);
    EXPECT_NE(text.find("3% -> 21%"), std::string::npos);
}

TEST(Compare, SelfIsZero) {
    const auto a = likert_from_counts("a", kAugust);
    const auto cmp = compare_rounds(a, a);
    EXPECT_EQ(cmp.low_share.delta(), 0);
    EXPECT_EQ(cmp.mid_share.delta(), 0);
    EXPECT_EQ(cmp.top_share.delta(), 0);
    EXPECT_EQ(cmp.percent_deltas, (std::array<int, 5>{}));
}

TEST(Report, JsonRoundTrip) {
    const auto a = likert_from_counts("April 2025", kApril);
    const auto j = to_json(a);
    EXPECT_EQ(j["percents"]["1"], 22);
    EXPECT_EQ(j["low_share_percent"], 46);
    EXPECT_EQ(report_from_json(j), a);
    EXPECT_EQ(kind_of([] { report_from_json(nlohmann::json{{"label", 3}}); }), ErrorKind::validation);
}

TEST(Report, TableListsEveryRow) {
    const auto table = render_table(likert_from_counts("April 2025", kApril));
    EXPECT_NE(table.find("April 2025"), std::string::npos);
    for (const char* cell : {"22%", "24%", "25%", "3%", "67"}) EXPECT_NE(table.find(cell), std::string::npos) << cell;
    const auto both = render_table(likert_from_counts("April 2025", kApril), likert_from_counts("August 2025", kAugust));
    for (const char* cell : {"August 2025", "19%", "32%", "9%", "21%", "47"}) EXPECT_NE(both.find(cell), std::string::npos);
}

TEST(Latency, SingletonAndPair) {
    const std::vector<long long> one{100};
    auto s = latency_stats(one);
    EXPECT_EQ(s.n, 1u);
    EXPECT_DOUBLE_EQ(s.mean_ms, 100);
    EXPECT_DOUBLE_EQ(s.median_ms, 100);
    EXPECT_DOUBLE_EQ(s.p95_ms, 100);
    const std::vector<long long> two{300, 100};
    s = latency_stats(two);
    EXPECT_DOUBLE_EQ(s.mean_ms, 200);
    EXPECT_DOUBLE_EQ(s.median_ms, 200);
    EXPECT_DOUBLE_EQ(s.p95_ms, 300);
}

TEST(Latency, MatchesSortOracle) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<long long> ms(0, 60000);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<long long> v(trial == 0 ? 100 : 1 + trial * 3);
        for (auto& x : v) x = ms(rng);
        const auto expected = latency_oracle(v);
        const auto got = latency_stats(v);
        EXPECT_EQ(got.n, v.size());
        EXPECT_NEAR(got.mean_ms, expected.mean, 1e-9 * std::max(1.0, expected.mean));
        EXPECT_DOUBLE_EQ(got.median_ms, expected.median);
        EXPECT_DOUBLE_EQ(got.p95_ms, expected.p95);
        std::shuffle(v.begin(), v.end(), rng);
        const auto again = latency_stats(v);
        EXPECT_DOUBLE_EQ(again.median_ms, got.median_ms);
        EXPECT_DOUBLE_EQ(again.p95_ms, got.p95_ms);
    }
}

TEST(Latency, FromRecordsAndEmpty) {
    std::vector<feedback::InteractionRecord> recs(3);
    recs[0].latency_ms = 10;
    recs[1].latency_ms = 30;
    recs[2].latency_ms = 20;
    const auto s = latency_stats(std::span<const feedback::InteractionRecord>(recs));
    EXPECT_DOUBLE_EQ(s.median_ms, 20);
    EXPECT_DOUBLE_EQ(s.p95_ms, 30);
    EXPECT_EQ(kind_of([] { latency_stats(std::vector<long long>{}); }), ErrorKind::empty_evaluation);
}

TEST(Samples, FixturesSkipUnrated) {
    const auto dir = groundrag::testing::fixtures_dir() / "ratings";
    const auto april = load_rated_samples(dir / "april.jsonl");
    ASSERT_EQ(april.size(), 67u);
    std::vector<int> ratings;
    for (const auto& s : april) ratings.push_back(s.rating);
    EXPECT_EQ(likert_report("April 2025", ratings).counts, kApril);
    EXPECT_EQ(load_rated_samples(dir / "august.jsonl").size(), 47u);
}

TEST(Samples, Filters) {
    const auto dir = groundrag::testing::fixtures_dir() / "ratings";
    groundrag::testing::TempDir tmp;
    const auto mixed = tmp / "mixed.jsonl";
    groundrag::testing::write_file(mixed, groundrag::testing::read_file(dir / "april.jsonl") +
                                              groundrag::testing::read_file(dir / "august.jsonl"));
    EXPECT_EQ(load_rated_samples(mixed).size(), 114u);
    SampleFilter by_model;
    by_model.model_id = "gpt-lab-current";
    EXPECT_EQ(load_rated_samples(mixed, by_model).size(), 47u);
    SampleFilter by_date;
    by_date.since = "2025-08-01T00:00:00.000Z";
    EXPECT_EQ(load_rated_samples(mixed, by_date).size(), 47u);
    by_date.since.reset();
    by_date.until = "2025-07-31T23:59:59.999Z";
    EXPECT_EQ(load_rated_samples(mixed, by_date).size(), 67u);
    EXPECT_EQ(kind_of([] { load_rated_samples("/nonexistent/ratings.jsonl"); }), ErrorKind::io);
}
