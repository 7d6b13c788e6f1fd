#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "actseq/metrics.hpp"
#include "testutil.hpp"

using namespace actseq;
using namespace actseq::metrics;

namespace {

// Independent top-down recursive edit distance (memoized), used as the
// oracle for the bottom-up table implementation.
long lev_oracle_rec(const std::vector<int>& g, const std::vector<int>& p, std::size_t i,
                    std::size_t j, std::map<std::pair<std::size_t, std::size_t>, long>& memo) {
    if (i == 0) return static_cast<long>(j);
    if (j == 0) return static_cast<long>(i);
    const auto key = std::make_pair(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const long sub = lev_oracle_rec(g, p, i - 1, j - 1, memo) + (g[i - 1] == p[j - 1] ? 0 : 1);
    const long del = lev_oracle_rec(g, p, i - 1, j, memo) + 1;
    const long ins = lev_oracle_rec(g, p, i, j - 1, memo) + 1;
    it = memo.emplace(key, std::min({sub, del, ins})).first;
    return it->second;
}

long lev_oracle(const ActionSequence& g, const ActionSequence& p) {
    std::map<std::pair<std::size_t, std::size_t>, long> memo;
    return lev_oracle_rec(g.items(), p.items(), g.size(), p.size(), memo);
}

struct CountTuple {
    long correct, substituted, missed, spurious;
    auto operator<=>(const CountTuple&) const = default;
};

// Enumerates every monotone alignment of g and p and returns the count
// tuples of all minimum-cost alignments.
void enumerate_alignments(const std::vector<int>& g, const std::vector<int>& p, std::size_t i,
                          std::size_t j, CountTuple acc, long cost, long& best,
                          std::map<long, std::set<CountTuple>>& by_cost) {
    if (i == g.size() && j == p.size()) {
        best = std::min(best, cost);
        by_cost[cost].insert(acc);
        return;
    }
    if (i < g.size() && j < p.size()) {
        CountTuple paired = acc;
        long c = cost;
        if (g[i] == p[j])
            ++paired.correct;
        else {
            ++paired.substituted;
            ++c;
        }
        enumerate_alignments(g, p, i + 1, j + 1, paired, c, best, by_cost);
    }
    if (i < g.size()) {
        CountTuple skipped = acc;
        ++skipped.missed;
        enumerate_alignments(g, p, i + 1, j, skipped, cost + 1, best, by_cost);
    }
    if (j < p.size()) {
        CountTuple extra = acc;
        ++extra.spurious;
        enumerate_alignments(g, p, i, j + 1, extra, cost + 1, best, by_cost);
    }
}

std::set<CountTuple> optimal_alignment_counts(const ActionSequence& g, const ActionSequence& p) {
    long best = static_cast<long>(g.size() + p.size()) + 1;
    std::map<long, std::set<CountTuple>> by_cost;
    enumerate_alignments(g.items(), p.items(), 0, 0, {0, 0, 0, 0}, 0, best, by_cost);
    return by_cost.at(best);
}

const ActionSequence kG({0, 1, 2});      // reach, idle, stabilize
const ActionSequence kP({0, 3});         // reach, transport
const ActionSequence kP1({0, 1});        // reach, idle
const ActionSequence kP2({0, 1, 2, 3});  // reach, idle, stabilize, transport

}  // namespace

TEST_CASE("levenshtein matches the worked example and basic cases", "[metrics]") {
    CHECK(levenshtein(kG, kP) == 2);
    CHECK(levenshtein(ActionSequence({0, 1, 2}), ActionSequence({0, 1, 2})) == 0);
    CHECK(levenshtein(ActionSequence(), ActionSequence({0, 1})) == 2);
}

TEST_CASE("levenshtein agrees with the recursive oracle", "[metrics]") {
    Rng rng(7);
    for (int trial = 0; trial < 2000; ++trial) {
        const ActionSequence g = testutil::random_sequence(rng, 8, 3);
        const ActionSequence p = testutil::random_sequence(rng, 8, 3);
        const long reference = lev_oracle(g, p);
        CHECK(levenshtein(g, p) == reference);
        CHECK(levenshtein(p, g) == reference);  // symmetry
        CHECK((reference == 0) == (g == p));
        CHECK(reference <= static_cast<long>(std::max(g.size(), p.size())));
    }
    // triangle inequality on random triples
    for (int trial = 0; trial < 500; ++trial) {
        const ActionSequence a = testutil::random_sequence(rng, 6, 3);
        const ActionSequence b = testutil::random_sequence(rng, 6, 3);
        const ActionSequence c = testutil::random_sequence(rng, 6, 3);
        CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
    }
}

TEST_CASE("edit score uses the 0-100 scale of the metric equation", "[metrics]") {
    CHECK(edit_score(kG, kP1) == Catch::Approx(200.0 / 3.0).margin(1e-9));
    CHECK(edit_score(kG, kP2) == Catch::Approx(75.0).margin(1e-9));
    CHECK(edit_score(kG, kG) == 100.0);
    CHECK(edit_score(ActionSequence(), ActionSequence()) == 100.0);
    CHECK(edit_score(ActionSequence(), ActionSequence({0})) == 0.0);
}

TEST_CASE("action error rate penalizes longer and shorter predictions equally", "[metrics]") {
    CHECK(aer(kG, kP1) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(aer(kG, kP2) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(aer(kG, kG) == 0.0);
    CHECK_THROWS_AS(aer(ActionSequence(), kP1), UndefinedMetricError);
}

TEST_CASE("edit score is symmetric, aer is not", "[metrics]") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const ActionSequence g = testutil::random_sequence(rng, 8, 3);
        const ActionSequence p = testutil::random_sequence(rng, 8, 3);
        CHECK(edit_score(g, p) == Catch::Approx(edit_score(p, g)).margin(1e-12));
        if (!g.empty()) {
            // algebraic identity linking the two metrics
            const double expected =
                (1.0 - edit_score(g, p) / 100.0) *
                static_cast<double>(std::max(g.size(), p.size())) / static_cast<double>(g.size());
            CHECK(aer(g, p) == Catch::Approx(expected).margin(1e-9));
        }
    }
    const ActionSequence a({0});
    const ActionSequence ab({0, 1});
    CHECK(aer(a, ab) == 1.0);
    CHECK(aer(ab, a) == 0.5);  // asymmetry witness
}

TEST_CASE("align reproduces the enumeration oracle on the worked example", "[metrics]") {
    const AlignmentCounts counts = align(kG, kP);
    CHECK(counts.correct == 1);
    CHECK(counts.substituted == 1);
    CHECK(counts.missed == 1);
    CHECK(counts.spurious == 0);
    const auto optimal = optimal_alignment_counts(kG, kP);
    CHECK(optimal.count({counts.correct, counts.substituted, counts.missed, counts.spurious}) == 1);
}

TEST_CASE("align satisfies the counting invariants on random pairs", "[metrics]") {
    Rng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        const ActionSequence g = testutil::random_sequence(rng, 10, 4);
        const ActionSequence p = testutil::random_sequence(rng, 10, 4);
        const AlignmentCounts c = align(g, p);
        CHECK(c.gt_length() == static_cast<long>(g.size()));
        CHECK(c.pred_length() == static_cast<long>(p.size()));
        CHECK(c.edit_cost() == levenshtein(g, p));
    }
    // identity and fully spurious cases
    const AlignmentCounts same = align(kG, kG);
    CHECK(same.correct == 3);
    CHECK(same.substituted + same.missed + same.spurious == 0);
    const AlignmentCounts extra = align(ActionSequence(), ActionSequence({0}));
    CHECK(extra.spurious == 1);
    CHECK(extra.correct + extra.substituted + extra.missed == 0);
}

TEST_CASE("align counts sit among the optimal alignments", "[metrics]") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const ActionSequence g = testutil::random_sequence(rng, 5, 3);
        const ActionSequence p = testutil::random_sequence(rng, 5, 3);
        const AlignmentCounts c = align(g, p);
        const auto optimal = optimal_alignment_counts(g, p);
        CHECK(optimal.count({c.correct, c.substituted, c.missed, c.spurious}) == 1);
    }
}

TEST_CASE("tpr, fdr and f1 follow the alignment counts", "[metrics]") {
    const auto [tpr, fdr, f1] = tpr_fdr_f1(align(kG, kP));
    CHECK(tpr == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(fdr == Catch::Approx(0.5).margin(1e-12));
    CHECK(f1 == Catch::Approx(0.4).margin(1e-12));

    const auto [ptpr, pfdr, pf1] = tpr_fdr_f1(align(kG, kG));
    CHECK(ptpr == 1.0);
    CHECK(pfdr == 0.0);
    CHECK(pf1 == 1.0);

    // all-spurious prediction: correct = 0 forces f1 = 0
    const auto [stpr, sfdr, sf1] = tpr_fdr_f1(align(ActionSequence({0}), ActionSequence({1, 2})));
    CHECK(stpr == 0.0);
    CHECK(sfdr == 1.0);
    CHECK(sf1 == 0.0);

    CHECK_THROWS_AS(tpr_fdr_f1(align(ActionSequence(), ActionSequence({0}))), UndefinedMetricError);
    CHECK_THROWS_AS(tpr_fdr_f1(align(ActionSequence({0}), ActionSequence())), UndefinedMetricError);
}

TEST_CASE("framewise accuracy counts matching frames", "[metrics]") {
    const FrameLabeling a({0, 0, 1, 1}, 10.0);
    CHECK(framewise_accuracy(a, a) == 1.0);
    CHECK(framewise_accuracy(a, FrameLabeling({1, 1, 0, 0}, 10.0)) == 0.0);
    CHECK(framewise_accuracy(a, FrameLabeling({0, 0, 1, 2}, 10.0)) == 0.75);
    CHECK_THROWS_AS(framewise_accuracy(a, FrameLabeling({0}, 10.0)), ShapeError);
}

TEST_CASE("class counts tally the sequence", "[metrics]") {
    CHECK(class_counts(ActionSequence({0, 1, 0}), 3) == std::vector<long>{2, 1, 0});
    CHECK(class_counts(ActionSequence(), 3) == std::vector<long>{0, 0, 0});
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const ActionSequence s = testutil::random_sequence(rng, 20, 4);
        const auto counts = class_counts(s, 4);
        long total = 0;
        for (long v : counts) total += v;
        CHECK(total == static_cast<long>(s.size()));
    }
}

TEST_CASE("bootstrap confidence intervals", "[metrics]") {
    const CiValue constant = bootstrap_ci({0.5, 0.5, 0.5}, 200, 1);
    CHECK(constant.mean == 0.5);
    CHECK(constant.lower == 0.5);
    CHECK(constant.upper == 0.5);

    const CiValue single = bootstrap_ci({0.7}, 50, 1);
    CHECK(single.mean == Catch::Approx(0.7).margin(1e-12));
    CHECK(single.lower == Catch::Approx(0.7).margin(1e-12));
    CHECK(single.upper == Catch::Approx(0.7).margin(1e-12));

    const CiValue coin = bootstrap_ci({0.0, 1.0}, 1000, 99);
    CHECK(std::abs(coin.mean - 0.5) < 0.05);
    CHECK(coin.lower <= coin.mean);
    CHECK(coin.mean <= coin.upper);

    // bit-identical under the same seed
    const CiValue again = bootstrap_ci({0.0, 1.0}, 1000, 99);
    CHECK(coin.mean == again.mean);
    CHECK(coin.lower == again.lower);
    CHECK(coin.upper == again.upper);

    CHECK_THROWS_AS(bootstrap_ci({}, 10, 0), UndefinedMetricError);
    CHECK_THROWS_AS(bootstrap_ci({0.5}, 0, 0), UndefinedMetricError);
}

TEST_CASE("boundary accuracy by duration buckets", "[metrics]") {
    // 10 fps; segments: cls0 [0,5) 0.5s, cls1 [5,30) 2.5s, cls2 [30,33) 0.3s
    std::vector<int> labels;
    labels.insert(labels.end(), 5, 0);
    labels.insert(labels.end(), 25, 1);
    labels.insert(labels.end(), 3, 2);
    const FrameLabeling gt(labels, 10.0);

    SECTION("exact predictions detect every boundary") {
        const auto report =
            boundary_accuracy_by_duration(gt, boundaries_of(gt), default_duration_edges(), 2);
        for (const auto& bucket : report)
            if (bucket.total > 0) CHECK(bucket.accuracy() == 1.0);
    }
    SECTION("no predictions miss every boundary") {
        const auto report = boundary_accuracy_by_duration(gt, {}, default_duration_edges(), 2);
        long populated = 0;
        for (const auto& bucket : report)
            if (bucket.total > 0) {
                CHECK(bucket.accuracy() == 0.0);
                populated += bucket.total;
            }
        CHECK(populated == 2);  // first segment excluded
    }
    SECTION("hand-checked jittered predictions") {
        // boundary of the 2.5s segment is frame 5, of the 0.3s segment frame 30
        // prediction at 7 is within +-2 of 5; prediction at 40 misses 30
        const auto report = boundary_accuracy_by_duration(gt, {7, 40}, default_duration_edges(), 2);
        // bucket [2,4) holds the 2.5s instance, bucket [0.25,0.5) the 0.3s one
        for (const auto& bucket : report) {
            if (bucket.lo_seconds == 2.0) {
                CHECK(bucket.total == 1);
                CHECK(bucket.detected == 1);
            }
            if (bucket.lo_seconds == 0.25) {
                CHECK(bucket.total == 1);
                CHECK(bucket.detected == 0);
            }
        }
    }
}

TEST_CASE("metric report stores ordered entries with optional intervals", "[metrics]") {
    MetricReport report;
    report.set("edit_score", 80.0, std::make_pair(75.0, 85.0));
    report.set("aer", 0.2);
    CHECK(report.value("edit_score") == 80.0);
    CHECK(report.find("aer")->ci == std::nullopt);
    CHECK(report.entries.size() == 2);
    report.set("aer", 0.3);  // overwrite keeps one entry
    CHECK(report.entries.size() == 2);
    CHECK(report.value("aer") == 0.3);
    CHECK_THROWS_AS(report.set("bad", 1.0, std::make_pair(2.0, 3.0)), NumericError);
    CHECK_THROWS_AS(report.value("missing"), FormatError);
}
