#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "actseq/core.hpp"
#include "actseq/errors.hpp"
#include "actseq/rng.hpp"

namespace actseq::metrics {

// Minimum number of insertions, deletions and substitutions turning p into g.
inline long levenshtein(const ActionSequence& g, const ActionSequence& p) {
    const std::size_t n = g.size(), m = p.size();
    std::vector<long> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<long>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<long>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const long sub = prev[j - 1] + (g[i - 1] == p[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// Edit score on the 0-100 scale; 100 when both sequences agree (including
// the doubly-empty case).
inline double edit_score(const ActionSequence& g, const ActionSequence& p) {
    const std::size_t denom = std::max(g.size(), p.size());
    if (denom == 0) return 100.0;
    return (1.0 - static_cast<double>(levenshtein(g, p)) / static_cast<double>(denom)) * 100.0;
}

// Action error rate: edit distance normalized by ground-truth length.
inline double aer(const ActionSequence& g, const ActionSequence& p) {
    if (g.empty()) throw UndefinedMetricError("aer: empty ground truth");
    return static_cast<double>(levenshtein(g, p)) / static_cast<double>(g.size());
}

struct AlignmentCounts {
    long correct = 0;
    long substituted = 0;
    long missed = 0;    // deletions from the ground truth
    long spurious = 0;  // insertions present only in the prediction

    long gt_length() const { return correct + substituted + missed; }
    long pred_length() const { return correct + substituted + spurious; }
    long edit_cost() const { return substituted + missed + spurious; }
};

enum class AlignOp { match, substitute, miss, spurious };

struct AlignStep {
    AlignOp op;
    int gt_class = -1;    // -1 when the step has no ground-truth item
    int pred_class = -1;  // -1 when the step has no predicted item
};

// One cost-minimizing edit alignment of g and p. Ties in the backtrace are
// broken deterministically: match/substitute first, then miss, then spurious.
inline std::vector<AlignStep> align_trace(const ActionSequence& g, const ActionSequence& p) {
    const std::size_t n = g.size(), m = p.size();
    std::vector<std::vector<long>> dp(n + 1, std::vector<long>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<long>(i);
    for (std::size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<long>(j);
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            dp[i][j] = std::min({dp[i - 1][j - 1] + (g[i - 1] == p[j - 1] ? 0 : 1),
                                 dp[i - 1][j] + 1, dp[i][j - 1] + 1});

    std::vector<AlignStep> steps;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + (g[i - 1] == p[j - 1] ? 0 : 1)) {
            steps.push_back({g[i - 1] == p[j - 1] ? AlignOp::match : AlignOp::substitute,
                             g[i - 1], p[j - 1]});
            --i, --j;
        } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
            steps.push_back({AlignOp::miss, g[i - 1], -1});
            --i;
        } else {
            steps.push_back({AlignOp::spurious, -1, p[j - 1]});
            --j;
        }
    }
    std::reverse(steps.begin(), steps.end());
    return steps;
}

inline AlignmentCounts align(const ActionSequence& g, const ActionSequence& p) {
    AlignmentCounts counts;
    for (const auto& step : align_trace(g, p)) {
        switch (step.op) {
            case AlignOp::match: ++counts.correct; break;
            case AlignOp::substitute: ++counts.substituted; break;
            case AlignOp::miss: ++counts.missed; break;
            case AlignOp::spurious: ++counts.spurious; break;
        }
    }
    return counts;
}

// TPR, FDR, and their harmonic combination F1 = 2(1-FDR)TPR / (1-FDR+TPR).
inline std::tuple<double, double, double> tpr_fdr_f1(const AlignmentCounts& a) {
    const long gt_len = a.gt_length(), pred_len = a.pred_length();
    if (gt_len == 0) throw UndefinedMetricError("tpr: empty ground truth");
    if (pred_len == 0) throw UndefinedMetricError("fdr: empty prediction");
    const double tpr = static_cast<double>(a.correct) / static_cast<double>(gt_len);
    const double fdr =
        static_cast<double>(a.substituted + a.spurious) / static_cast<double>(pred_len);
    const double denom = (1.0 - fdr) + tpr;
    const double f1 = denom == 0.0 ? 0.0 : 2.0 * (1.0 - fdr) * tpr / denom;
    return {tpr, fdr, f1};
}

inline double framewise_accuracy(const FrameLabeling& gt, const FrameLabeling& pred) {
    if (gt.size() != pred.size()) throw ShapeError("framewise accuracy: length mismatch");
    if (gt.size() == 0) throw UndefinedMetricError("framewise accuracy: empty labeling");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (gt.labels[i] == pred.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(gt.size());
}

inline std::vector<long> class_counts(const ActionSequence& s, int num_classes) {
    std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
    for (int cls : s) {
        if (cls >= num_classes) throw FormatError("class counts: index beyond vocabulary");
        ++counts[static_cast<std::size_t>(cls)];
    }
    return counts;
}

struct CiValue {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

// Bootstrap confidence interval: resample the per-sample values with
// replacement `replicates` times, then report the mean over replicate means
// with limits mean +- 1.96 sigma / sqrt(replicates).
inline CiValue bootstrap_ci(const std::vector<double>& values, int replicates, std::uint64_t seed) {
    if (values.empty()) throw UndefinedMetricError("bootstrap: no samples");
    if (replicates < 1) throw UndefinedMetricError("bootstrap: needs at least one replicate");
    Rng rng(seed);
    std::vector<double> means(static_cast<std::size_t>(replicates));
    for (auto& rep : means) {
        double total = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k)
            total += values[rng.uniform_int(values.size())];
        rep = total / static_cast<double>(values.size());
    }
    double mu = 0.0;
    for (double m : means) mu += m;
    mu /= static_cast<double>(replicates);
    double var = 0.0;
    for (double m : means) var += (m - mu) * (m - mu);
    var /= static_cast<double>(replicates);
    const double half = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(replicates));
    return {mu, mu - half, mu + half};
}

// Boundary-detection accuracy as a function of action duration.
struct DurationBucket {
    double lo_seconds = 0.0;
    double hi_seconds = 0.0;  // infinity for the open-ended last bucket
    long total = 0;
    long detected = 0;

    double accuracy() const {
        if (total == 0) throw UndefinedMetricError("duration bucket: empty");
        return static_cast<double>(detected) / static_cast<double>(total);
    }
};

using DurationBucketReport = std::vector<DurationBucket>;

inline const std::vector<double>& default_duration_edges() {
    static const std::vector<double> edges{0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    return edges;
}

inline DurationBucketReport make_duration_buckets(const std::vector<double>& edges) {
    DurationBucketReport buckets;
    double lo = 0.0;
    for (double e : edges) {
        if (e <= lo) throw ConfigError("duration buckets: edges must ascend");
        buckets.push_back({lo, e, 0, 0});
        lo = e;
    }
    buckets.push_back({lo, std::numeric_limits<double>::infinity(), 0, 0});
    return buckets;
}

// Assigns every ground-truth action instance (after the first, which has no
// starting boundary) to its duration bucket and counts the instance as
// detected when some predicted boundary lies within +-tolerance frames of
// the instance's starting frame. A predicted boundary may serve several
// instances.
inline void accumulate_boundary_detection(const FrameLabeling& gt,
                                          const std::vector<int>& predicted_boundaries,
                                          int tolerance_frames, DurationBucketReport& buckets) {
    if (tolerance_frames < 0) throw ConfigError("boundary accuracy: negative tolerance");
    const SegmentList segments = segments_from_frames(gt);
    for (std::size_t k = 1; k < segments.size(); ++k) {
        const auto& seg = segments[k];
        const double duration_s = static_cast<double>(seg.end - seg.begin) / gt.frame_rate;
        auto bucket = std::find_if(buckets.begin(), buckets.end(), [&](const DurationBucket& b) {
            return duration_s >= b.lo_seconds && duration_s < b.hi_seconds;
        });
        if (bucket == buckets.end()) continue;
        ++bucket->total;
        for (int b : predicted_boundaries) {
            if (std::abs(b - seg.begin) <= tolerance_frames) {
                ++bucket->detected;
                break;
            }
        }
    }
}

inline DurationBucketReport boundary_accuracy_by_duration(
    const FrameLabeling& gt, const std::vector<int>& predicted_boundaries,
    const std::vector<double>& edges, int tolerance_frames) {
    DurationBucketReport buckets = make_duration_buckets(edges);
    accumulate_boundary_detection(gt, predicted_boundaries, tolerance_frames, buckets);
    return buckets;
}

// Named metric values in a fixed report order, optionally with bootstrap
// confidence limits. Serialization lives with the other file formats.
struct MetricReport {
    struct Entry {
        std::string name;
        double value = 0.0;
        std::optional<std::pair<double, double>> ci;
    };

    std::vector<Entry> entries;

    void set(const std::string& name, double value,
             std::optional<std::pair<double, double>> ci = std::nullopt) {
        if (ci && !(ci->first <= value && value <= ci->second))
            throw NumericError("metric report: confidence limits do not bracket the value");
        for (auto& e : entries) {
            if (e.name == name) {
                e.value = value;
                e.ci = ci;
                return;
            }
        }
        entries.push_back({name, value, ci});
    }

    void set(const std::string& name, const CiValue& v) {
        set(name, v.mean, std::make_pair(v.lower, v.upper));
    }

    const Entry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }

    double value(const std::string& name) const {
        const Entry* e = find(name);
        if (!e) throw FormatError("metric report: no entry named '" + name + "'");
        return e->value;
    }
};

}  // namespace actseq::metrics
