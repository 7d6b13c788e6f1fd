#include <catch2/catch_amalgamated.hpp>

#include "actseq/datagen.hpp"
#include "testutil.hpp"

using namespace actseq;
using namespace actseq::datagen;

namespace {
GeneratorConfig tiny_config() {
    GeneratorConfig cfg;
    cfg.num_classes = 3;
    cfg.feature_dim = 4;
    cfg.frame_rate = 10.0;
    cfg.transition = uniform_offdiagonal_transitions(3);
    cfg.mean_duration_s = {0.5, 0.8, 1.2};
    cfg.dispersion = {4.0, 4.0, 4.0};
    cfg.emission_mean = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}};
    cfg.noise_sigma = 0.2;
    cfg.crossfade_frames = 2;
    cfg.min_length = 60;
    cfg.max_length = 90;
    cfg.seed = 5;
    return cfg;
}
}  // namespace

TEST_CASE("noiseless generation emits exact class means", "[datagen]") {
    GeneratorConfig cfg = tiny_config();
    cfg.noise_sigma = 0.0;
    cfg.crossfade_frames = 0;
    const auto samples = generate(cfg, 3);
    for (const auto& s : samples) {
        for (std::size_t t = 0; t < s.features.rows(); ++t) {
            const auto& mu = cfg.emission_mean[static_cast<std::size_t>(s.frame_labels.labels[t])];
            for (std::size_t d = 0; d < s.features.dim(); ++d)
                CHECK(s.features.at(t, d) == mu[d]);
        }
    }
}

TEST_CASE("degenerate chain with fixed durations alternates exactly", "[datagen]") {
    GeneratorConfig cfg;
    cfg.num_classes = 2;
    cfg.feature_dim = 1;
    cfg.frame_rate = 1.0;
    cfg.transition = {{0.0, 1.0}, {1.0, 0.0}};
    cfg.mean_duration_s = {3.0, 3.0};  // exactly the 3-frame minimum
    cfg.dispersion = {1.0, 1.0};
    cfg.emission_mean = {{0.0}, {1.0}};
    cfg.noise_sigma = 0.0;
    cfg.crossfade_frames = 0;
    cfg.min_length = 24;
    cfg.max_length = 24;
    cfg.seed = 9;
    const auto samples = generate(cfg, 2);
    for (const auto& s : samples) {
        const SegmentList segs = segments_from_frames(s.frame_labels);
        for (std::size_t i = 0; i < segs.size(); ++i) {
            CHECK(segs[i].end - segs[i].begin == 3);
            if (i > 0) CHECK(segs[i].cls != segs[i - 1].cls);
        }
    }
}

TEST_CASE("empirical durations match the configured means", "[datagen]") {
    GeneratorConfig cfg = tiny_config();
    cfg.min_length = 400;
    cfg.max_length = 400;
    const auto samples = generate(cfg, 60);
    std::vector<double> total(3, 0.0);
    std::vector<long> count(3, 0);
    for (const auto& s : samples) {
        const SegmentList segs = segments_from_frames(s.frame_labels);
        // the truncated tail segment would bias the estimate
        for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
            total[static_cast<std::size_t>(segs[i].cls)] += segs[i].end - segs[i].begin;
            ++count[static_cast<std::size_t>(segs[i].cls)];
        }
    }
    long segments_seen = 0;
    for (int k = 0; k < 3; ++k) {
        REQUIRE(count[static_cast<std::size_t>(k)] > 100);
        segments_seen += count[static_cast<std::size_t>(k)];
        const double mean_frames = total[static_cast<std::size_t>(k)] / static_cast<double>(count[static_cast<std::size_t>(k)]);
        const double expected = cfg.mean_duration_s[static_cast<std::size_t>(k)] * cfg.frame_rate;
        CHECK(std::abs(mean_frames - expected) / expected < 0.10);
    }
    CHECK(segments_seen >= 1000);
}

TEST_CASE("generation is deterministic per seed and collapse-consistent", "[datagen]") {
    const GeneratorConfig cfg = tiny_config();
    const auto a = generate(cfg, 4);
    const auto b = generate(cfg, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].frame_labels.labels == b[i].frame_labels.labels);
        CHECK(a[i].features.data() == b[i].features.data());
        CHECK(a[i].sequence == collapse(a[i].frame_labels));
        CHECK(a[i].id() == b[i].id());
        CHECK(a[i].group() == b[i].group());
    }
    GeneratorConfig other = cfg;
    other.seed = cfg.seed + 1;
    const auto c = generate(other, 4);
    CHECK(a[0].features.data() != c[0].features.data());
}

TEST_CASE("invalid generator configs are rejected", "[datagen]") {
    GeneratorConfig cfg = tiny_config();
    cfg.transition[0][0] = 0.5;
    CHECK_THROWS_AS(generate(cfg, 1), ConfigError);
    cfg = tiny_config();
    cfg.transition[0][1] = 0.9;
    CHECK_THROWS_AS(generate(cfg, 1), ConfigError);
    cfg = tiny_config();
    cfg.mean_duration_s[1] = 0.0;
    CHECK_THROWS_AS(generate(cfg, 1), ConfigError);
    cfg = tiny_config();
    cfg.emission_mean.pop_back();
    CHECK_THROWS_AS(generate(cfg, 1), ConfigError);
}

TEST_CASE("per-sample normalization", "[datagen]") {
    SECTION("hand-computed three-frame channel") {
        const FeatureSequence x(3, 1, {1.0, 2.0, 3.0}, 10.0);
        const FeatureSequence n = normalize_per_sample(x);
        CHECK(n.at(0, 0) == Catch::Approx(-1.22474487).margin(1e-8));
        CHECK(n.at(1, 0) == Catch::Approx(0.0).margin(1e-12));
        CHECK(n.at(2, 0) == Catch::Approx(1.22474487).margin(1e-8));
    }
    SECTION("constant channels become zero") {
        const FeatureSequence x(3, 2, {5, 1, 5, 2, 5, 3}, 10.0);
        const FeatureSequence n = normalize_per_sample(x);
        for (std::size_t t = 0; t < 3; ++t) CHECK(n.at(t, 0) == 0.0);
    }
    SECTION("already-normalized data is unchanged") {
        const FeatureSequence x(3, 1, {-1.22474487139158905, 0.0, 1.22474487139158905}, 10.0);
        const FeatureSequence n = normalize_per_sample(x);
        for (std::size_t t = 0; t < 3; ++t)
            CHECK(n.at(t, 0) == Catch::Approx(x.at(t, 0)).margin(1e-9));
    }
    SECTION("too short to normalize") {
        const FeatureSequence x(1, 1, {4.0}, 10.0);
        CHECK_THROWS_AS(normalize_per_sample(x), ShapeError);
    }
}

TEST_CASE("stroke-like profile is sub-second heavy", "[datagen]") {
    const GeneratorConfig cfg = stroke_like_profile(3);
    cfg.validate();
    const auto samples = generate(cfg, 4);
    std::vector<double> durations;
    for (const auto& s : samples)
        for (const auto& seg : segments_from_frames(s.frame_labels))
            durations.push_back((seg.end - seg.begin) / cfg.frame_rate);
    std::sort(durations.begin(), durations.end());
    CHECK(durations[durations.size() / 2] < 1.0);  // median under a second
}
