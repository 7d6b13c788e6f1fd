#include <catch2/catch_amalgamated.hpp>

#include "actseq/core.hpp"
#include "testutil.hpp"

using namespace actseq;

namespace {
FrameLabeling frames(std::vector<int> labels) { return FrameLabeling(std::move(labels), 10.0); }
}  // namespace

TEST_CASE("vocab reserves tokens past the class range", "[core]") {
    LabelVocab vocab({"reach", "idle", "transport"});
    CHECK(vocab.num_classes() == 3);
    CHECK(vocab.start_of_sequence() == 3);
    CHECK(vocab.end_of_sequence() == 4);
    CHECK(vocab.index("idle") == 1);
    CHECK(vocab.name(2) == "transport");
    CHECK_THROWS_AS(vocab.index("nope"), FormatError);
    CHECK_THROWS_AS(LabelVocab({}), FormatError);
    CHECK_THROWS_AS(LabelVocab({"a", "a"}), FormatError);
    CHECK_THROWS_AS(LabelVocab({""}), FormatError);
}

TEST_CASE("canonical sequences reject consecutive duplicates", "[core]") {
    CHECK_NOTHROW(ActionSequence({0, 1, 0}));
    CHECK_THROWS_AS(ActionSequence({0, 0, 1}), FormatError);
    CHECK_NOTHROW(ActionSequence({0, 0, 1}, /*canonical=*/false));
    CHECK_THROWS_AS(ActionSequence({-1}), FormatError);
    CHECK(ActionSequence().empty());
}

TEST_CASE("collapse removes consecutive repetitions", "[core]") {
    // reach=0 idle=1 transport=2
    CHECK(collapse(frames({0, 0, 1, 1, 1, 2})) == ActionSequence({0, 1, 2}));
    CHECK(collapse(frames({})) == ActionSequence());
    CHECK(collapse(frames({3, 3, 3, 3})) == ActionSequence({3}));
}

TEST_CASE("segments round-trip with frame labelings", "[core]") {
    CHECK(segments_from_frames(frames({0, 0, 1})) == SegmentList{{0, 0, 2}, {1, 2, 3}});
    CHECK(segments_from_frames(frames({})).empty());
    CHECK(segments_from_frames(frames({1})) == SegmentList{{1, 0, 1}});

    CHECK(frames_from_segments({{0, 0, 2}, {1, 2, 3}}).labels == std::vector<int>{0, 0, 1});
    CHECK(frames_from_segments({}).labels.empty());
    CHECK(frames_from_segments({{0, 0, 1}}).labels == std::vector<int>{0});

    CHECK_THROWS_AS(frames_from_segments({{0, 1, 2}}), FormatError);           // gap at 0
    CHECK_THROWS_AS(frames_from_segments({{0, 0, 2}, {1, 3, 4}}), FormatError);  // gap
    CHECK_THROWS_AS(frames_from_segments({{0, 0, 2}, {1, 1, 3}}), FormatError);  // overlap
    CHECK_THROWS_AS(frames_from_segments({{0, 0, 0}}), FormatError);           // empty segment
    CHECK_THROWS_AS(frames_from_segments({{0, 0, 1}, {0, 1, 2}}), FormatError);  // same class
}

TEST_CASE("boundaries are the frames where the label changes", "[core]") {
    CHECK(boundaries_of(frames({0, 0, 1, 1, 2})) == std::vector<int>{2, 4});
    CHECK(boundaries_of(frames({0, 0, 0})).empty());
    CHECK(boundaries_of(frames({})).empty());
}

TEST_CASE("collapse properties over random labelings", "[core]") {
    Rng rng(42);
    for (int trial = 0; trial < 300; ++trial) {
        const FrameLabeling f = testutil::random_labeling(rng, 40, 4);
        const ActionSequence seq = collapse(f);

        // collapse is stable under the segment round-trip
        const FrameLabeling rebuilt = frames_from_segments(segments_from_frames(f), f.frame_rate);
        CHECK(rebuilt.labels == f.labels);
        CHECK(collapse(rebuilt) == seq);

        // segment classes equal the collapsed sequence
        const SegmentList segs = segments_from_frames(f);
        REQUIRE(segs.size() == seq.size());
        for (std::size_t i = 0; i < segs.size(); ++i) CHECK(segs[i].cls == seq[static_cast<std::size_t>(i)]);

        CHECK(seq.size() <= f.size());
        if (!f.labels.empty()) CHECK(seq.size() == boundaries_of(f).size() + 1);
    }
}

TEST_CASE("labeled samples derive their sequence from the frames", "[core]") {
    FeatureSequence features(3, 2, {0, 0, 1, 1, 2, 2}, 10.0, {{"id", "s1"}, {"group", "g0"}});
    LabeledSample sample = make_labeled_sample(features, frames({0, 0, 1}));
    CHECK(sample.sequence == ActionSequence({0, 1}));
    CHECK(sample.id() == "s1");
    CHECK(sample.group() == "g0");
    CHECK_THROWS_AS(make_labeled_sample(features, frames({0, 0})), ShapeError);
}

TEST_CASE("feature sequences validate shape and finiteness", "[core]") {
    CHECK_THROWS_AS(FeatureSequence(2, 2, {1, 2, 3}, 10.0), ShapeError);
    CHECK_THROWS_AS(FeatureSequence(1, 1, {std::nan("")}, 10.0), NumericError);
    CHECK_THROWS_AS(FeatureSequence(1, 0, {}, 10.0), ShapeError);
    CHECK_THROWS_AS(FeatureSequence(1, 1, {0.0}, 0.0), FormatError);
}
