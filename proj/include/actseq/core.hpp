#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "actseq/errors.hpp"

namespace actseq {

// Class vocabulary. Indices 0..c-1 are action classes; two token ids past
// the class range are reserved for the sequence model: start-of-sequence
// (c) and end-of-sequence (c+1).
class LabelVocab {
public:
    explicit LabelVocab(std::vector<std::string> classes) : classes_(std::move(classes)) {
        if (classes_.empty()) throw FormatError("vocab: needs at least one class");
        for (std::size_t i = 0; i < classes_.size(); ++i) {
            if (classes_[i].empty()) throw FormatError("vocab: empty class name");
            auto [it, inserted] = index_.emplace(classes_[i], static_cast<int>(i));
            (void)it;
            if (!inserted) throw FormatError("vocab: duplicate class name '" + classes_[i] + "'");
        }
    }

    int num_classes() const { return static_cast<int>(classes_.size()); }
    int start_of_sequence() const { return num_classes(); }
    int end_of_sequence() const { return num_classes() + 1; }

    const std::string& name(int idx) const {
        if (idx < 0 || idx >= num_classes()) throw FormatError("vocab: class index out of range");
        return classes_[static_cast<std::size_t>(idx)];
    }

    int index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw FormatError("vocab: unknown class '" + name + "'");
        return it->second;
    }

    const std::vector<std::string>& classes() const { return classes_; }

private:
    std::vector<std::string> classes_;
    std::map<std::string, int> index_;
};

// Ordered list of action classes, duration-free. In canonical form no two
// consecutive items are equal; raw imports may disable the check.
class ActionSequence {
public:
    ActionSequence() = default;

    explicit ActionSequence(std::vector<int> items, bool canonical = true)
        : items_(std::move(items)) {
        for (std::size_t i = 0; i < items_.size(); ++i) {
            if (items_[i] < 0) throw FormatError("sequence: negative class index");
            if (canonical && i > 0 && items_[i] == items_[i - 1])
                throw FormatError("sequence: consecutive duplicate in canonical form");
        }
    }

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    int operator[](std::size_t i) const { return items_[i]; }
    const std::vector<int>& items() const { return items_; }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    friend bool operator==(const ActionSequence& a, const ActionSequence& b) {
        return a.items_ == b.items_;
    }

private:
    std::vector<int> items_;
};

// One class label per frame.
struct FrameLabeling {
    std::vector<int> labels;
    double frame_rate = 1.0;

    FrameLabeling() = default;
    FrameLabeling(std::vector<int> l, double fps) : labels(std::move(l)), frame_rate(fps) {
        if (frame_rate <= 0.0) throw FormatError("frame labeling: frame rate must be positive");
        for (int v : labels)
            if (v < 0) throw FormatError("frame labeling: negative class index");
    }

    std::size_t size() const { return labels.size(); }
};

// T x D row-major feature matrix with per-sequence metadata.
class FeatureSequence {
public:
    FeatureSequence() = default;

    FeatureSequence(std::size_t rows, std::size_t dim, std::vector<double> data, double fps,
                    std::map<std::string, std::string> metadata = {})
        : rows_(rows), dim_(dim), data_(std::move(data)), frame_rate_(fps),
          metadata_(std::move(metadata)) {
        if (dim_ < 1) throw ShapeError("features: dimension must be >= 1");
        if (frame_rate_ <= 0.0) throw FormatError("features: frame rate must be positive");
        if (data_.size() != rows_ * dim_) throw ShapeError("features: buffer size does not match shape");
        for (double v : data_)
            if (!std::isfinite(v)) throw NumericError("features: non-finite entry");
    }

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }
    double frame_rate() const { return frame_rate_; }
    const std::vector<double>& data() const { return data_; }
    const double* frame(std::size_t t) const { return data_.data() + t * dim_; }
    double at(std::size_t t, std::size_t d) const { return data_[t * dim_ + d]; }

    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    std::map<std::string, std::string>& metadata() { return metadata_; }

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 1;
    std::vector<double> data_;
    double frame_rate_ = 1.0;
    std::map<std::string, std::string> metadata_;
};

// Contiguous per-class segments: [begin, end) frame ranges covering 0..T.
struct Segment {
    int cls = 0;
    int begin = 0;
    int end = 0;

    friend bool operator==(const Segment& a, const Segment& b) {
        return a.cls == b.cls && a.begin == b.begin && a.end == b.end;
    }
};

using SegmentList = std::vector<Segment>;

// Features, frame labels and the derived action sequence for one recording.
struct LabeledSample {
    FeatureSequence features;
    FrameLabeling frame_labels;
    ActionSequence sequence;

    std::string id() const {
        auto it = features.metadata().find("id");
        return it == features.metadata().end() ? std::string() : it->second;
    }
    std::string group() const {
        auto it = features.metadata().find("group");
        return it == features.metadata().end() ? std::string() : it->second;
    }
};

// Removes label repetitions at consecutive steps.
inline ActionSequence collapse(const FrameLabeling& f) {
    std::vector<int> out;
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
        if (i == 0 || f.labels[i] != f.labels[i - 1]) out.push_back(f.labels[i]);
    }
    return ActionSequence(std::move(out));
}

inline SegmentList segments_from_frames(const FrameLabeling& f) {
    SegmentList segments;
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
        if (segments.empty() || f.labels[i] != segments.back().cls) {
            segments.push_back({f.labels[i], static_cast<int>(i), static_cast<int>(i + 1)});
        } else {
            segments.back().end = static_cast<int>(i + 1);
        }
    }
    return segments;
}

inline void validate_segments(const SegmentList& s) {
    int cursor = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].begin != cursor) throw FormatError("segments: not contiguous from frame 0");
        if (s[i].end <= s[i].begin) throw FormatError("segments: empty segment");
        if (i > 0 && s[i].cls == s[i - 1].cls) throw FormatError("segments: adjacent segments share a class");
        cursor = s[i].end;
    }
}

inline FrameLabeling frames_from_segments(const SegmentList& s, double frame_rate = 1.0) {
    validate_segments(s);
    std::vector<int> labels;
    if (!s.empty()) labels.reserve(static_cast<std::size_t>(s.back().end));
    for (const auto& seg : s)
        for (int t = seg.begin; t < seg.end; ++t) labels.push_back(seg.cls);
    return FrameLabeling(std::move(labels), frame_rate);
}

// Frame indices i >= 1 where labels[i] != labels[i-1], ascending.
inline std::vector<int> boundaries_of(const FrameLabeling& f) {
    std::vector<int> out;
    for (std::size_t i = 1; i < f.labels.size(); ++i)
        if (f.labels[i] != f.labels[i - 1]) out.push_back(static_cast<int>(i));
    return out;
}

inline LabeledSample make_labeled_sample(FeatureSequence features, FrameLabeling frame_labels) {
    if (features.rows() != frame_labels.size())
        throw ShapeError("sample: features and labels disagree on length");
    LabeledSample s;
    s.sequence = collapse(frame_labels);
    s.features = std::move(features);
    s.frame_labels = std::move(frame_labels);
    return s;
}

}  // namespace actseq
