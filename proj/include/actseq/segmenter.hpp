#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "actseq/core.hpp"
#include "actseq/datagen.hpp"
#include "actseq/errors.hpp"
#include "actseq/metrics.hpp"
#include "actseq/nn.hpp"
#include "actseq/optim.hpp"
#include "actseq/rng.hpp"
#include "actseq/tensor.hpp"

namespace actseq::segmenter {

using ad::Tensor;

struct SegmenterConfig {
    int input_dim = 16;
    int num_classes = 5;
    int stages = 2;
    int layers_per_stage = 6;
    int channels = 32;
    bool boundary_head = true;
    double lambda_boundary = 0.1;
    std::vector<double> class_weights;  // empty: unit weights
    int boundary_widen = 2;             // frames added each side of a boundary target
    double dropout = 0.1;
    bool normalize_input = true;

    void validate() const {
        if (input_dim < 1 || num_classes < 2) throw ConfigError("segmenter: bad dimensions");
        if (stages < 1 || layers_per_stage < 1 || channels < 1)
            throw ConfigError("segmenter: counts must be positive");
        if (lambda_boundary < 0.0) throw ConfigError("segmenter: lambda must be >= 0");
        if (boundary_widen < 0) throw ConfigError("segmenter: boundary widening must be >= 0");
        if (!class_weights.empty() &&
            class_weights.size() != static_cast<std::size_t>(num_classes))
            throw ConfigError("segmenter: class weight count mismatch");
    }
};

// Frame-wise class probabilities (rows on the simplex) plus the optional
// boundary probability track.
struct FrameProbs {
    std::size_t rows = 0;
    std::size_t classes = 0;
    std::vector<double> probs;     // T x c
    std::vector<double> boundary;  // empty or length T
    double frame_rate = 1.0;

    const double* frame(std::size_t t) const { return probs.data() + t * classes; }

    void validate() const {
        if (probs.size() != rows * classes) throw ShapeError("frame probs: buffer mismatch");
        if (!boundary.empty() && boundary.size() != rows)
            throw ShapeError("frame probs: boundary track length mismatch");
        for (std::size_t t = 0; t < rows; ++t) {
            double total = 0.0;
            for (std::size_t c = 0; c < classes; ++c) total += frame(t)[c];
            if (std::abs(total - 1.0) > 1e-6) throw NumericError("frame probs: row off the simplex");
        }
        for (double b : boundary)
            if (b < 0.0 || b > 1.0) throw NumericError("frame probs: boundary prob outside [0,1]");
    }

    FrameLabeling argmax_labeling() const {
        std::vector<int> labels(rows);
        for (std::size_t t = 0; t < rows; ++t) {
            const double* row = frame(t);
            int best = 0;
            for (std::size_t c = 1; c < classes; ++c)
                if (row[c] > row[best]) best = static_cast<int>(c);
            labels[t] = best;
        }
        return FrameLabeling(std::move(labels), frame_rate);
    }
};

// Multi-stage dilated temporal convolution network. Every stage maps its
// input through a 1x1 projection, a stack of dilated residual layers
// (dilation 2^l), and a 1x1 classifier; stages after the first consume the
// previous stage's softmax.
struct SegmenterModel {
    SegmenterConfig config;

    struct Stage {
        nn::Linear in_proj;
        std::vector<nn::DilatedResidualLayer> layers;
        nn::Linear classifier;
    };
    std::vector<Stage> stages;
    Tensor boundary_weight;  // (channels), scores the last-stage features
    Tensor boundary_bias;    // scalar

    SegmenterModel() = default;

    SegmenterModel(const SegmenterConfig& cfg, Rng& rng) : config(cfg) {
        config.validate();
        for (int s = 0; s < cfg.stages; ++s) {
            Stage stage;
            const int in_dim = s == 0 ? cfg.input_dim : cfg.num_classes;
            stage.in_proj = nn::Linear(rng, in_dim, cfg.channels);
            for (int l = 0; l < cfg.layers_per_stage; ++l)
                stage.layers.emplace_back(rng, cfg.channels, 1 << l);
            stage.classifier = nn::Linear(rng, cfg.channels, cfg.num_classes);
            stages.push_back(std::move(stage));
        }
        if (cfg.boundary_head) {
            boundary_weight = nn::init_param(rng, {cfg.channels}, cfg.channels);
            boundary_bias = nn::init_param(rng, {}, cfg.channels);
        }
    }

    nn::NamedParams named_params() const {
        nn::NamedParams out;
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const std::string prefix = "stage" + std::to_string(s);
            stages[s].in_proj.collect(prefix + ".in", out);
            for (std::size_t l = 0; l < stages[s].layers.size(); ++l)
                stages[s].layers[l].collect(prefix + ".layer" + std::to_string(l), out);
            stages[s].classifier.collect(prefix + ".out", out);
        }
        if (config.boundary_head) {
            out.emplace_back("boundary.weight", boundary_weight);
            out.emplace_back("boundary.bias", boundary_bias);
        }
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

    struct Forward {
        std::vector<Tensor> stage_logits;  // per stage, T x c
        Tensor boundary_logits;            // T, defined when the head exists
    };

    Forward forward(const Tensor& x, Rng* dropout_rng = nullptr) const {
        if (x.rank() != 2 || x.dim(1) != config.input_dim)
            throw ShapeError("segmenter: input dimension mismatch");
        Forward fwd;
        Tensor stage_in = x;
        Tensor last_features;
        for (std::size_t s = 0; s < stages.size(); ++s) {
            Tensor h = stages[s].in_proj(stage_in);
            for (const auto& layer : stages[s].layers)
                h = layer(h, config.dropout, dropout_rng);
            const Tensor logits = stages[s].classifier(h);
            fwd.stage_logits.push_back(logits);
            last_features = h;
            if (s + 1 < stages.size()) stage_in = ad::softmax(logits);
        }
        if (config.boundary_head)
            fwd.boundary_logits = ad::add_scalar(ad::matmul(last_features, boundary_weight),
                                                 boundary_bias);
        return fwd;
    }

    FrameProbs infer(const FeatureSequence& features) const {
        const Tensor x = Tensor::leaf({static_cast<int>(features.rows()),
                                       static_cast<int>(features.dim())},
                                      features.data(), false);
        const Forward fwd = forward(x);
        const Tensor probs = ad::softmax(fwd.stage_logits.back());
        FrameProbs out;
        out.rows = features.rows();
        out.classes = static_cast<std::size_t>(config.num_classes);
        out.probs = probs.value();
        out.frame_rate = features.frame_rate();
        if (config.boundary_head) {
            out.boundary.resize(out.rows);
            for (std::size_t t = 0; t < out.rows; ++t)
                out.boundary[t] = 1.0 / (1.0 + std::exp(-fwd.boundary_logits.value()[t]));
        }
        return out;
    }
};

// Binary boundary targets: boundaries_of(gt) widened by +-widen frames.
inline std::vector<double> boundary_targets(const FrameLabeling& gt, int widen) {
    std::vector<double> targets(gt.size(), 0.0);
    for (int b : boundaries_of(gt)) {
        const int lo = std::max(0, b - widen);
        const int hi = std::min(static_cast<int>(gt.size()) - 1, b + widen);
        for (int t = lo; t <= hi; ++t) targets[static_cast<std::size_t>(t)] = 1.0;
    }
    return targets;
}

// Sum over stages of class-weighted frame cross-entropy (mean per frame),
// plus lambda times the binary boundary cross-entropy when the head exists.
inline Tensor segmenter_loss(const SegmenterModel::Forward& fwd, const FrameLabeling& gt,
                             const SegmenterConfig& cfg) {
    for (const auto& logits : fwd.stage_logits)
        if (logits.dim(0) != static_cast<int>(gt.size()))
            throw ShapeError("segmenter loss: prediction/target length mismatch");
    Tensor loss;
    for (const auto& logits : fwd.stage_logits) {
        const Tensor stage = ad::cross_entropy_rows(logits, gt.labels, cfg.class_weights);
        loss = loss.defined() ? ad::add(loss, stage) : stage;
    }
    if (cfg.boundary_head && cfg.lambda_boundary > 0.0) {
        if (!fwd.boundary_logits.defined()) throw ShapeError("segmenter loss: boundary head missing");
        const Tensor bnd = ad::binary_cross_entropy_logits(fwd.boundary_logits,
                                                           boundary_targets(gt, cfg.boundary_widen));
        loss = ad::add(loss, ad::scale(bnd, cfg.lambda_boundary));
    }
    return loss;
}

// Arg-max after a centered moving average of the class probabilities
// (window truncated at the edges; window = 1 is the plain argmax).
inline FrameLabeling smooth_refine(const FrameProbs& p, int window) {
    if (window < 1 || window % 2 == 0) throw ConfigError("smoothing window must be odd and >= 1");
    const long T = static_cast<long>(p.rows), c = static_cast<long>(p.classes);
    const int half = window / 2;
    // prefix sums per class for O(T c) averaging
    std::vector<double> prefix((T + 1) * c, 0.0);
    for (long t = 0; t < T; ++t)
        for (long k = 0; k < c; ++k)
            prefix[(t + 1) * c + k] = prefix[t * c + k] + p.probs[t * c + k];
    std::vector<int> labels(static_cast<std::size_t>(T));
    for (long t = 0; t < T; ++t) {
        const long lo = std::max(0L, t - half);
        const long hi = std::min(T - 1, t + half);
        int best = 0;
        double best_v = -1.0;
        for (long k = 0; k < c; ++k) {
            const double avg = (prefix[(hi + 1) * c + k] - prefix[lo * c + k]) /
                               static_cast<double>(hi - lo + 1);
            if (avg > best_v) {
                best_v = avg;
                best = static_cast<int>(k);
            }
        }
        labels[static_cast<std::size_t>(t)] = best;
    }
    return FrameLabeling(std::move(labels), p.frame_rate);
}

// Boundary candidates above the threshold, thinned by non-maximum
// suppression over the given radius. Frame 0 never counts as a boundary.
inline std::vector<int> detect_boundaries(const std::vector<double>& boundary_probs,
                                          double threshold, int nms_radius) {
    std::vector<int> candidates;
    for (std::size_t t = 1; t < boundary_probs.size(); ++t)
        if (boundary_probs[t] >= threshold) candidates.push_back(static_cast<int>(t));
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        return boundary_probs[static_cast<std::size_t>(a)] > boundary_probs[static_cast<std::size_t>(b)];
    });
    std::vector<int> accepted;
    for (int t : candidates) {
        bool blocked = false;
        for (int a : accepted)
            if (std::abs(a - t) <= nms_radius) {
                blocked = true;
                break;
            }
        if (!blocked) accepted.push_back(t);
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

// Partitions the frames at detected boundary peaks and labels each resulting
// segment with the class of highest mean probability over the segment.
inline FrameLabeling boundary_refine(const FrameProbs& p, double threshold, int nms_radius = 5) {
    if (p.boundary.empty()) throw ShapeError("boundary refine: no boundary track");
    if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("boundary refine: threshold in (0,1)");
    const std::vector<int> cuts = detect_boundaries(p.boundary, threshold, nms_radius);
    const long T = static_cast<long>(p.rows), c = static_cast<long>(p.classes);
    std::vector<int> labels(static_cast<std::size_t>(T));
    long begin = 0;
    std::size_t cut_idx = 0;
    while (begin < T) {
        const long end = cut_idx < cuts.size() ? cuts[cut_idx] : T;
        ++cut_idx;
        if (end <= begin) continue;
        std::vector<double> mean_probs(static_cast<std::size_t>(c), 0.0);
        for (long t = begin; t < end; ++t)
            for (long k = 0; k < c; ++k) mean_probs[static_cast<std::size_t>(k)] += p.probs[t * c + k];
        int best = 0;
        for (long k = 1; k < c; ++k)
            if (mean_probs[static_cast<std::size_t>(k)] > mean_probs[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
        for (long t = begin; t < end; ++t) labels[static_cast<std::size_t>(t)] = best;
        begin = end;
    }
    return FrameLabeling(std::move(labels), p.frame_rate);
}

// Inverse median-frequency class weights from a training split.
inline std::vector<double> median_frequency_weights(const std::vector<const LabeledSample*>& train,
                                                    int num_classes) {
    std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
    long total = 0;
    for (const auto* s : train)
        for (int l : s->frame_labels.labels) {
            ++counts[static_cast<std::size_t>(l)];
            ++total;
        }
    std::vector<double> freqs;
    for (long v : counts)
        if (v > 0) freqs.push_back(static_cast<double>(v) / static_cast<double>(total));
    if (freqs.empty()) return std::vector<double>(static_cast<std::size_t>(num_classes), 1.0);
    std::sort(freqs.begin(), freqs.end());
    const double median = freqs[freqs.size() / 2];
    std::vector<double> weights(static_cast<std::size_t>(num_classes), 1.0);
    for (int k = 0; k < num_classes; ++k) {
        const long v = counts[static_cast<std::size_t>(k)];
        if (v > 0) weights[static_cast<std::size_t>(k)] =
            median / (static_cast<double>(v) / static_cast<double>(total));
    }
    return weights;
}

struct TrainOptions {
    int epochs = 150;
    optim::AdamConfig adam;
    std::uint64_t seed = 0;
    // < 0 disables; otherwise training stops once the training-split AER
    // (computed like validation) drops below the threshold.
    double early_stop_train_aer = -1.0;
};

struct TrainLogEntry {
    int epoch = 0;
    double train_loss = 0.0;
    double train_frame_accuracy = 0.0;
    double val_aer = 0.0;
    double train_aer = -1.0;   // -1 when not computed
    double eval_loss = -1.0;   // seq2seq only
    double epsilon = 0.0;      // seq2seq only
};

struct SegmenterTrainResult {
    SegmenterModel model;  // parameters of the best-validation epoch
    std::vector<TrainLogEntry> log;
    int best_epoch = -1;
    double best_val_aer = 0.0;
};

inline FeatureSequence prepared_features(const LabeledSample& sample, bool normalize) {
    return normalize ? datagen::normalize_per_sample(sample.features) : sample.features;
}

inline double mean_split_aer(const SegmenterModel& model,
                             const std::vector<const LabeledSample*>& split) {
    double total = 0.0;
    for (const auto* s : split) {
        const FrameProbs probs = model.infer(prepared_features(*s, model.config.normalize_input));
        total += metrics::aer(s->sequence, collapse(probs.argmax_labeling()));
    }
    return total / static_cast<double>(split.size());
}

// Trains on full sequences (one optimizer step per sequence) and returns the
// checkpoint with the lowest validation AER over epochs.
inline SegmenterTrainResult train_segmenter(const std::vector<const LabeledSample*>& train,
                                            const std::vector<const LabeledSample*>& val,
                                            const SegmenterConfig& config,
                                            const TrainOptions& options) {
    if (train.empty()) throw ConfigError("segmenter training: empty train set");
    config.validate();
    Rng rng(Rng::derive_seed(options.seed, 0x5E6));
    SegmenterTrainResult result;
    result.model = SegmenterModel(config, rng);
    SegmenterModel& model = result.model;

    std::vector<Tensor> params = model.parameters();
    optim::AdamState opt_state;

    // features prepared once; graphs rebuilt per epoch
    std::vector<Tensor> inputs;
    for (const auto* s : train) {
        const FeatureSequence f = prepared_features(*s, config.normalize_input);
        inputs.push_back(Tensor::leaf({static_cast<int>(f.rows()), static_cast<int>(f.dim())},
                                      f.data(), false));
    }

    std::vector<std::vector<double>> best_values;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_total = 0.0;
        long frames_total = 0, frames_correct = 0;
        for (std::size_t idx : order) {
            const LabeledSample& sample = *train[idx];
            Tensor loss;
            try {
                const auto fwd = model.forward(inputs[idx], &rng);
                loss = segmenter_loss(fwd, sample.frame_labels, config);
                ad::backward(loss);
                // frame accuracy from the final stage of this forward pass
                const auto& logits = fwd.stage_logits.back();
                const int c = config.num_classes;
                for (std::size_t t = 0; t < sample.frame_labels.size(); ++t) {
                    const double* row = logits.value().data() + t * static_cast<std::size_t>(c);
                    int best = 0;
                    for (int k = 1; k < c; ++k)
                        if (row[k] > row[best]) best = k;
                    frames_correct += best == sample.frame_labels.labels[t] ? 1 : 0;
                    ++frames_total;
                }
            } catch (const NumericError& e) {
                throw NumericError("segmenter training diverged at epoch " +
                                   std::to_string(epoch) + ": " + e.what());
            }
            loss_total += loss.item();
            optim::adam_step(params, opt_state, options.adam);
        }

        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.train_loss = loss_total / static_cast<double>(train.size());
        entry.train_frame_accuracy =
            frames_total ? static_cast<double>(frames_correct) / static_cast<double>(frames_total) : 0.0;
        entry.val_aer = val.empty() ? 0.0 : mean_split_aer(model, val);
        if (options.early_stop_train_aer >= 0.0) entry.train_aer = mean_split_aer(model, train);
        result.log.push_back(entry);

        if (result.best_epoch < 0 || entry.val_aer < result.best_val_aer) {
            result.best_epoch = epoch;
            result.best_val_aer = entry.val_aer;
            best_values.clear();
            for (const auto& p : params) best_values.push_back(p.value());
        }
        if (options.early_stop_train_aer >= 0.0 && entry.train_aer >= 0.0 &&
            entry.train_aer < options.early_stop_train_aer)
            break;
    }

    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = best_values[i];
    return result;
}

}  // namespace actseq::segmenter
