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
#include "actseq/segmenter.hpp"
#include "actseq/tensor.hpp"

namespace actseq::seq2seq {

using ad::Tensor;

enum class InputKind { raw_features, frame_probs };
enum class EncoderKind { bidirectional_gru, dilated_conv };

inline const char* to_string(InputKind k) {
    return k == InputKind::raw_features ? "raw_features" : "frame_probs";
}
inline const char* to_string(EncoderKind k) {
    return k == EncoderKind::bidirectional_gru ? "bidirectional_gru" : "dilated_conv";
}

// Training windows overlap with the given stride; label margins trim the
// window edges so targets only cover well-contextualized frames. Inference
// always uses non-overlapping windows of the full length.
struct WindowSpec {
    int length = 60;
    int stride = 20;
    int margin = 10;

    void validate() const {
        if (length < 1) throw ConfigError("window: length must be >= 1");
        if (stride < 1 || stride > length) throw ConfigError("window: stride must be in [1, length]");
        if (margin < 0 || 2 * margin >= length)
            throw ConfigError("window: margin must leave a non-empty label span");
    }
};

// Scheduled-sampling probability, ramped linearly from start to end over
// the epoch budget.
struct EpsilonSchedule {
    double start = 0.0;
    double end = 0.5;

    void validate() const {
        if (start < 0.0 || end > 1.0 || end < start)
            throw ConfigError("epsilon schedule must be non-decreasing within [0,1]");
    }

    double at(int epoch, int total_epochs) const {
        if (total_epochs <= 1) return end;
        const double f = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
        return start + (end - start) * f;
    }
};

struct Seq2SeqConfig {
    InputKind input = InputKind::raw_features;
    EncoderKind encoder = EncoderKind::bidirectional_gru;
    int input_dim = 16;
    int num_classes = 5;
    int enc_hidden = 64;
    int dec_hidden = 128;
    int conv_layers = 6;    // dilated_conv encoder only
    int conv_channels = 32;
    bool attention = true;
    int attention_dim = 64;
    int max_decode_len = 32;
    double alpha_framewise = 0.0;  // auxiliary frame loss weight on the encoder
    double dropout = 0.1;
    bool normalize_input = true;
    WindowSpec window;
    EpsilonSchedule epsilon;

    int embed_dim() const { return std::max(1, dec_hidden / 4); }
    int enc_state_dim() const {
        return encoder == EncoderKind::bidirectional_gru ? 2 * enc_hidden : conv_channels;
    }

    void validate() const {
        if (input_dim < 1 || num_classes < 1) throw ConfigError("seq2seq: bad dimensions");
        if (enc_hidden < 1 || dec_hidden < 1) throw ConfigError("seq2seq: hidden dims must be positive");
        if (conv_layers < 1 || conv_channels < 1) throw ConfigError("seq2seq: conv encoder dims");
        if (attention_dim < 1) throw ConfigError("seq2seq: attention dim must be positive");
        if (max_decode_len < 1) throw ConfigError("seq2seq: max decode length must be >= 1");
        if (alpha_framewise < 0.0) throw ConfigError("seq2seq: alpha must be >= 0");
        window.validate();
        epsilon.validate();
    }
};

// Output-head slots: classes 0..c-1, then end-of-sequence at slot c.
// Vocabulary token ids additionally reserve start-of-sequence = c and
// end-of-sequence = c+1 for the embedding table.
inline int eos_slot(int num_classes) { return num_classes; }

struct DecodeTrace {
    std::vector<int> tokens;                            // head slots, EOS included when emitted
    std::vector<std::vector<double>> distributions;     // one (c+1)-simplex per step
    std::vector<std::vector<double>> attention_weights; // per step, when attention is on
    bool truncated = false;
    int num_classes = 0;

    ActionSequence sequence() const {
        std::vector<int> items;
        for (int t : tokens)
            if (t != eos_slot(num_classes)) items.push_back(t);
        return ActionSequence(std::move(items), /*canonical=*/false);
    }
};

struct Seq2SeqModel {
    Seq2SeqConfig config;

    nn::GruParams enc_fwd, enc_bwd;                    // bidirectional_gru encoder
    nn::Linear conv_in;                                // dilated_conv encoder
    std::vector<nn::DilatedResidualLayer> conv_stack;  //
    nn::Embedding embed;                               // c+2 tokens
    nn::GruParams dec;
    nn::Linear s0;                                     // enc state -> initial decoder state
    nn::Linear att_query, att_key, att_value;
    nn::Linear mlp_hidden;
    nn::Linear mlp_out;                                // -> c+1 slots
    nn::Linear aux_head;                               // encoder frame classifier (alpha > 0)

    Seq2SeqModel() = default;

    explicit Seq2SeqModel(const Seq2SeqConfig& cfg, Rng& rng) : config(cfg) {
        config.validate();
        const int H = cfg.enc_state_dim();
        if (cfg.encoder == EncoderKind::bidirectional_gru) {
            enc_fwd = nn::GruParams(rng, cfg.input_dim, cfg.enc_hidden);
            enc_bwd = nn::GruParams(rng, cfg.input_dim, cfg.enc_hidden);
        } else {
            conv_in = nn::Linear(rng, cfg.input_dim, cfg.conv_channels);
            for (int l = 0; l < cfg.conv_layers; ++l)
                conv_stack.emplace_back(rng, cfg.conv_channels, 1 << l);
        }
        embed = nn::Embedding(rng, cfg.num_classes + 2, cfg.embed_dim());
        dec = nn::GruParams(rng, cfg.embed_dim() + H, cfg.dec_hidden);
        s0 = nn::Linear(rng, H, cfg.dec_hidden);
        if (cfg.attention) {
            att_query = nn::Linear(rng, cfg.dec_hidden, cfg.attention_dim);
            att_key = nn::Linear(rng, H, cfg.attention_dim);
            att_value = nn::Linear(rng, H, cfg.attention_dim);
        }
        const int mlp_in = cfg.dec_hidden + H + (cfg.attention ? cfg.attention_dim : 0);
        mlp_hidden = nn::Linear(rng, mlp_in, cfg.dec_hidden);
        mlp_out = nn::Linear(rng, cfg.dec_hidden, cfg.num_classes + 1);
        if (cfg.alpha_framewise > 0.0) aux_head = nn::Linear(rng, H, cfg.num_classes);
    }

    nn::NamedParams named_params() const {
        nn::NamedParams out;
        if (config.encoder == EncoderKind::bidirectional_gru) {
            enc_fwd.collect("encoder.fwd", out);
            enc_bwd.collect("encoder.bwd", out);
        } else {
            conv_in.collect("encoder.in", out);
            for (std::size_t l = 0; l < conv_stack.size(); ++l)
                conv_stack[l].collect("encoder.layer" + std::to_string(l), out);
        }
        embed.collect("decoder.embed", out);
        dec.collect("decoder.gru", out);
        s0.collect("decoder.s0", out);
        if (config.attention) {
            att_query.collect("attention.query", out);
            att_key.collect("attention.key", out);
            att_value.collect("attention.value", out);
        }
        mlp_hidden.collect("head.hidden", out);
        mlp_out.collect("head.out", out);
        if (config.alpha_framewise > 0.0) aux_head.collect("aux", out);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }
};

// Encoder products reused across decode steps of one window.
struct EncodedWindow {
    Tensor h;       // fixed-length summary, dim = enc_state_dim
    Tensor states;  // T x enc_state_dim
    Tensor keys;    // T x attention_dim, when attention is on
    Tensor values;  // T x attention_dim
};

inline EncodedWindow encode(const Seq2SeqModel& model, const Tensor& x, Rng* dropout_rng = nullptr) {
    const auto& cfg = model.config;
    if (x.rank() != 2 || x.dim(1) != cfg.input_dim)
        throw ShapeError("encode: window dimension mismatch");
    const int T = x.dim(0);
    if (T < 1) throw ShapeError("encode: empty window");
    EncodedWindow enc;
    if (cfg.encoder == EncoderKind::bidirectional_gru) {
        std::vector<Tensor> fwd_states(static_cast<std::size_t>(T)), bwd_states(static_cast<std::size_t>(T));
        Tensor s = Tensor::zeros({cfg.enc_hidden});
        for (int t = 0; t < T; ++t) {
            s = nn::gru_cell(ad::row(x, t), s, model.enc_fwd);
            fwd_states[static_cast<std::size_t>(t)] = s;
        }
        Tensor sb = Tensor::zeros({cfg.enc_hidden});
        for (int t = T - 1; t >= 0; --t) {
            sb = nn::gru_cell(ad::row(x, t), sb, model.enc_bwd);
            bwd_states[static_cast<std::size_t>(t)] = sb;
        }
        std::vector<Tensor> joined(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t)
            joined[static_cast<std::size_t>(t)] =
                ad::concat(fwd_states[static_cast<std::size_t>(t)], bwd_states[static_cast<std::size_t>(t)]);
        enc.states = ad::stack_rows(joined);
        enc.h = ad::concat(fwd_states.back(), bwd_states.front());
    } else {
        Tensor h = model.conv_in(x);
        for (const auto& layer : model.conv_stack) h = layer(h, cfg.dropout, dropout_rng);
        enc.states = h;
        enc.h = ad::mean_rows(h);
    }
    if (dropout_rng && cfg.dropout > 0.0)
        enc.states = ad::dropout(enc.states, cfg.dropout, *dropout_rng);
    if (cfg.attention) {
        enc.keys = model.att_key(enc.states);
        enc.values = model.att_value(enc.states);
    }
    return enc;
}

inline Tensor initial_decoder_state(const Seq2SeqModel& model, const EncodedWindow& enc) {
    return model.s0(enc.h);
}

struct DecodeStep {
    Tensor state;
    Tensor logits;            // c+1 slots
    Tensor attention_weights; // defined when attention is on
};

// One decoder step: the recurrent state folds in the previous token and the
// window summary; the output head sees the state, the summary, and the
// attention context.
inline DecodeStep decode_step(const Seq2SeqModel& model, const EncodedWindow& enc,
                              const Tensor& s_prev, int prev_token, Rng* dropout_rng = nullptr) {
    const auto& cfg = model.config;
    if (prev_token < 0 || prev_token >= cfg.num_classes + 2)
        throw ShapeError("decode: previous token out of range");
    const Tensor input = ad::concat(model.embed(prev_token), enc.h);
    const Tensor s = nn::gru_cell(input, s_prev, model.dec);
    Tensor head_in = ad::concat(s, enc.h);
    Tensor attn;
    if (cfg.attention) {
        const auto att = nn::attention(model.att_query(s), enc.keys, enc.values);
        head_in = ad::concat(head_in, att.context);
        attn = att.weights;
    }
    Tensor hidden = ad::relu(model.mlp_hidden(head_in));
    if (dropout_rng && cfg.dropout > 0.0) hidden = ad::dropout(hidden, cfg.dropout, *dropout_rng);
    return {s, model.mlp_out(hidden), attn};
}

inline int argmax_slot(const std::vector<double>& values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;  // ties resolve to the lowest index
}

// Maps an output-head slot to the token id fed back into the embedding.
inline int slot_to_token(int slot, int num_classes) {
    return slot == eos_slot(num_classes) ? num_classes + 1 : slot;
}

// Teacher-forced / scheduled-sampling loss for one window. `target_slots`
// lists the per-step targets ending with the end-of-sequence slot. With
// probability epsilon the fed previous token is the model's own argmax.
inline Tensor seq2seq_loss(const Seq2SeqModel& model, const EncodedWindow& enc,
                           const std::vector<int>& target_slots,
                           const std::vector<int>& frame_labels, double epsilon, Rng& rng,
                           Rng* dropout_rng = nullptr) {
    const auto& cfg = model.config;
    if (target_slots.empty()) throw ShapeError("seq2seq loss: empty target");
    if (target_slots.back() != eos_slot(cfg.num_classes))
        throw ShapeError("seq2seq loss: target must end with end-of-sequence");
    Tensor s = initial_decoder_state(model, enc);
    int prev_token = cfg.num_classes;  // start-of-sequence
    Tensor loss;
    for (std::size_t i = 0; i < target_slots.size(); ++i) {
        const DecodeStep step = decode_step(model, enc, s, prev_token, dropout_rng);
        const Tensor step_loss = ad::cross_entropy(step.logits, target_slots[i]);
        loss = loss.defined() ? ad::add(loss, step_loss) : step_loss;
        s = step.state;
        if (i + 1 < target_slots.size()) {
            int fed_slot = target_slots[i];
            if (epsilon > 0.0 && rng.bernoulli(epsilon)) fed_slot = argmax_slot(step.logits.value());
            prev_token = slot_to_token(fed_slot, cfg.num_classes);
        }
    }
    if (cfg.alpha_framewise > 0.0 && !frame_labels.empty()) {
        Tensor states = enc.states;
        if (static_cast<int>(frame_labels.size()) < states.dim(0))
            states = ad::slice_rows(states, 0, static_cast<int>(frame_labels.size()));
        const Tensor aux = ad::cross_entropy_rows(model.aux_head(states), frame_labels);
        loss = ad::add(loss, ad::scale(aux, cfg.alpha_framewise));
    }
    return loss;
}

// Greedy decoding: argmax at each step, stopping at end-of-sequence or the
// decode-length cap (which sets the truncation flag).
inline DecodeTrace greedy_decode(const Seq2SeqModel& model, const EncodedWindow& enc,
                                 int max_len = -1) {
    const auto& cfg = model.config;
    if (max_len < 0) max_len = cfg.max_decode_len;
    DecodeTrace trace;
    trace.num_classes = cfg.num_classes;
    Tensor s = initial_decoder_state(model, enc);
    int prev_token = cfg.num_classes;  // start-of-sequence
    for (int i = 0; i < max_len; ++i) {
        const DecodeStep step = decode_step(model, enc, s, prev_token);
        const Tensor probs = ad::softmax(step.logits);
        const int slot = argmax_slot(probs.value());
        trace.tokens.push_back(slot);
        trace.distributions.push_back(probs.value());
        if (step.attention_weights.defined())
            trace.attention_weights.push_back(step.attention_weights.value());
        if (slot == eos_slot(cfg.num_classes)) return trace;
        s = step.state;
        prev_token = slot_to_token(slot, cfg.num_classes);
    }
    trace.truncated = true;
    return trace;
}

// Ensemble decoding: the per-step distributions of all models are averaged
// and the argmax of the average is fed back to every model.
inline DecodeTrace ensemble_decode(const std::vector<const Seq2SeqModel*>& models,
                                   const std::vector<EncodedWindow>& encs, int max_len = -1) {
    if (models.empty()) throw ConfigError("ensemble: no models");
    if (models.size() != encs.size()) throw ShapeError("ensemble: model/window count mismatch");
    const auto& cfg = models.front()->config;
    for (const auto* m : models)
        if (m->config.num_classes != cfg.num_classes)
            throw ConfigError("ensemble: vocabulary mismatch");
    if (max_len < 0) max_len = cfg.max_decode_len;
    DecodeTrace trace;
    trace.num_classes = cfg.num_classes;
    std::vector<Tensor> states;
    for (std::size_t m = 0; m < models.size(); ++m)
        states.push_back(initial_decoder_state(*models[m], encs[m]));
    int prev_token = cfg.num_classes;
    for (int i = 0; i < max_len; ++i) {
        std::vector<double> avg(static_cast<std::size_t>(cfg.num_classes) + 1, 0.0);
        for (std::size_t m = 0; m < models.size(); ++m) {
            const DecodeStep step = decode_step(*models[m], encs[m], states[m], prev_token);
            const Tensor probs = ad::softmax(step.logits);
            for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += probs.value()[k];
            states[m] = step.state;
        }
        for (auto& v : avg) v /= static_cast<double>(models.size());
        const int slot = argmax_slot(avg);
        trace.tokens.push_back(slot);
        trace.distributions.push_back(avg);
        if (slot == eos_slot(cfg.num_classes)) return trace;
        prev_token = slot_to_token(slot, cfg.num_classes);
    }
    trace.truncated = true;
    return trace;
}

// Concatenates per-window sequences, dropping the leading token of a window
// when it repeats the trailing token of the output so far, then enforces
// canonical form. Empty window decodes contribute nothing.
inline ActionSequence stitch_window_sequences(const std::vector<ActionSequence>& windows) {
    std::vector<int> out;
    for (const auto& w : windows) {
        std::size_t start = 0;
        if (!out.empty() && !w.empty() && w[0] == out.back()) start = 1;
        for (std::size_t i = start; i < w.size(); ++i) out.push_back(w[i]);
    }
    std::vector<int> canonical;
    for (int v : out)
        if (canonical.empty() || canonical.back() != v) canonical.push_back(v);
    return ActionSequence(std::move(canonical));
}

// Cuts [0,T) into non-overlapping windows of the spec length; the last
// window is zero-padded back to full length.
inline std::vector<Tensor> inference_windows(const FeatureSequence& features, int window_len) {
    const int T = static_cast<int>(features.rows());
    const int D = static_cast<int>(features.dim());
    std::vector<Tensor> windows;
    for (int start = 0; start < std::max(T, 1); start += window_len) {
        std::vector<double> buf(static_cast<std::size_t>(window_len) * D, 0.0);
        const int valid = std::min(window_len, T - start);
        for (int t = 0; t < valid; ++t)
            for (int d = 0; d < D; ++d)
                buf[static_cast<std::size_t>(t) * D + d] = features.at(static_cast<std::size_t>(start + t), static_cast<std::size_t>(d));
        windows.push_back(Tensor::leaf({window_len, D}, std::move(buf), false));
    }
    return windows;
}

// Full-sequence inference: decode non-overlapping windows greedily (or as an
// ensemble) and stitch the estimates.
inline ActionSequence windowed_infer(const std::vector<const Seq2SeqModel*>& models,
                                     const FeatureSequence& features) {
    if (models.empty()) throw ConfigError("windowed inference: no models");
    const auto& cfg = models.front()->config;
    std::vector<ActionSequence> decoded;
    for (const Tensor& window : inference_windows(features, cfg.window.length)) {
        if (models.size() == 1) {
            const EncodedWindow enc = encode(*models.front(), window);
            decoded.push_back(greedy_decode(*models.front(), enc).sequence());
        } else {
            std::vector<EncodedWindow> encs;
            for (const auto* m : models) encs.push_back(encode(*m, window));
            decoded.push_back(ensemble_decode(models, encs).sequence());
        }
    }
    return stitch_window_sequences(decoded);
}

inline ActionSequence windowed_infer(const Seq2SeqModel& model, const FeatureSequence& features) {
    return windowed_infer(std::vector<const Seq2SeqModel*>{&model}, features);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainingWindow {
    Tensor features;                // window_len x D (tail zero-padded)
    std::vector<int> target_slots;  // label-span collapse plus end-of-sequence
    std::vector<int> frame_labels;  // valid rows only, for the auxiliary loss
};

// Materializes overlapping training windows. Targets cover the label span
// [start+margin, start+length-margin) clamped to the sequence.
inline std::vector<TrainingWindow> make_training_windows(const FeatureSequence& features,
                                                         const FrameLabeling& labels,
                                                         const WindowSpec& spec,
                                                         int num_classes) {
    spec.validate();
    const int T = static_cast<int>(features.rows());
    const int D = static_cast<int>(features.dim());
    // Strided starts cover the whole sequence; trailing windows are
    // zero-padded exactly like inference windows.
    std::vector<int> starts;
    for (int s = 0; s == 0 || s < T; s += spec.stride) {
        starts.push_back(s);
        if (s + spec.length >= T) break;
    }
    std::vector<TrainingWindow> windows;
    for (int start : starts) {
        TrainingWindow w;
        std::vector<double> buf(static_cast<std::size_t>(spec.length) * D, 0.0);
        const int valid = std::min(spec.length, T - start);
        for (int t = 0; t < valid; ++t)
            for (int d = 0; d < D; ++d)
                buf[static_cast<std::size_t>(t) * D + d] = features.at(static_cast<std::size_t>(start + t), static_cast<std::size_t>(d));
        w.features = Tensor::leaf({spec.length, D}, std::move(buf), false);

        const int span_lo = std::min(start + spec.margin, T);
        const int span_hi = std::max(span_lo, std::min(start + spec.length - spec.margin, T));
        std::vector<int> span(labels.labels.begin() + span_lo, labels.labels.begin() + span_hi);
        const ActionSequence target = collapse(FrameLabeling(std::move(span), labels.frame_rate));
        w.target_slots = target.items();
        w.target_slots.push_back(eos_slot(num_classes));
        w.frame_labels.assign(labels.labels.begin() + start, labels.labels.begin() + start + valid);
        windows.push_back(std::move(w));
    }
    return windows;
}

struct Seq2SeqTrainResult {
    Seq2SeqModel model;  // parameters of the best-validation epoch
    std::vector<segmenter::TrainLogEntry> log;
    int best_epoch = -1;
    double best_val_aer = 0.0;
};

struct TrainOptions {
    int epochs = 150;
    optim::AdamConfig adam;
    std::uint64_t seed = 0;
    double early_stop_train_aer = -1.0;  // < 0 disables
    bool log_eval_loss = false;          // teacher-forced loss in eval mode per epoch
};

inline double mean_split_aer(const Seq2SeqModel& model,
                             const std::vector<const LabeledSample*>& split) {
    double total = 0.0;
    for (const auto* s : split) {
        const FeatureSequence f = segmenter::prepared_features(*s, model.config.normalize_input);
        total += metrics::aer(s->sequence, windowed_infer(model, f));
    }
    return total / static_cast<double>(split.size());
}

// Trains on materialized windows (one optimizer step per window) with the
// scheduled-sampling ramp; returns the checkpoint whose validation AER,
// measured by full windowed inference, is minimal over epochs.
inline Seq2SeqTrainResult train_seq2seq(const std::vector<const LabeledSample*>& train,
                                        const std::vector<const LabeledSample*>& val,
                                        const Seq2SeqConfig& config, const TrainOptions& options) {
    if (train.empty()) throw ConfigError("seq2seq training: empty train set");
    config.validate();
    Rng rng(Rng::derive_seed(options.seed, 0x5359));
    Seq2SeqTrainResult result;
    result.model = Seq2SeqModel(config, rng);
    Seq2SeqModel& model = result.model;

    std::vector<TrainingWindow> windows;
    for (const auto* s : train) {
        const FeatureSequence f = segmenter::prepared_features(*s, config.normalize_input);
        auto sample_windows = make_training_windows(f, s->frame_labels, config.window,
                                                    config.num_classes);
        for (auto& w : sample_windows) windows.push_back(std::move(w));
    }
    if (windows.empty()) throw ConfigError("seq2seq training: no windows materialized");

    std::vector<Tensor> params = model.parameters();
    optim::AdamState opt_state;
    std::vector<std::vector<double>> best_values;
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        const double epsilon = config.epsilon.at(epoch, options.epochs);
        rng.shuffle(order);
        double loss_total = 0.0;
        for (std::size_t idx : order) {
            const TrainingWindow& w = windows[idx];
            try {
                const EncodedWindow enc = encode(model, w.features, &rng);
                const Tensor loss =
                    seq2seq_loss(model, enc, w.target_slots, w.frame_labels, epsilon, rng, &rng);
                ad::backward(loss);
                loss_total += loss.item();
            } catch (const NumericError& e) {
                throw NumericError("seq2seq training diverged at epoch " + std::to_string(epoch) +
                                   ": " + e.what());
            }
            optim::adam_step(params, opt_state, options.adam);
        }

        segmenter::TrainLogEntry entry;
        entry.epoch = epoch;
        entry.epsilon = epsilon;
        entry.train_loss = loss_total / static_cast<double>(windows.size());
        entry.val_aer = val.empty() ? 0.0 : mean_split_aer(model, val);
        if (options.early_stop_train_aer >= 0.0) entry.train_aer = mean_split_aer(model, train);
        if (options.log_eval_loss) {
            Rng unused(0);
            double eval_total = 0.0;
            for (const auto& w : windows) {
                const EncodedWindow enc = encode(model, w.features);
                eval_total += seq2seq_loss(model, enc, w.target_slots, w.frame_labels,
                                           /*epsilon=*/0.0, unused)
                                  .item();
            }
            entry.eval_loss = eval_total / static_cast<double>(windows.size());
        }
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

}  // namespace actseq::seq2seq
