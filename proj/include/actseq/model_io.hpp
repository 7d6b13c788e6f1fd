#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "actseq/checkpoint.hpp"
#include "actseq/dataset_io.hpp"
#include "actseq/datagen.hpp"
#include "actseq/segmenter.hpp"
#include "actseq/seq2seq.hpp"

namespace actseq::io {

// ---------------------------------------------------------------------------
// Config <-> JSON. Readers start from defaults so configs stay sparse.
// ---------------------------------------------------------------------------

inline json to_json(const segmenter::SegmenterConfig& c) {
    json j;
    j["input_dim"] = c.input_dim;
    j["num_classes"] = c.num_classes;
    j["stages"] = c.stages;
    j["layers_per_stage"] = c.layers_per_stage;
    j["channels"] = c.channels;
    j["boundary_head"] = c.boundary_head;
    j["lambda_boundary"] = c.lambda_boundary;
    j["class_weights"] = c.class_weights;
    j["boundary_widen"] = c.boundary_widen;
    j["dropout"] = c.dropout;
    j["normalize_input"] = c.normalize_input;
    return j;
}

inline segmenter::SegmenterConfig segmenter_config_from_json(const json& j) {
    segmenter::SegmenterConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.stages = j.value("stages", c.stages);
    c.layers_per_stage = j.value("layers_per_stage", c.layers_per_stage);
    c.channels = j.value("channels", c.channels);
    c.boundary_head = j.value("boundary_head", c.boundary_head);
    c.lambda_boundary = j.value("lambda_boundary", c.lambda_boundary);
    c.class_weights = j.value("class_weights", c.class_weights);
    c.boundary_widen = j.value("boundary_widen", c.boundary_widen);
    c.dropout = j.value("dropout", c.dropout);
    c.normalize_input = j.value("normalize_input", c.normalize_input);
    return c;
}

inline json to_json(const seq2seq::Seq2SeqConfig& c) {
    json j;
    j["input"] = seq2seq::to_string(c.input);
    j["encoder"] = seq2seq::to_string(c.encoder);
    j["input_dim"] = c.input_dim;
    j["num_classes"] = c.num_classes;
    j["enc_hidden"] = c.enc_hidden;
    j["dec_hidden"] = c.dec_hidden;
    j["conv_layers"] = c.conv_layers;
    j["conv_channels"] = c.conv_channels;
    j["attention"] = c.attention;
    j["attention_dim"] = c.attention_dim;
    j["max_decode_len"] = c.max_decode_len;
    j["alpha_framewise"] = c.alpha_framewise;
    j["dropout"] = c.dropout;
    j["normalize_input"] = c.normalize_input;
    j["window"] = {{"length", c.window.length}, {"stride", c.window.stride}, {"margin", c.window.margin}};
    j["epsilon"] = {{"start", c.epsilon.start}, {"end", c.epsilon.end}};
    return j;
}

inline seq2seq::Seq2SeqConfig seq2seq_config_from_json(const json& j) {
    seq2seq::Seq2SeqConfig c;
    const std::string input = j.value("input", std::string(seq2seq::to_string(c.input)));
    if (input == "raw_features")
        c.input = seq2seq::InputKind::raw_features;
    else if (input == "frame_probs")
        c.input = seq2seq::InputKind::frame_probs;
    else
        throw ConfigError("seq2seq config: unknown input kind '" + input + "'");
    const std::string encoder = j.value("encoder", std::string(seq2seq::to_string(c.encoder)));
    if (encoder == "bidirectional_gru")
        c.encoder = seq2seq::EncoderKind::bidirectional_gru;
    else if (encoder == "dilated_conv")
        c.encoder = seq2seq::EncoderKind::dilated_conv;
    else
        throw ConfigError("seq2seq config: unknown encoder kind '" + encoder + "'");
    c.input_dim = j.value("input_dim", c.input_dim);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.enc_hidden = j.value("enc_hidden", c.enc_hidden);
    c.dec_hidden = j.value("dec_hidden", c.dec_hidden);
    c.conv_layers = j.value("conv_layers", c.conv_layers);
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    c.attention = j.value("attention", c.attention);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
    c.alpha_framewise = j.value("alpha_framewise", c.alpha_framewise);
    c.dropout = j.value("dropout", c.dropout);
    c.normalize_input = j.value("normalize_input", c.normalize_input);
    if (j.contains("window")) {
        c.window.length = j["window"].value("length", c.window.length);
        c.window.stride = j["window"].value("stride", c.window.stride);
        c.window.margin = j["window"].value("margin", c.window.margin);
    }
    if (j.contains("epsilon")) {
        c.epsilon.start = j["epsilon"].value("start", c.epsilon.start);
        c.epsilon.end = j["epsilon"].value("end", c.epsilon.end);
    }
    return c;
}

inline json to_json(const datagen::GeneratorConfig& c) {
    json j;
    j["num_classes"] = c.num_classes;
    j["feature_dim"] = c.feature_dim;
    j["frame_rate"] = c.frame_rate;
    j["transition"] = c.transition;
    j["mean_duration_s"] = c.mean_duration_s;
    j["dispersion"] = c.dispersion;
    j["emission_mean"] = c.emission_mean;
    j["noise_sigma"] = c.noise_sigma;
    j["crossfade_frames"] = c.crossfade_frames;
    j["min_length"] = c.min_length;
    j["max_length"] = c.max_length;
    j["sequences_per_group"] = c.sequences_per_group;
    j["seed"] = c.seed;
    return j;
}

inline datagen::GeneratorConfig generator_config_from_json(const json& j) {
    datagen::GeneratorConfig c;
    if (j.contains("profile")) {
        const std::string profile = j["profile"].get<std::string>();
        if (profile == "stroke-like")
            c = datagen::stroke_like_profile(j.value("seed", std::uint64_t{0}));
        else
            throw ConfigError("generator config: unknown profile '" + profile + "'");
    }
    c.num_classes = j.value("num_classes", c.num_classes);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.frame_rate = j.value("frame_rate", c.frame_rate);
    c.transition = j.value("transition", c.transition);
    c.mean_duration_s = j.value("mean_duration_s", c.mean_duration_s);
    c.dispersion = j.value("dispersion", c.dispersion);
    c.emission_mean = j.value("emission_mean", c.emission_mean);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.crossfade_frames = j.value("crossfade_frames", c.crossfade_frames);
    c.min_length = j.value("min_length", c.min_length);
    c.max_length = j.value("max_length", c.max_length);
    c.sequences_per_group = j.value("sequences_per_group", c.sequences_per_group);
    c.seed = j.value("seed", c.seed);
    return c;
}

// ---------------------------------------------------------------------------
// Model checkpoints
// ---------------------------------------------------------------------------

inline void save_segmenter(const std::string& path, const segmenter::SegmenterModel& model) {
    const nn::NamedParams params = model.named_params();
    write_json_file(path, checkpoint_to_json("segmenter", to_json(model.config), params));
}

inline segmenter::SegmenterModel load_segmenter(const json& doc) {
    check_format_version(doc, "checkpoint");
    if (doc.value("model", "") != "segmenter") throw FormatError("checkpoint: not a segmenter model");
    Rng rng(0);
    segmenter::SegmenterModel model(segmenter_config_from_json(doc.at("config")), rng);
    nn::NamedParams params = model.named_params();
    load_params_from_json(doc, params);
    return model;
}

inline void save_seq2seq(const std::string& path, const seq2seq::Seq2SeqModel& model) {
    const nn::NamedParams params = model.named_params();
    write_json_file(path, checkpoint_to_json("seq2seq", to_json(model.config), params));
}

inline seq2seq::Seq2SeqModel load_seq2seq(const json& doc) {
    check_format_version(doc, "checkpoint");
    if (doc.value("model", "") != "seq2seq") throw FormatError("checkpoint: not a seq2seq model");
    Rng rng(0);
    seq2seq::Seq2SeqModel model(seq2seq_config_from_json(doc.at("config")), rng);
    nn::NamedParams params = model.named_params();
    load_params_from_json(doc, params);
    return model;
}

inline std::string checkpoint_model_kind(const json& doc) {
    check_format_version(doc, "checkpoint");
    return doc.value("model", "");
}

// ---------------------------------------------------------------------------
// Frame probabilities on disk: T rows, c class columns, plus one boundary
// column when the model carries a boundary head.
// ---------------------------------------------------------------------------

inline void write_probs_csv(const fs::path& path, const segmenter::FrameProbs& probs) {
    const std::size_t extra = probs.boundary.empty() ? 0 : 1;
    std::vector<double> data(probs.rows * (probs.classes + extra));
    for (std::size_t t = 0; t < probs.rows; ++t) {
        for (std::size_t c = 0; c < probs.classes; ++c)
            data[t * (probs.classes + extra) + c] = probs.probs[t * probs.classes + c];
        if (extra) data[t * (probs.classes + extra) + probs.classes] = probs.boundary[t];
    }
    write_matrix_csv(path, data, probs.rows, probs.classes + extra);
}

inline segmenter::FrameProbs read_probs_csv(const fs::path& path, std::size_t num_classes,
                                            double frame_rate) {
    const Matrix m = read_matrix_csv(path);
    if (m.cols != num_classes && m.cols != num_classes + 1)
        throw ShapeError(path.string() + ": expected " + std::to_string(num_classes) +
                         " class columns (+ optional boundary)");
    segmenter::FrameProbs probs;
    probs.rows = m.rows;
    probs.classes = num_classes;
    probs.frame_rate = frame_rate;
    probs.probs.resize(m.rows * num_classes);
    const bool has_boundary = m.cols == num_classes + 1;
    if (has_boundary) probs.boundary.resize(m.rows);
    for (std::size_t t = 0; t < m.rows; ++t) {
        for (std::size_t c = 0; c < num_classes; ++c)
            probs.probs[t * num_classes + c] = m.data[t * m.cols + c];
        if (has_boundary) probs.boundary[t] = m.data[t * m.cols + num_classes];
    }
    probs.validate();
    return probs;
}

// Training log as CSV (one row per epoch; absent values print as -1).
inline void write_train_log_csv(const fs::path& path,
                                const std::vector<segmenter::TrainLogEntry>& log) {
    std::string out = "epoch,train_loss,train_frame_accuracy,val_aer,train_aer,eval_loss,epsilon\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch);
        out += ',' + format_double(e.train_loss);
        out += ',' + format_double(e.train_frame_accuracy);
        out += ',' + format_double(e.val_aer);
        out += ',' + format_double(e.train_aer);
        out += ',' + format_double(e.eval_loss);
        out += ',' + format_double(e.epsilon);
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace actseq::io
