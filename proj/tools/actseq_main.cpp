#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "actseq/harness.hpp"

namespace fs = std::filesystem;
using actseq::io::json;

namespace {

// Relative output paths resolve under ACTSEQ_OUT_DIR when it is set.
fs::path resolve_out(const std::string& path) {
    const char* base = std::getenv("ACTSEQ_OUT_DIR");
    fs::path p(path);
    if (base && *base && p.is_relative()) return fs::path(base) / p;
    return p;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    return actseq::io::read_json_file(path);
}

json section(const json& config, const char* key) {
    if (config.contains(key)) return config[key];
    return config;
}

struct SplitSamples {
    std::vector<const actseq::LabeledSample*> train, val, test;
};

SplitSamples split_samples(const actseq::io::Dataset& ds) {
    return {ds.split_samples("train"), ds.split_samples("val"), ds.split_samples("test")};
}

actseq::datagen::GeneratorConfig build_generator_config(const json& config,
                                                        const std::string& profile,
                                                        std::optional<std::uint64_t> seed) {
    json merged = section(config, "generator");
    if (!profile.empty()) merged["profile"] = profile;
    if (seed) merged["seed"] = *seed;
    return actseq::io::generator_config_from_json(merged);
}

int command_synth(const std::string& out, const json& config, const std::string& profile,
                  int count, std::optional<std::uint64_t> seed) {
    using namespace actseq;
    datagen::GeneratorConfig gen = build_generator_config(config, profile, seed);
    io::Dataset ds;
    ds.samples = datagen::generate(gen, count);
    ds.vocab = LabelVocab(harness::default_class_names(gen.num_classes));
    ds.feature_dim = static_cast<std::size_t>(gen.feature_dim);
    ds.frame_rate = gen.frame_rate;
    ds.meta_extra = io::to_json(gen);
    ds.splits = harness::split_by_group(ds.samples, {0.6, 0.2, 0.2}, gen.seed);
    const fs::path dir = resolve_out(out);
    io::write_dataset(dir, ds);
    std::printf("wrote %d sequences (%d classes, %d channels, %.0f fps) to %s\n", count,
                gen.num_classes, gen.feature_dim, gen.frame_rate, dir.string().c_str());
    std::printf("splits: %zu train / %zu val / %zu test\n", ds.splits.train.size(),
                ds.splits.val.size(), ds.splits.test.size());
    return 0;
}

int command_train(const std::string& system, const std::string& dataset_dir,
                  const std::string& out, const json& config, std::optional<std::uint64_t> seed,
                  std::optional<int> epochs, std::optional<double> lr,
                  const std::string& probs_dir) {
    using namespace actseq;
    const io::Dataset ds = io::read_dataset(dataset_dir);
    const SplitSamples splits = split_samples(ds);
    if (splits.train.empty()) throw ConfigError("train: dataset has an empty training split");

    json train_json = config.value("train", json::object());
    if (epochs) train_json["epochs"] = *epochs;
    if (lr) train_json["lr"] = *lr;
    const std::uint64_t train_seed = seed.value_or(train_json.value("seed", std::uint64_t{0}));
    const fs::path out_path = resolve_out(out);
    const fs::path log_path = out_path.parent_path() / (out_path.stem().string() + ".log.csv");
    if (!out_path.parent_path().empty()) fs::create_directories(out_path.parent_path());

    if (system == "segmenter") {
        segmenter::SegmenterConfig cfg = io::segmenter_config_from_json(section(config, "segmenter"));
        cfg.input_dim = static_cast<int>(ds.feature_dim);
        cfg.num_classes = ds.vocab.num_classes();
        if (cfg.class_weights.empty())
            cfg.class_weights = segmenter::median_frequency_weights(splits.train, cfg.num_classes);
        auto options = actseq::harness::train_options_from_json<segmenter::TrainOptions>(
            train_json, train_seed);
        const auto result = segmenter::train_segmenter(splits.train, splits.val, cfg, options);
        io::save_segmenter(out_path.string(), result.model);
        io::write_train_log_csv(log_path, result.log);
        std::printf("segmenter: best val AER %.4f at epoch %d; checkpoint %s\n",
                    result.best_val_aer, result.best_epoch, out_path.string().c_str());
        return 0;
    }
    if (system == "raw2seq" || system == "seg2seq") {
        seq2seq::Seq2SeqConfig cfg = io::seq2seq_config_from_json(section(config, "seq2seq"));
        cfg.num_classes = ds.vocab.num_classes();
        std::vector<LabeledSample> probs_samples;
        std::vector<const LabeledSample*> train_ptrs = splits.train, val_ptrs = splits.val;
        if (system == "raw2seq") {
            cfg.input = seq2seq::InputKind::raw_features;
            cfg.input_dim = static_cast<int>(ds.feature_dim);
        } else {
            if (probs_dir.empty())
                throw ConfigError("seg2seq training needs --probs (frame probabilities directory)");
            cfg.input = seq2seq::InputKind::frame_probs;
            cfg.input_dim = ds.vocab.num_classes();
            cfg.normalize_input = false;
            probs_samples.reserve(splits.train.size() + splits.val.size());
            auto convert = [&](const std::vector<const LabeledSample*>& split) {
                std::vector<const LabeledSample*> out_ptrs;
                for (const auto* s : split) {
                    const auto probs = io::read_probs_csv(
                        fs::path(probs_dir) / (s->id() + ".probs.csv"),
                        static_cast<std::size_t>(ds.vocab.num_classes()), ds.frame_rate);
                    if (probs.rows != s->frame_labels.size())
                        throw ShapeError("probs length mismatch for sample '" + s->id() + "'");
                    probs_samples.push_back(actseq::harness::probs_as_sample(*s, probs));
                    out_ptrs.push_back(&probs_samples.back());
                }
                return out_ptrs;
            };
            train_ptrs = convert(splits.train);
            val_ptrs = convert(splits.val);
        }
        auto options = actseq::harness::train_options_from_json<seq2seq::TrainOptions>(
            train_json, train_seed);
        const auto result = seq2seq::train_seq2seq(train_ptrs, val_ptrs, cfg, options);
        io::save_seq2seq(out_path.string(), result.model);
        io::write_train_log_csv(log_path, result.log);
        std::printf("%s: best val AER %.4f at epoch %d; checkpoint %s\n", system.c_str(),
                    result.best_val_aer, result.best_epoch, out_path.string().c_str());
        return 0;
    }
    throw ConfigError("train: unknown system '" + system + "'");
}

int command_infer(const std::vector<std::string>& checkpoints, const std::string& dataset_dir,
                  const std::string& split, const std::string& out, const std::string& refine,
                  std::optional<int> window, std::optional<double> threshold,
                  const std::string& export_probs, const std::string& probs_dir) {
    using namespace actseq;
    if (checkpoints.empty()) throw ConfigError("infer: needs at least one --checkpoint");
    const io::Dataset ds = io::read_dataset(dataset_dir);
    const auto samples = ds.split_samples(split);
    const json first = io::read_json_file(checkpoints.front());
    const std::string kind = io::checkpoint_model_kind(first);

    std::vector<std::pair<std::string, ActionSequence>> preds;
    if (kind == "segmenter") {
        std::vector<segmenter::SegmenterModel> models;
        models.push_back(io::load_segmenter(first));
        for (std::size_t i = 1; i < checkpoints.size(); ++i)
            models.push_back(io::load_segmenter(io::read_json_file(checkpoints[i])));
        if (!export_probs.empty()) fs::create_directories(resolve_out(export_probs));
        for (const auto* s : samples) {
            std::vector<segmenter::FrameProbs> per_model;
            for (const auto& m : models)
                per_model.push_back(m.infer(segmenter::prepared_features(*s, m.config.normalize_input)));
            const segmenter::FrameProbs probs = actseq::harness::average_probs(per_model);
            if (!export_probs.empty())
                io::write_probs_csv(resolve_out(export_probs) / (s->id() + ".probs.csv"), probs);
            FrameLabeling frames = probs.argmax_labeling();
            if (refine == "smoothing")
                frames = segmenter::smooth_refine(probs, window.value_or(15));
            else if (refine == "boundary")
                frames = segmenter::boundary_refine(probs, threshold.value_or(0.5));
            else if (refine != "none")
                throw ConfigError("infer: unknown refinement '" + refine + "'");
            preds.emplace_back(s->id(), collapse(frames));
        }
    } else if (kind == "seq2seq") {
        std::vector<seq2seq::Seq2SeqModel> models;
        models.push_back(io::load_seq2seq(first));
        for (std::size_t i = 1; i < checkpoints.size(); ++i)
            models.push_back(io::load_seq2seq(io::read_json_file(checkpoints[i])));
        std::vector<const seq2seq::Seq2SeqModel*> ptrs;
        for (const auto& m : models) ptrs.push_back(&m);
        const bool is_probs_input = models.front().config.input == seq2seq::InputKind::frame_probs;
        if (is_probs_input && probs_dir.empty())
            throw ConfigError("infer: frame-probability models need --probs (directory of "
                              "segmenter-exported CSVs)");
        for (const auto* s : samples) {
            FeatureSequence features = s->features;
            if (is_probs_input) {
                const auto probs = io::read_probs_csv(
                    fs::path(probs_dir) / (s->id() + ".probs.csv"),
                    static_cast<std::size_t>(models.front().config.num_classes), ds.frame_rate);
                features = actseq::harness::probs_as_sample(*s, probs).features;
            }
            const FeatureSequence prepared = models.front().config.normalize_input && !is_probs_input
                                                 ? datagen::normalize_per_sample(features)
                                                 : features;
            preds.emplace_back(s->id(), seq2seq::windowed_infer(ptrs, prepared));
        }
    } else {
        throw FormatError("infer: unsupported checkpoint kind '" + kind + "'");
    }
    const fs::path out_path = resolve_out(out);
    if (!out_path.parent_path().empty()) fs::create_directories(out_path.parent_path());
    io::write_predictions_jsonl(out_path, ds.vocab, preds);
    std::printf("wrote %zu predicted sequences to %s\n", preds.size(), out_path.string().c_str());
    return 0;
}

int command_eval(const std::string& predictions, const std::string& dataset_dir,
                 const std::string& split, const std::string& out_json, const std::string& out_csv,
                 int replicates, std::uint64_t seed) {
    using namespace actseq;
    const io::Dataset ds = io::read_dataset(dataset_dir);
    const auto samples = ds.split_samples(split);
    const auto preds = io::read_predictions_jsonl(predictions, ds.vocab);

    harness::SystemResult result;
    result.name = "eval";
    for (const auto* s : samples) {
        const ActionSequence* pred = nullptr;
        for (const auto& [id, seq] : preds)
            if (id == s->id()) pred = &seq;
        if (!pred) throw FormatError("eval: no prediction for sample '" + s->id() + "'");
        harness::SampleEval eval;
        eval.id = s->id();
        eval.group = s->group();
        eval.gt = s->sequence;
        eval.pred = *pred;
        result.samples.push_back(std::move(eval));
    }
    harness::fill_metric_report(result, replicates, seed);

    if (!out_json.empty())
        io::write_json_file(resolve_out(out_json).string(),
                            io::metric_report_to_json(result.report));
    if (!out_csv.empty()) {
        std::string csv;
        io::append_metric_csv_header(csv, result.report);
        io::append_metric_csv_row(csv, "eval", result.report);
        io::write_text_file(resolve_out(out_csv), csv);
    }
    for (const auto& e : result.report.entries)
        std::printf("%-12s %8.4f%s\n", e.name.c_str(), e.value,
                    e.ci ? ("  [" + io::format_double(e.ci->first) + ", " +
                            io::format_double(e.ci->second) + "]")
                               .c_str()
                         : "");
    return 0;
}

int command_count(const std::string& predictions, const std::string& dataset_dir,
                  const std::string& split, const std::string& out) {
    using namespace actseq;
    const io::Dataset ds = io::read_dataset(dataset_dir);
    const auto samples = ds.split_samples(split);
    const auto preds = io::read_predictions_jsonl(predictions, ds.vocab);
    std::vector<ActionSequence> gt, pred;
    std::vector<std::string> groups;
    for (const auto* s : samples) {
        const ActionSequence* p = nullptr;
        for (const auto& [id, seq] : preds)
            if (id == s->id()) p = &seq;
        if (!p) throw FormatError("count: no prediction for sample '" + s->id() + "'");
        gt.push_back(s->sequence);
        pred.push_back(*p);
        groups.push_back(s->group());
    }
    const auto report = harness::count_report(gt, pred, groups, ds.vocab.num_classes());
    io::write_text_file(resolve_out(out), harness::count_report_csv(report, ds.vocab, "eval"));
    std::printf("wrote per-group counts for %zu groups to %s\n", report.groups.size(),
                resolve_out(out).string().c_str());
    return 0;
}

int command_collapse(const std::string& labels_path, const std::string& meta_path) {
    using namespace actseq;
    const std::vector<int> labels = io::read_labels_csv(labels_path);
    const ActionSequence seq = collapse(FrameLabeling(labels, 1.0));
    json out = json::array();
    if (!meta_path.empty()) {
        const json meta = io::read_json_file(meta_path);
        io::check_format_version(meta, "dataset meta");
        const LabelVocab vocab(meta.at("classes").get<std::vector<std::string>>());
        for (int cls : seq) out.push_back(vocab.name(cls));
    } else {
        for (int cls : seq) out.push_back(std::to_string(cls));
    }
    std::printf("%s\n", out.dump().c_str());
    return 0;
}

int command_boundary_report(const std::string& checkpoint, const std::string& dataset_dir,
                            const std::string& split, const std::string& out,
                            double tolerance_s, double threshold) {
    using namespace actseq;
    const io::Dataset ds = io::read_dataset(dataset_dir);
    const auto samples = ds.split_samples(split);
    const auto model = io::load_segmenter(io::read_json_file(checkpoint));
    const int tolerance_frames = std::max(1, static_cast<int>(std::round(tolerance_s * ds.frame_rate)));
    auto buckets = metrics::make_duration_buckets(metrics::default_duration_edges());
    for (const auto* s : samples) {
        const auto probs = model.infer(segmenter::prepared_features(*s, model.config.normalize_input));
        std::vector<int> predicted;
        if (!probs.boundary.empty())
            predicted = segmenter::detect_boundaries(probs.boundary, threshold, 5);
        else
            predicted = boundaries_of(probs.argmax_labeling());
        metrics::accumulate_boundary_detection(s->frame_labels, predicted, tolerance_frames, buckets);
    }
    std::string csv = "duration_lo_s,duration_hi_s,total,detected,accuracy\n";
    for (const auto& b : buckets)
        csv += io::format_double(b.lo_seconds) + ',' + io::format_double(b.hi_seconds) + ',' +
               std::to_string(b.total) + ',' + std::to_string(b.detected) + ',' +
               (b.total > 0 ? io::format_double(b.accuracy()) : std::string()) + '\n';
    io::write_text_file(resolve_out(out), csv);
    std::printf("wrote boundary accuracy by duration to %s\n", resolve_out(out).string().c_str());
    return 0;
}

int command_run_plan(const std::string& plan_path, const std::string& out,
                     std::optional<std::uint64_t> seed) {
    using namespace actseq;
    json plan_json = io::read_json_file(plan_path);
    if (seed) plan_json["seed"] = *seed;
    const auto plan = harness::ExperimentPlan::from_json(plan_json);
    const auto run = harness::run_plan(plan, resolve_out(out));
    std::printf("%-10s %12s %10s %8s %8s\n", "system", "edit_score", "aer", "fdr", "f1");
    for (const auto& s : run.systems) {
        auto cell = [&](const char* name) {
            const auto* e = s.report.find(name);
            return e ? e->value : std::nan("");
        };
        std::printf("%-10s %12.2f %10.4f %8.4f %8.4f\n", s.name.c_str(), cell("edit_score"),
                    cell("aer"), cell("fdr"), cell("f1"));
    }
    std::printf("artifacts in %s\n", resolve_out(out).string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"actseq: identify sequences of short-duration actions in time series"};
    app.require_subcommand(1);

    std::string config_path, profile, dataset_dir, out, system, split = "test";
    std::string predictions, labels_path, meta_path, refine = "none", plan_path, probs_dir;
    std::string export_probs, out_json, out_csv;
    std::vector<std::string> checkpoints;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, window;
    std::optional<double> lr, threshold;
    int count = 40, replicates = 1000;
    double tolerance_s = 0.25, boundary_threshold = 0.5;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_option("--config", config_path, "JSON config file");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
    synth->add_option("--out", out, "dataset directory")->required();
    synth->add_option("--profile", profile, "generator profile (stroke-like)");
    synth->add_option("--n", count, "number of sequences");
    add_common(synth);

    auto* train = app.add_subcommand("train", "train a system and write its checkpoint");
    train->add_option("--system", system, "segmenter | raw2seq | seg2seq")->required();
    train->add_option("--dataset", dataset_dir, "dataset directory")->required();
    train->add_option("--out", out, "checkpoint path")->required();
    train->add_option("--epochs", epochs, "epoch override");
    train->add_option("--lr", lr, "learning-rate override");
    train->add_option("--probs", probs_dir, "frame-probability CSVs for seg2seq");
    add_common(train);

    auto* infer = app.add_subcommand("infer", "predict sequences for a dataset split");
    infer->add_option("--checkpoint", checkpoints, "checkpoint (repeat to ensemble)")->required();
    infer->add_option("--dataset", dataset_dir, "dataset directory")->required();
    infer->add_option("--split", split, "train | val | test");
    infer->add_option("--out", out, "predictions JSONL path")->required();
    infer->add_option("--refine", refine, "none | smoothing | boundary");
    infer->add_option("--window", window, "smoothing window (odd frames)");
    infer->add_option("--threshold", threshold, "boundary threshold");
    infer->add_option("--export-probs", export_probs, "directory for frame-probability CSVs");
    infer->add_option("--probs", probs_dir, "frame-probability CSVs for frame-prob models");
    add_common(infer);

    auto* eval = app.add_subcommand("eval", "score predictions against the ground truth");
    eval->add_option("--predictions", predictions, "predictions JSONL")->required();
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--split", split, "train | val | test");
    eval->add_option("--out-json", out_json, "metrics JSON path");
    eval->add_option("--out-csv", out_csv, "metrics CSV path");
    eval->add_option("--replicates", replicates, "bootstrap replicates");
    add_common(eval);

    auto* count_cmd = app.add_subcommand("count", "per-group class count comparison");
    count_cmd->add_option("--predictions", predictions, "predictions JSONL")->required();
    count_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    count_cmd->add_option("--split", split, "train | val | test");
    count_cmd->add_option("--out", out, "counts CSV path")->required();
    add_common(count_cmd);

    auto* collapse_cmd = app.add_subcommand("collapse", "collapse a frame-label CSV to a sequence");
    collapse_cmd->add_option("--labels", labels_path, "frame labels CSV")->required();
    collapse_cmd->add_option("--meta", meta_path, "dataset meta.json for class names");
    add_common(collapse_cmd);

    auto* boundary = app.add_subcommand("boundary-report",
                                        "boundary accuracy by action duration");
    boundary->add_option("--checkpoint", plan_path, "segmenter checkpoint")->required();
    boundary->add_option("--dataset", dataset_dir, "dataset directory")->required();
    boundary->add_option("--split", split, "train | val | test");
    boundary->add_option("--out", out, "report CSV path")->required();
    boundary->add_option("--tolerance-s", tolerance_s, "match tolerance in seconds");
    boundary->add_option("--threshold", boundary_threshold, "boundary peak threshold");
    add_common(boundary);

    auto* run = app.add_subcommand("run-plan", "execute an experiment plan");
    run->add_option("--plan", plan_path, "plan JSON path")->required();
    run->add_option("--out", out, "run directory")->required();
    add_common(run);

    CLI11_PARSE(app, argc, argv);

    try {
        const json config = load_config_file(config_path);
        if (synth->parsed()) return command_synth(out, config, profile, count, seed);
        if (train->parsed())
            return command_train(system, dataset_dir, out, config, seed, epochs, lr, probs_dir);
        if (infer->parsed())
            return command_infer(checkpoints, dataset_dir, split, out, refine, window, threshold,
                                 export_probs, probs_dir);
        if (eval->parsed())
            return command_eval(predictions, dataset_dir, split, out_json, out_csv, replicates,
                                seed.value_or(0));
        if (count_cmd->parsed()) return command_count(predictions, dataset_dir, split, out);
        if (collapse_cmd->parsed()) return command_collapse(labels_path, meta_path);
        if (boundary->parsed())
            return command_boundary_report(plan_path, dataset_dir, split, out, tolerance_s,
                                           boundary_threshold);
        if (run->parsed()) return command_run_plan(plan_path, out, seed);
    } catch (const actseq::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", actseq::to_string(e.category()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 2;
}
