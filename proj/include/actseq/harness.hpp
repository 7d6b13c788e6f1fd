#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "actseq/core.hpp"
#include "actseq/datagen.hpp"
#include "actseq/dataset_io.hpp"
#include "actseq/metrics.hpp"
#include "actseq/model_io.hpp"
#include "actseq/segmenter.hpp"
#include "actseq/seq2seq.hpp"

namespace actseq::harness {

using io::json;
namespace fs = std::filesystem;

inline std::vector<std::string> default_class_names(int c) {
    // the five functional primitives for the benchmark profile, generic
    // names otherwise
    if (c == 5) return {"idle", "reach", "reposition", "transport", "stabilize"};
    std::vector<std::string> names;
    for (int i = 0; i < c; ++i) names.push_back("c" + std::to_string(i));
    return names;
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

struct SystemSpec {
    std::string name;  // baseline | smoothing | boundary | seg2seq | raw2seq | oracle | empty
    json options = json::object();
};

struct ExperimentPlan {
    json dataset;  // {"path": dir} or {"generator": {...}, "count": n}
    std::string split_policy = "meta";  // "meta" or "fractions" (by group)
    std::array<double, 3> fractions{0.6, 0.2, 0.2};
    std::vector<SystemSpec> systems;
    int bootstrap_replicates = 1000;
    int folds = 1;  // > 1 trains per-fold models and ensembles them
    std::uint64_t seed = 0;
    json segmenter_config = json::object();  // shared segmentation backbone
    json train = json::object();             // epochs / lr / weight_decay / early stop

    static ExperimentPlan from_json(const json& j) {
        ExperimentPlan plan;
        if (!j.contains("dataset")) throw ConfigError("plan: missing dataset");
        plan.dataset = j["dataset"];
        if (j.contains("split")) {
            plan.split_policy = j["split"].value("policy", plan.split_policy);
            if (j["split"].contains("fractions")) {
                const auto f = j["split"]["fractions"].get<std::vector<double>>();
                if (f.size() != 3) throw ConfigError("plan: fractions must have three entries");
                plan.fractions = {f[0], f[1], f[2]};
            }
        }
        if (plan.split_policy != "meta" && plan.split_policy != "fractions")
            throw ConfigError("plan: unknown split policy '" + plan.split_policy + "'");
        plan.bootstrap_replicates = j.value("bootstrap_replicates", plan.bootstrap_replicates);
        plan.folds = j.value("folds", plan.folds);
        if (plan.folds < 1) throw ConfigError("plan: folds must be >= 1");
        plan.seed = j.value("seed", plan.seed);
        plan.segmenter_config = j.value("segmenter", json::object());
        plan.train = j.value("train", json::object());
        if (!j.contains("systems") || !j["systems"].is_array() || j["systems"].empty())
            throw ConfigError("plan: needs at least one system");
        std::set<std::string> seen;
        for (const auto& s : j["systems"]) {
            SystemSpec spec;
            if (s.is_string()) {
                spec.name = s.get<std::string>();
            } else {
                spec.name = s.value("name", "");
                spec.options = s;
            }
            static const std::set<std::string> known{"baseline", "smoothing", "boundary",
                                                     "seg2seq", "raw2seq", "oracle", "empty"};
            if (!known.count(spec.name)) throw ConfigError("plan: unknown system '" + spec.name + "'");
            if (!seen.insert(spec.name).second)
                throw ConfigError("plan: system '" + spec.name + "' listed twice");
            plan.systems.push_back(std::move(spec));
        }
        return plan;
    }

    json to_json() const {
        json j;
        j["format_version"] = io::kFormatVersion;
        j["dataset"] = dataset;
        j["split"] = {{"policy", split_policy},
                      {"fractions", std::vector<double>{fractions[0], fractions[1], fractions[2]}}};
        j["bootstrap_replicates"] = bootstrap_replicates;
        j["folds"] = folds;
        j["seed"] = seed;
        j["segmenter"] = segmenter_config;
        j["train"] = train;
        json systems_json = json::array();
        for (const auto& s : systems) {
            json e = s.options.is_object() && !s.options.empty() ? s.options : json::object();
            e["name"] = s.name;
            systems_json.push_back(std::move(e));
        }
        j["systems"] = std::move(systems_json);
        return j;
    }
};

// Splits sample ids into train/val/test by group key so no group leaks
// across splits.
inline io::DatasetSplits split_by_group(const std::vector<LabeledSample>& samples,
                                        const std::array<double, 3>& fractions,
                                        std::uint64_t seed) {
    double total = fractions[0] + fractions[1] + fractions[2];
    if (total <= 0.0) throw ConfigError("split: fractions must be positive");
    std::vector<std::string> groups;
    for (const auto& s : samples)
        if (std::find(groups.begin(), groups.end(), s.group()) == groups.end())
            groups.push_back(s.group());
    if (groups.size() < 3) throw ConfigError("split: needs at least three groups");
    Rng rng(Rng::derive_seed(seed, 0x5B17));
    rng.shuffle(groups);
    const auto n = static_cast<double>(groups.size());
    std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(n * fractions[2] / total)));
    std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(n * fractions[1] / total)));
    if (n_test + n_val >= groups.size()) {
        n_test = 1;
        n_val = 1;
    }
    std::set<std::string> test_groups(groups.end() - static_cast<std::ptrdiff_t>(n_test), groups.end());
    std::set<std::string> val_groups(groups.end() - static_cast<std::ptrdiff_t>(n_test + n_val),
                                     groups.end() - static_cast<std::ptrdiff_t>(n_test));
    io::DatasetSplits splits;
    for (const auto& s : samples) {
        if (test_groups.count(s.group()))
            splits.test.push_back(s.id());
        else if (val_groups.count(s.group()))
            splits.val.push_back(s.id());
        else
            splits.train.push_back(s.id());
    }
    if (splits.train.empty()) throw ConfigError("split: empty training split");
    return splits;
}

inline io::Dataset resolve_dataset(const ExperimentPlan& plan) {
    if (plan.dataset.contains("path")) {
        io::Dataset ds = io::read_dataset(plan.dataset["path"].get<std::string>());
        if (plan.split_policy == "fractions")
            ds.splits = split_by_group(ds.samples, plan.fractions, plan.seed);
        return ds;
    }
    if (!plan.dataset.contains("generator"))
        throw ConfigError("plan: dataset needs a 'path' or a 'generator'");
    datagen::GeneratorConfig gen = io::generator_config_from_json(plan.dataset["generator"]);
    const int count = plan.dataset.value("count", 40);
    io::Dataset ds;
    ds.samples = datagen::generate(gen, count);
    ds.vocab = LabelVocab(default_class_names(gen.num_classes));
    ds.feature_dim = static_cast<std::size_t>(gen.feature_dim);
    ds.frame_rate = gen.frame_rate;
    ds.meta_extra = io::to_json(gen);
    ds.splits = split_by_group(ds.samples, plan.fractions, plan.seed);
    return ds;
}

// ---------------------------------------------------------------------------
// Count report (per-group ground-truth vs predicted class counts)
// ---------------------------------------------------------------------------

struct CountReport {
    std::vector<std::string> groups;
    std::vector<std::vector<long>> gt;    // group x class
    std::vector<std::vector<long>> pred;  // group x class
    std::vector<double> gt_mean, gt_stddev, pred_mean, pred_stddev;
};

inline CountReport count_report(const std::vector<ActionSequence>& gt_seqs,
                                const std::vector<ActionSequence>& pred_seqs,
                                const std::vector<std::string>& group_keys, int num_classes) {
    if (gt_seqs.size() != pred_seqs.size() || gt_seqs.size() != group_keys.size())
        throw ShapeError("count report: list lengths disagree");
    CountReport report;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < gt_seqs.size(); ++i) {
        auto [it, inserted] = index.emplace(group_keys[i], report.groups.size());
        if (inserted) {
            report.groups.push_back(group_keys[i]);
            report.gt.emplace_back(static_cast<std::size_t>(num_classes), 0);
            report.pred.emplace_back(static_cast<std::size_t>(num_classes), 0);
        }
        const auto g = metrics::class_counts(gt_seqs[i], num_classes);
        const auto p = metrics::class_counts(pred_seqs[i], num_classes);
        for (int k = 0; k < num_classes; ++k) {
            report.gt[it->second][static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(k)];
            report.pred[it->second][static_cast<std::size_t>(k)] += p[static_cast<std::size_t>(k)];
        }
    }
    auto summarize = [&](const std::vector<std::vector<long>>& rows, std::vector<double>& mean,
                         std::vector<double>& stddev) {
        mean.assign(static_cast<std::size_t>(num_classes), 0.0);
        stddev.assign(static_cast<std::size_t>(num_classes), 0.0);
        const double n = static_cast<double>(rows.size());
        for (const auto& row : rows)
            for (int k = 0; k < num_classes; ++k) mean[static_cast<std::size_t>(k)] += static_cast<double>(row[static_cast<std::size_t>(k)]);
        for (auto& m : mean) m /= n;
        for (const auto& row : rows)
            for (int k = 0; k < num_classes; ++k) {
                const double d = static_cast<double>(row[static_cast<std::size_t>(k)]) - mean[static_cast<std::size_t>(k)];
                stddev[static_cast<std::size_t>(k)] += d * d;
            }
        for (auto& s : stddev) s = std::sqrt(s / n);
    };
    summarize(report.gt, report.gt_mean, report.gt_stddev);
    summarize(report.pred, report.pred_mean, report.pred_stddev);
    return report;
}

inline std::string count_report_csv(const CountReport& report, const LabelVocab& vocab,
                                    const std::string& system) {
    std::string out;
    out += "system,group";
    for (const auto& c : vocab.classes()) out += ",gt_" + c;
    for (const auto& c : vocab.classes()) out += ",pred_" + c;
    for (const auto& c : vocab.classes()) out += ",relerr_" + c;
    out += '\n';
    auto row = [&](const std::string& label, const std::vector<double>& gt,
                   const std::vector<double>& pred) {
        out += io::csv_quote(system) + ',' + io::csv_quote(label);
        for (double v : gt) out += ',' + io::format_double(v);
        for (double v : pred) out += ',' + io::format_double(v);
        for (std::size_t k = 0; k < gt.size(); ++k)
            out += ',' + (gt[k] > 0.0 ? io::format_double((pred[k] - gt[k]) / gt[k]) : std::string());
        out += '\n';
    };
    for (std::size_t g = 0; g < report.groups.size(); ++g) {
        std::vector<double> gt(report.gt[g].begin(), report.gt[g].end());
        std::vector<double> pred(report.pred[g].begin(), report.pred[g].end());
        row(report.groups[g], gt, pred);
    }
    row("mean", report.gt_mean, report.pred_mean);
    // std-dev rows mirror the per-class spread, no relative error
    out += io::csv_quote(system) + ",stddev";
    for (double v : report.gt_stddev) out += ',' + io::format_double(v);
    for (double v : report.pred_stddev) out += ',' + io::format_double(v);
    for (std::size_t k = 0; k < report.gt_stddev.size(); ++k) out += ',';
    out += '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Per-system evaluation
// ---------------------------------------------------------------------------

struct SampleEval {
    std::string id;
    std::string group;
    ActionSequence gt;
    ActionSequence pred;
    std::optional<FrameLabeling> pred_frames;  // segmentation systems only
    double frame_accuracy = -1.0;              // -1 when not applicable
};

struct SystemResult {
    std::string name;
    metrics::MetricReport report;
    std::vector<SampleEval> samples;
    metrics::DurationBucketReport boundary_buckets;  // empty if not applicable
    std::vector<std::vector<double>> confusion;      // c x c, rows / gt totals
    json resolved_options = json::object();
    std::vector<segmenter::TrainLogEntry> train_log;
};

inline std::vector<std::vector<double>> confusion_from_samples(
    const std::vector<SampleEval>& samples, int num_classes) {
    std::vector<std::vector<long>> counts(static_cast<std::size_t>(num_classes),
                                          std::vector<long>(static_cast<std::size_t>(num_classes), 0));
    std::vector<long> gt_totals(static_cast<std::size_t>(num_classes), 0);
    for (const auto& s : samples) {
        for (int cls : s.gt) ++gt_totals[static_cast<std::size_t>(cls)];
        for (const auto& step : metrics::align_trace(s.gt, s.pred)) {
            if (step.op == metrics::AlignOp::match || step.op == metrics::AlignOp::substitute)
                ++counts[static_cast<std::size_t>(step.gt_class)][static_cast<std::size_t>(step.pred_class)];
        }
    }
    std::vector<std::vector<double>> normalized(static_cast<std::size_t>(num_classes),
                                                std::vector<double>(static_cast<std::size_t>(num_classes), 0.0));
    for (int g = 0; g < num_classes; ++g)
        for (int p = 0; p < num_classes; ++p)
            if (gt_totals[static_cast<std::size_t>(g)] > 0)
                normalized[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)] =
                    static_cast<double>(counts[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)]) /
                    static_cast<double>(gt_totals[static_cast<std::size_t>(g)]);
    return normalized;
}

// Builds the metric report: ES/AER/TPR/FDR/F1 bootstrap intervals over the
// per-sample values, frame accuracy when frame predictions exist. Samples
// where a ratio is undefined (empty prediction for FDR/F1) are skipped for
// that ratio; the entry is omitted when no sample defines it.
inline void fill_metric_report(SystemResult& result, int bootstrap_replicates,
                               std::uint64_t seed) {
    std::vector<double> es, aer_values, tpr, fdr, f1, frame_acc;
    for (const auto& s : result.samples) {
        es.push_back(metrics::edit_score(s.gt, s.pred));
        if (!s.gt.empty()) aer_values.push_back(metrics::aer(s.gt, s.pred));
        const auto counts = metrics::align(s.gt, s.pred);
        if (counts.gt_length() > 0)
            tpr.push_back(static_cast<double>(counts.correct) / static_cast<double>(counts.gt_length()));
        if (counts.pred_length() > 0) {
            const double sample_fdr = static_cast<double>(counts.substituted + counts.spurious) /
                                      static_cast<double>(counts.pred_length());
            fdr.push_back(sample_fdr);
            if (counts.gt_length() > 0) {
                const double sample_tpr = static_cast<double>(counts.correct) /
                                          static_cast<double>(counts.gt_length());
                const double denom = (1.0 - sample_fdr) + sample_tpr;
                f1.push_back(denom == 0.0 ? 0.0 : 2.0 * (1.0 - sample_fdr) * sample_tpr / denom);
            }
        }
        if (s.frame_accuracy >= 0.0) frame_acc.push_back(s.frame_accuracy);
    }
    std::uint64_t k = 0;
    auto add = [&](const char* name, const std::vector<double>& values) {
        ++k;
        if (values.empty()) return;
        result.report.set(name, metrics::bootstrap_ci(values, bootstrap_replicates,
                                                      Rng::derive_seed(seed, 0xB0075 + k)));
    };
    add("edit_score", es);
    add("aer", aer_values);
    add("tpr", tpr);
    add("fdr", fdr);
    add("f1", f1);
    add("framewise_accuracy", frame_acc);
}

// ---------------------------------------------------------------------------
// Plan execution
// ---------------------------------------------------------------------------

struct RunResult {
    io::Dataset dataset;
    std::vector<SystemResult> systems;

    const SystemResult& system(const std::string& name) const {
        for (const auto& s : systems)
            if (s.name == name) return s;
        throw ConfigError("run result: no system named '" + name + "'");
    }
};

template <typename Options>
Options train_options_from_json(const json& t, std::uint64_t seed) {
    Options options;
    options.epochs = t.value("epochs", 150);
    options.adam.lr = t.value("lr", 5e-4);
    options.adam.weight_decay = t.value("weight_decay", 1e-4);
    options.seed = seed;
    options.early_stop_train_aer = t.value("early_stop_train_aer", -1.0);
    return options;
}

namespace detail {

inline json merged_train(const json& base, const json& override_json) {
    json merged = base;
    for (auto it = override_json.begin(); it != override_json.end(); ++it)
        merged[it.key()] = it.value();
    return merged;
}

// Round-robin fold assignment over groups, seeded.
inline std::vector<std::vector<const LabeledSample*>> fold_partition(
    const std::vector<const LabeledSample*>& train, int folds, std::uint64_t seed) {
    std::vector<std::string> groups;
    for (const auto* s : train)
        if (std::find(groups.begin(), groups.end(), s->group()) == groups.end())
            groups.push_back(s->group());
    Rng rng(Rng::derive_seed(seed, 0xF01D));
    rng.shuffle(groups);
    std::map<std::string, int> fold_of;
    for (std::size_t i = 0; i < groups.size(); ++i) fold_of[groups[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    std::vector<std::vector<const LabeledSample*>> parts(static_cast<std::size_t>(folds));
    for (const auto* s : train) parts[static_cast<std::size_t>(fold_of[s->group()])].push_back(s);
    return parts;
}

}  // namespace detail

// Averages per-fold frame probabilities (paper-style segmentation ensembling).
inline segmenter::FrameProbs average_probs(const std::vector<segmenter::FrameProbs>& per_model) {
    segmenter::FrameProbs avg = per_model.front();
    for (std::size_t m = 1; m < per_model.size(); ++m) {
        const auto& p = per_model[m];
        if (p.rows != avg.rows || p.classes != avg.classes)
            throw ShapeError("probability ensembling: shape mismatch");
        for (std::size_t i = 0; i < avg.probs.size(); ++i) avg.probs[i] += p.probs[i];
        for (std::size_t i = 0; i < avg.boundary.size(); ++i) avg.boundary[i] += p.boundary[i];
    }
    const double inv = 1.0 / static_cast<double>(per_model.size());
    for (auto& v : avg.probs) v *= inv;
    for (auto& v : avg.boundary) v *= inv;
    return avg;
}

inline LabeledSample probs_as_sample(const LabeledSample& source,
                                     const segmenter::FrameProbs& probs) {
    FeatureSequence features(probs.rows, probs.classes, probs.probs,
                             source.features.frame_rate(), source.features.metadata());
    LabeledSample out;
    out.features = std::move(features);
    out.frame_labels = source.frame_labels;
    out.sequence = source.sequence;
    return out;
}

inline RunResult run_plan(const ExperimentPlan& plan, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    RunResult run;
    run.dataset = resolve_dataset(plan);
    const io::Dataset& ds = run.dataset;
    const int c = ds.vocab.num_classes();
    const auto train_set = ds.split_samples("train");
    const auto val_set = ds.split_samples("val");
    const auto test_set = ds.split_samples("test");
    if (train_set.empty() || test_set.empty()) throw ConfigError("plan: empty train or test split");

    io::write_json_file((out_dir / "plan.json").string(), plan.to_json());

    const bool wants_segmentation =
        std::any_of(plan.systems.begin(), plan.systems.end(), [](const SystemSpec& s) {
            return s.name == "baseline" || s.name == "smoothing" || s.name == "boundary" ||
                   s.name == "seg2seq";
        });
    const bool wants_boundary =
        std::any_of(plan.systems.begin(), plan.systems.end(),
                    [](const SystemSpec& s) { return s.name == "boundary"; });

    // One shared segmentation backbone serves baseline, both refinements and
    // the seg2seq inputs; per-fold copies when folds > 1.
    std::vector<segmenter::SegmenterModel> seg_models;
    std::vector<segmenter::TrainLogEntry> seg_log;
    if (wants_segmentation) {
        segmenter::SegmenterConfig cfg = io::segmenter_config_from_json(plan.segmenter_config);
        cfg.input_dim = static_cast<int>(ds.feature_dim);
        cfg.num_classes = c;
        if (wants_boundary) cfg.boundary_head = true;
        if (cfg.class_weights.empty())
            cfg.class_weights = segmenter::median_frequency_weights(train_set, c);
        const auto options = train_options_from_json<segmenter::TrainOptions>(
            plan.train, Rng::derive_seed(plan.seed, 0x5E65));
        if (plan.folds == 1) {
            auto result = segmenter::train_segmenter(train_set, val_set, cfg, options);
            seg_log = result.log;
            seg_models.push_back(std::move(result.model));
        } else {
            const auto parts = detail::fold_partition(train_set, plan.folds, plan.seed);
            for (int f = 0; f < plan.folds; ++f) {
                std::vector<const LabeledSample*> fold_train;
                for (int g = 0; g < plan.folds; ++g)
                    if (g != f)
                        fold_train.insert(fold_train.end(), parts[static_cast<std::size_t>(g)].begin(),
                                          parts[static_cast<std::size_t>(g)].end());
                auto fold_options = options;
                fold_options.seed = Rng::derive_seed(options.seed, static_cast<std::uint64_t>(f));
                auto result = segmenter::train_segmenter(
                    fold_train, parts[static_cast<std::size_t>(f)], cfg, fold_options);
                if (f == 0) seg_log = result.log;
                seg_models.push_back(std::move(result.model));
            }
        }
    }

    auto ensemble_probs = [&](const LabeledSample& sample) {
        std::vector<segmenter::FrameProbs> per_model;
        for (const auto& m : seg_models)
            per_model.push_back(m.infer(segmenter::prepared_features(sample, m.config.normalize_input)));
        return average_probs(per_model);
    };

    std::map<std::string, segmenter::FrameProbs> probs_cache;
    auto cached_probs = [&](const LabeledSample& sample) -> const segmenter::FrameProbs& {
        auto it = probs_cache.find(sample.id());
        if (it == probs_cache.end()) it = probs_cache.emplace(sample.id(), ensemble_probs(sample)).first;
        return it->second;
    };

    const int boundary_tolerance_frames =
        std::max(1, static_cast<int>(std::round(0.25 * ds.frame_rate)));

    auto make_eval = [&](const LabeledSample& sample, ActionSequence pred,
                         std::optional<FrameLabeling> frames) {
        SampleEval eval;
        eval.id = sample.id();
        eval.group = sample.group();
        eval.gt = sample.sequence;
        eval.pred = std::move(pred);
        if (frames) {
            eval.frame_accuracy = metrics::framewise_accuracy(sample.frame_labels, *frames);
            eval.pred_frames = std::move(frames);
        }
        return eval;
    };

    for (std::size_t sys_index = 0; sys_index < plan.systems.size(); ++sys_index) {
        const SystemSpec& spec = plan.systems[sys_index];
        SystemResult result;
        result.name = spec.name;
        const std::uint64_t metric_seed = Rng::derive_seed(plan.seed, 0xE7A1 + sys_index);

        if (spec.name == "oracle") {
            for (const auto* s : test_set) result.samples.push_back(make_eval(*s, s->sequence, s->frame_labels));
        } else if (spec.name == "empty") {
            for (const auto* s : test_set) result.samples.push_back(make_eval(*s, ActionSequence(), std::nullopt));
        } else if (spec.name == "baseline") {
            for (const auto* s : test_set) {
                const auto& probs = cached_probs(*s);
                FrameLabeling frames = probs.argmax_labeling();
                ActionSequence seq = collapse(frames);
                result.samples.push_back(make_eval(*s, std::move(seq), std::move(frames)));
            }
            result.train_log = seg_log;
        } else if (spec.name == "smoothing") {
            std::vector<int> windows = spec.options.value("windows", std::vector<int>{5, 9, 15, 21});
            if (windows.empty()) throw ConfigError("smoothing: empty window sweep");
            int best_window = windows.front();
            double best_val = std::numeric_limits<double>::infinity();
            for (int w : windows) {
                double total = 0.0;
                for (const auto* s : val_set)
                    total += metrics::aer(s->sequence, collapse(segmenter::smooth_refine(cached_probs(*s), w)));
                const double mean_val = val_set.empty() ? 0.0 : total / static_cast<double>(val_set.size());
                if (mean_val < best_val) {
                    best_val = mean_val;
                    best_window = w;
                }
            }
            result.resolved_options["window"] = best_window;
            for (const auto* s : test_set) {
                FrameLabeling frames = segmenter::smooth_refine(cached_probs(*s), best_window);
                ActionSequence seq = collapse(frames);
                result.samples.push_back(make_eval(*s, std::move(seq), std::move(frames)));
            }
        } else if (spec.name == "boundary") {
            std::vector<double> thresholds =
                spec.options.value("thresholds", std::vector<double>{0.3, 0.5, 0.7});
            if (thresholds.empty()) throw ConfigError("boundary: empty threshold sweep");
            const int nms = spec.options.value("nms_radius", 5);
            double best_threshold = thresholds.front();
            double best_val = std::numeric_limits<double>::infinity();
            for (double th : thresholds) {
                double total = 0.0;
                for (const auto* s : val_set)
                    total += metrics::aer(s->sequence,
                                          collapse(segmenter::boundary_refine(cached_probs(*s), th, nms)));
                const double mean_val = val_set.empty() ? 0.0 : total / static_cast<double>(val_set.size());
                if (mean_val < best_val) {
                    best_val = mean_val;
                    best_threshold = th;
                }
            }
            result.resolved_options["threshold"] = best_threshold;
            result.resolved_options["nms_radius"] = nms;
            for (const auto* s : test_set) {
                FrameLabeling frames = segmenter::boundary_refine(cached_probs(*s), best_threshold, nms);
                ActionSequence seq = collapse(frames);
                result.samples.push_back(make_eval(*s, std::move(seq), std::move(frames)));
            }
        } else if (spec.name == "raw2seq" || spec.name == "seg2seq") {
            seq2seq::Seq2SeqConfig cfg = io::seq2seq_config_from_json(spec.options.value("config", json::object()));
            cfg.num_classes = c;
            if (spec.name == "raw2seq") {
                cfg.input = seq2seq::InputKind::raw_features;
                cfg.input_dim = static_cast<int>(ds.feature_dim);
            } else {
                cfg.input = seq2seq::InputKind::frame_probs;
                cfg.input_dim = c;
                cfg.normalize_input = false;
                if (!spec.options.contains("config") ||
                    !spec.options["config"].contains("alpha_framewise"))
                    cfg.alpha_framewise = 0.0;
            }
            const auto options = train_options_from_json<seq2seq::TrainOptions>(
                detail::merged_train(plan.train, spec.options.value("train", json::object())),
                Rng::derive_seed(plan.seed, 0x52A3 + sys_index));

            // materialize the input view (raw features or segmenter probs)
            std::vector<LabeledSample> probs_samples;
            std::vector<const LabeledSample*> s2s_train = train_set, s2s_val = val_set, s2s_test = test_set;
            if (spec.name == "seg2seq") {
                probs_samples.reserve(train_set.size() + val_set.size() + test_set.size());
                auto convert = [&](const std::vector<const LabeledSample*>& split) {
                    std::vector<const LabeledSample*> out;
                    for (const auto* s : split) {
                        probs_samples.push_back(probs_as_sample(*s, cached_probs(*s)));
                        out.push_back(&probs_samples.back());
                    }
                    return out;
                };
                s2s_train = convert(train_set);
                s2s_val = convert(val_set);
                s2s_test = convert(test_set);
            }

            std::vector<seq2seq::Seq2SeqModel> models;
            if (plan.folds == 1) {
                auto trained = seq2seq::train_seq2seq(s2s_train, s2s_val, cfg, options);
                result.train_log = trained.log;
                models.push_back(std::move(trained.model));
            } else {
                const auto parts = detail::fold_partition(s2s_train, plan.folds, plan.seed);
                for (int f = 0; f < plan.folds; ++f) {
                    std::vector<const LabeledSample*> fold_train;
                    for (int g = 0; g < plan.folds; ++g)
                        if (g != f)
                            fold_train.insert(fold_train.end(), parts[static_cast<std::size_t>(g)].begin(),
                                              parts[static_cast<std::size_t>(g)].end());
                    auto fold_options = options;
                    fold_options.seed = Rng::derive_seed(options.seed, static_cast<std::uint64_t>(f));
                    auto trained = seq2seq::train_seq2seq(fold_train, parts[static_cast<std::size_t>(f)],
                                                          cfg, fold_options);
                    if (f == 0) result.train_log = trained.log;
                    models.push_back(std::move(trained.model));
                }
            }
            std::vector<const seq2seq::Seq2SeqModel*> model_ptrs;
            for (const auto& m : models) model_ptrs.push_back(&m);
            for (const auto* s : s2s_test) {
                const FeatureSequence f = segmenter::prepared_features(*s, cfg.normalize_input);
                result.samples.push_back(make_eval(*s, seq2seq::windowed_infer(model_ptrs, f), std::nullopt));
            }
            result.resolved_options["config"] = io::to_json(cfg);
            if (!models.empty())
                io::save_seq2seq((out_dir / (spec.name + ".checkpoint.json")).string(), models.front());
            for (std::size_t m = 1; m < models.size(); ++m)
                io::save_seq2seq((out_dir / (spec.name + ".fold" + std::to_string(m) +
                                             ".checkpoint.json")).string(), models[static_cast<std::size_t>(m)]);
        }

        // boundary-vs-duration buckets for the segmentation family
        if (spec.name == "baseline" || spec.name == "smoothing" || spec.name == "boundary") {
            result.boundary_buckets = metrics::make_duration_buckets(metrics::default_duration_edges());
            for (std::size_t i = 0; i < result.samples.size(); ++i) {
                const auto& eval = result.samples[i];
                const LabeledSample& sample = ds.by_id(eval.id);
                std::vector<int> predicted;
                if (spec.name == "boundary") {
                    const auto& probs = cached_probs(sample);
                    predicted = segmenter::detect_boundaries(
                        probs.boundary, result.resolved_options.value("threshold", 0.5),
                        result.resolved_options.value("nms_radius", 5));
                } else {
                    predicted = boundaries_of(*eval.pred_frames);
                }
                metrics::accumulate_boundary_detection(sample.frame_labels, predicted,
                                                       boundary_tolerance_frames,
                                                       result.boundary_buckets);
            }
        }

        result.confusion = confusion_from_samples(result.samples, c);
        fill_metric_report(result, plan.bootstrap_replicates, metric_seed);
        run.systems.push_back(std::move(result));
    }

    if (!seg_models.empty()) {
        io::save_segmenter((out_dir / "segmenter.checkpoint.json").string(), seg_models.front());
        for (std::size_t m = 1; m < seg_models.size(); ++m)
            io::save_segmenter((out_dir / ("segmenter.fold" + std::to_string(m) +
                                           ".checkpoint.json")).string(), seg_models[m]);
        io::write_train_log_csv(out_dir / "segmenter.log.csv", seg_log);
    }

    // -------- artifacts --------
    json metrics_json;
    metrics_json["format_version"] = io::kFormatVersion;
    metrics_json["seed"] = plan.seed;
    metrics_json["bootstrap_replicates"] = plan.bootstrap_replicates;
    json per_system = json::object();
    for (const auto& s : run.systems) {
        per_system[s.name] = io::metric_report_to_json(s.report);
        if (!s.resolved_options.empty()) per_system[s.name]["resolved"] = s.resolved_options;
    }
    metrics_json["systems"] = std::move(per_system);
    io::write_json_file((out_dir / "metrics.json").string(), metrics_json);

    // flat CSV in the documented key order, blanks for undefined entries
    static const std::vector<std::string> kMetricOrder{"edit_score", "aer",  "tpr",
                                                       "fdr",        "f1",   "framewise_accuracy"};
    std::string metrics_csv = "system";
    for (const auto& m : kMetricOrder)
        metrics_csv += ',' + m + ',' + m + "_lower," + m + "_upper";
    metrics_csv += '\n';
    for (const auto& s : run.systems) {
        metrics_csv += io::csv_quote(s.name);
        for (const auto& m : kMetricOrder) {
            const auto* e = s.report.find(m);
            if (e && e->ci) {
                metrics_csv += ',' + io::format_double(e->value) + ',' +
                               io::format_double(e->ci->first) + ',' + io::format_double(e->ci->second);
            } else if (e) {
                metrics_csv += ',' + io::format_double(e->value) + ",,";
            } else {
                metrics_csv += ",,,";
            }
        }
        metrics_csv += '\n';
    }
    io::write_text_file(out_dir / "metrics.csv", metrics_csv);

    std::string counts_csv;
    for (const auto& s : run.systems) {
        std::vector<ActionSequence> gt, pred;
        std::vector<std::string> groups;
        for (const auto& e : s.samples) {
            gt.push_back(e.gt);
            pred.push_back(e.pred);
            groups.push_back(e.group);
        }
        const CountReport report = count_report(gt, pred, groups, c);
        std::string block = count_report_csv(report, ds.vocab, s.name);
        if (!counts_csv.empty()) {
            // drop the repeated header
            block.erase(0, block.find('\n') + 1);
        }
        counts_csv += block;
    }
    io::write_text_file(out_dir / "counts.csv", counts_csv);

    std::string boundary_csv = "system,duration_lo_s,duration_hi_s,total,detected,accuracy\n";
    for (const auto& s : run.systems) {
        for (const auto& bucket : s.boundary_buckets) {
            boundary_csv += io::csv_quote(s.name) + ',' + io::format_double(bucket.lo_seconds) + ',' +
                            io::format_double(bucket.hi_seconds) + ',' + std::to_string(bucket.total) +
                            ',' + std::to_string(bucket.detected) + ',' +
                            (bucket.total > 0 ? io::format_double(bucket.accuracy()) : std::string()) +
                            '\n';
        }
    }
    io::write_text_file(out_dir / "boundary_report.csv", boundary_csv);

    std::string confusion_csv = "system,gt_class";
    for (const auto& name : ds.vocab.classes()) confusion_csv += ',' + name;
    confusion_csv += '\n';
    for (const auto& s : run.systems) {
        for (int g = 0; g < c; ++g) {
            confusion_csv += io::csv_quote(s.name) + ',' + io::csv_quote(ds.vocab.name(g));
            for (int p = 0; p < c; ++p)
                confusion_csv += ',' + io::format_double(s.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)]);
            confusion_csv += '\n';
        }
    }
    io::write_text_file(out_dir / "confusion.csv", confusion_csv);

    for (const auto& s : run.systems) {
        std::vector<std::pair<std::string, ActionSequence>> preds;
        for (const auto& e : s.samples) preds.emplace_back(e.id, e.pred);
        io::write_predictions_jsonl(out_dir / (s.name + ".predictions.jsonl"), ds.vocab, preds);
        if (!s.train_log.empty() && s.name != "baseline")
            io::write_train_log_csv(out_dir / (s.name + ".log.csv"), s.train_log);
    }

    return run;
}

}  // namespace actseq::harness
