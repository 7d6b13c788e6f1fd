#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "actseq/harness.hpp"
#include "testutil.hpp"

using namespace actseq;
using namespace actseq::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "actseq_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

json tiny_generator_json() {
    json gen;
    gen["num_classes"] = 3;
    gen["feature_dim"] = 4;
    gen["frame_rate"] = 20.0;
    gen["transition"] = datagen::uniform_offdiagonal_transitions(3);
    gen["mean_duration_s"] = {0.4, 0.6, 0.8};
    gen["dispersion"] = {4.0, 4.0, 4.0};
    gen["emission_mean"] = {{2.0, 0.0, 0.0, 0.5}, {0.0, 2.0, 0.0, -0.5}, {0.0, 0.0, 2.0, 0.0}};
    gen["noise_sigma"] = 0.3;
    gen["crossfade_frames"] = 2;
    gen["min_length"] = 100;
    gen["max_length"] = 160;
    gen["sequences_per_group"] = 2;
    gen["seed"] = 7;
    return gen;
}

json tiny_plan_json(bool with_models) {
    json plan;
    plan["seed"] = 13;
    plan["dataset"] = {{"generator", tiny_generator_json()}, {"count", 16}};
    plan["split"] = {{"policy", "fractions"}, {"fractions", {0.6, 0.2, 0.2}}};
    plan["bootstrap_replicates"] = 100;
    plan["segmenter"] =
        {{"stages", 1}, {"layers_per_stage", 4}, {"channels", 12}, {"dropout", 0.0},
         {"lambda_boundary", 0.2}};
    plan["train"] = {{"epochs", 10}, {"lr", 5e-3}, {"weight_decay", 0.0}};
    json systems = json::array();
    systems.push_back("oracle");
    systems.push_back("empty");
    if (with_models) {
        systems.push_back("baseline");
        systems.push_back({{"name", "smoothing"}, {"windows", {5, 9}}});
        systems.push_back({{"name", "boundary"}, {"thresholds", {0.3, 0.5}}});
        json raw;
        raw["name"] = "raw2seq";
        raw["config"] = {{"enc_hidden", 12},      {"dec_hidden", 16}, {"attention_dim", 8},
                         {"dropout", 0.0},        {"max_decode_len", 16},
                         {"window", {{"length", 30}, {"stride", 15}, {"margin", 2}}},
                         {"alpha_framewise", 1.0}};
        systems.push_back(raw);
        json seg;
        seg["name"] = "seg2seq";
        seg["config"] = {{"enc_hidden", 12},      {"dec_hidden", 16}, {"attention_dim", 8},
                         {"dropout", 0.0},        {"max_decode_len", 16},
                         {"window", {{"length", 30}, {"stride", 15}, {"margin", 2}}}};
        systems.push_back(seg);
    }
    plan["systems"] = systems;
    return plan;
}

}  // namespace

TEST_CASE("plans parse, validate and echo", "[harness]") {
    const ExperimentPlan plan = ExperimentPlan::from_json(tiny_plan_json(false));
    CHECK(plan.seed == 13);
    CHECK(plan.systems.size() == 2);
    const json echoed = plan.to_json();
    CHECK(echoed["systems"].size() == 2);
    CHECK(echoed["split"]["policy"] == "fractions");

    json bad = tiny_plan_json(false);
    bad["systems"] = json::array({"nonsense"});
    CHECK_THROWS_AS(ExperimentPlan::from_json(bad), ConfigError);
    bad = tiny_plan_json(false);
    bad["systems"] = json::array({"oracle", "oracle"});
    CHECK_THROWS_AS(ExperimentPlan::from_json(bad), ConfigError);
    bad = tiny_plan_json(false);
    bad.erase("dataset");
    CHECK_THROWS_AS(ExperimentPlan::from_json(bad), ConfigError);
}

TEST_CASE("group splits never leak a group across splits", "[harness]") {
    datagen::GeneratorConfig gen;
    gen.num_classes = 3;
    gen.feature_dim = 2;
    gen.frame_rate = 10.0;
    gen.transition = datagen::uniform_offdiagonal_transitions(3);
    gen.mean_duration_s = {0.4, 0.5, 0.6};
    gen.dispersion = {4.0, 4.0, 4.0};
    gen.emission_mean = {{1, 0}, {0, 1}, {1, 1}};
    gen.noise_sigma = 0.1;
    gen.crossfade_frames = 0;
    gen.min_length = 20;
    gen.max_length = 30;
    gen.sequences_per_group = 3;
    gen.seed = 3;
    const auto samples = datagen::generate(gen, 18);
    const auto splits = split_by_group(samples, {0.6, 0.2, 0.2}, 11);
    auto group_of = [&](const std::string& id) {
        for (const auto& s : samples)
            if (s.id() == id) return s.group();
        return std::string();
    };
    std::set<std::string> train_groups, other_groups;
    for (const auto& id : splits.train) train_groups.insert(group_of(id));
    for (const auto& id : splits.val) other_groups.insert(group_of(id));
    for (const auto& id : splits.test) other_groups.insert(group_of(id));
    for (const auto& g : train_groups) CHECK(other_groups.count(g) == 0);
    CHECK(splits.train.size() + splits.val.size() + splits.test.size() == samples.size());
}

TEST_CASE("count report tallies per group with mean and stddev rows", "[harness]") {
    const std::vector<ActionSequence> gt{ActionSequence({0, 1, 0}), ActionSequence({1, 2}),
                                         ActionSequence({0})};
    const std::vector<ActionSequence> pred{ActionSequence({0, 1}), ActionSequence({1, 2}),
                                           ActionSequence({0, 2})};
    const std::vector<std::string> groups{"g0", "g0", "g1"};
    const CountReport report = count_report(gt, pred, groups, 3);
    REQUIRE(report.groups.size() == 2);
    CHECK(report.gt[0] == std::vector<long>{2, 2, 1});
    CHECK(report.pred[0] == std::vector<long>{1, 2, 1});
    CHECK(report.gt[1] == std::vector<long>{1, 0, 0});
    CHECK(report.pred[1] == std::vector<long>{1, 0, 1});
    CHECK(report.gt_mean[0] == Catch::Approx(1.5));
    CHECK_THROWS_AS(count_report(gt, pred, {"g0"}, 3), ShapeError);

    // one extra instance in one group shifts that count by exactly one
    const CountReport shifted =
        count_report({ActionSequence({0})}, {ActionSequence({0, 0}, false)}, {"g0"}, 3);
    CHECK(shifted.pred[0][0] - shifted.gt[0][0] == 1);
}

TEST_CASE("oracle and empty systems hit their sanity values", "[harness]") {
    const fs::path dir = scratch_dir("plan_sanity");
    const ExperimentPlan plan = ExperimentPlan::from_json(tiny_plan_json(false));
    const RunResult run = run_plan(plan, dir);

    const auto& oracle = run.system("oracle").report;
    CHECK(oracle.value("edit_score") == 100.0);
    CHECK(oracle.value("aer") == 0.0);
    CHECK(oracle.value("tpr") == 1.0);
    CHECK(oracle.value("fdr") == 0.0);
    CHECK(oracle.value("f1") == 1.0);
    CHECK(oracle.value("framewise_accuracy") == 1.0);

    const auto& empty = run.system("empty").report;
    CHECK(empty.value("aer") == 1.0);
    CHECK(empty.value("tpr") == 0.0);
    CHECK(empty.value("edit_score") == 0.0);
    CHECK(empty.find("fdr") == nullptr);  // undefined on empty predictions
    CHECK(empty.find("f1") == nullptr);

    for (const char* name : {"plan.json", "metrics.json", "metrics.csv", "counts.csv",
                             "boundary_report.csv", "confusion.csv", "oracle.predictions.jsonl",
                             "empty.predictions.jsonl"})
        CHECK(fs::exists(dir / name));
}

TEST_CASE("full plan trains all systems and reruns bit-identically", "[harness][train]") {
    const fs::path dir = scratch_dir("plan_full");
    const ExperimentPlan plan = ExperimentPlan::from_json(tiny_plan_json(true));
    const RunResult run = run_plan(plan, dir);

    REQUIRE(run.systems.size() == 7);
    for (const auto& s : run.systems) {
        INFO(s.name);
        CHECK(!s.samples.empty());
        if (s.name != "empty") CHECK(s.report.value("edit_score") > 0.0);
    }
    // segmentation systems carry frame-wise accuracy and boundary buckets
    for (const char* name : {"baseline", "smoothing", "boundary"}) {
        CHECK(run.system(name).report.find("framewise_accuracy") != nullptr);
        long populated = 0;
        for (const auto& bucket : run.system(name).boundary_buckets) populated += bucket.total;
        CHECK(populated > 0);
    }
    // seq2seq systems decode canonical sequences
    for (const char* name : {"raw2seq", "seg2seq"}) {
        for (const auto& eval : run.system(name).samples)
            for (std::size_t i = 1; i < eval.pred.size(); ++i)
                CHECK(eval.pred[i] != eval.pred[i - 1]);
    }
    for (const char* name :
         {"segmenter.checkpoint.json", "segmenter.log.csv", "raw2seq.checkpoint.json",
          "seg2seq.checkpoint.json", "raw2seq.log.csv", "seg2seq.log.csv"})
        CHECK(fs::exists(dir / name));

    // bit-identical artifacts on a rerun with the same plan
    const fs::path dir2 = scratch_dir("plan_full_repeat");
    run_plan(plan, dir2);
    for (const char* name : {"metrics.json", "metrics.csv", "counts.csv", "boundary_report.csv",
                             "confusion.csv", "segmenter.log.csv"})
        CHECK(slurp(dir / name) == slurp(dir2 / name));
}
