#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <string>
#include <vector>

#include "annostudy/dataset_io.hpp"
#include "annostudy/flaws.hpp"
#include "cli.hpp"
#include "test_support.hpp"

using namespace annostudy;
using namespace annostudy::testsupport;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"annostudy"};
    for (const auto& arg : args) argv.push_back(arg.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path write_asthma_dataset(const fs::path& dir) {
    const fs::path path = dir / "asthma.json";
    write_dataset(make_ground_truth(TaskKind::Asthma, 20, 6), path);
    return path;
}

}  // namespace

TEST_CASE("validate accepts a valid dataset and rejects a broken one") {
    TempDir dir("annostudy_cli_validate");
    const fs::path good = write_asthma_dataset(dir.path);
    CHECK(run_cli({"validate", good.string()}) == 0);

    const fs::path bad = dir.path / "bad.json";
    std::ofstream(bad) << R"({"task": "asthma", "images": [], "annotations": [
        {"id": "a", "image_id": "missing", "annotator_id": "e", "mode": "unaided",
         "box": [1, 1, 2, 2], "label": "eosinophil", "provenance": "human"}]})";
    CHECK(run_cli({"validate", bad.string()}) == 1);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli({"frobnicate"}) == 2);
    CHECK(run_cli({}) == 2);
    // --seed is required on every randomized subcommand.
    CHECK(run_cli({"inject", "--task", "asthma", "--dataset", "x.json"}) == 2);
    CHECK(run_cli({"run-study", "--config", "x.json"}) == 2);
    CHECK(run_cli({"simulate", "--dataset", "x.json", "--profile", "p.json"}) == 2);
    CHECK(run_cli({"train", "--features", "a.csv", "--validation", "b.csv"}) == 2);
}

TEST_CASE("missing input files exit with 1") {
    CHECK(run_cli({"validate", "/nonexistent.json"}) == 1);
    CHECK(run_cli({"run-study", "--config", "/nonexistent.json", "--seed", "1"}) == 1);
}

TEST_CASE("inject runs byte-identically for the same seed") {
    TempDir dir("annostudy_cli_inject");
    const fs::path dataset = write_asthma_dataset(dir.path);

    const fs::path out_a = dir.path / "a";
    const fs::path out_b = dir.path / "b";
    REQUIRE(run_cli({"inject", "--task", "asthma", "--dataset", dataset.string(), "--seed", "7",
                     "--out", out_a.string()}) == 0);
    REQUIRE(run_cli({"inject", "--task", "asthma", "--dataset", dataset.string(), "--seed", "7",
                     "--out", out_b.string()}) == 0);
    CHECK(slurp(out_a / "flaw_plan.json") == slurp(out_b / "flaw_plan.json"));
    CHECK(slurp(out_a / "dataset_with_proposals.json") ==
          slurp(out_b / "dataset_with_proposals.json"));

    const fs::path out_c = dir.path / "c";
    REQUIRE(run_cli({"inject", "--task", "asthma", "--dataset", dataset.string(), "--seed", "8",
                     "--out", out_c.string()}) == 0);
    CHECK(slurp(out_a / "flaw_plan.json") != slurp(out_c / "flaw_plan.json"));
}

TEST_CASE("mitosis inject consumes score and negative CSVs") {
    TempDir dir("annostudy_cli_mitosis");
    const fs::path dataset = dir.path / "mitosis.json";
    const StudyDataset ground_truth = make_ground_truth(TaskKind::Mitosis, 10, 5);
    write_dataset(ground_truth, dataset);

    const fs::path scores = dir.path / "scores.csv";
    {
        std::ofstream out(scores);
        out << "id,score\n";
        int i = 0;
        for (const auto& record : ground_truth.annotations) {
            out << fmt::format("{},{}\n", record.id, (i++ % 10) / 10.0);
        }
    }
    const fs::path negatives = dir.path / "negatives.csv";
    {
        std::ofstream out(negatives);
        out << "x_min,y_min,x_max,y_max,score\n";
        for (int i = 0; i < 30; ++i) {
            out << fmt::format("{},{},{},{},{}\n", 700 + 10 * (i % 5), 700 + 10 * (i / 5),
                               750 + 10 * (i % 5), 750 + 10 * (i / 5), (i % 10) / 10.0 + 0.05);
        }
    }

    // Missing CSVs is a data error, not a crash.
    CHECK(run_cli({"inject", "--task", "mitosis", "--dataset", dataset.string(), "--seed",
                   "5"}) == 1);

    const fs::path out = dir.path / "out";
    REQUIRE(run_cli({"inject", "--task", "mitosis", "--dataset", dataset.string(), "--seed", "5",
                     "--scores", scores.string(), "--negatives", negatives.string(),
                     "--removal-fraction", "0.2", "--out", out.string()}) == 0);
    const FlawPlan plan = FlawPlan::load(out / "flaw_plan.json");
    int removed = 0, fakes = 0;
    for (const auto& flaw : plan.flaws) {
        if (flaw.kind == FlawKind::RemovedObject) ++removed;
        if (flaw.kind == FlawKind::FakeObject) ++fakes;
    }
    CHECK(removed == 10);  // round(0.2 * 50)
    CHECK(fakes == 10);
}

TEST_CASE("simulate then consensus, metrics and recovery chain together") {
    TempDir dir("annostudy_cli_chain");
    const fs::path dataset = write_asthma_dataset(dir.path);

    const fs::path injected = dir.path / "inj";
    REQUIRE(run_cli({"inject", "--task", "asthma", "--dataset", dataset.string(), "--seed", "3",
                     "--out", injected.string()}) == 0);

    const fs::path profile = dir.path / "profile.json";
    std::ofstream(profile) << R"({"annotator_id": "expert_01",
        "detection_prob": [0.9, 0.9, 0.9], "acceptance_bias": 0.5,
        "seconds_per_object": 2.0, "seconds_per_image_base": 5.0})";

    const fs::path annotated = dir.path / "annotated.json";
    REQUIRE(run_cli({"simulate", "--dataset",
                     (injected / "dataset_with_proposals.json").string(), "--profile",
                     profile.string(), "--mode", "aided", "--seed", "11", "--out",
                     annotated.string()}) == 0);
    const StudyDataset with_expert = parse_dataset(annotated);
    CHECK(!with_expert.annotations_by("expert_01", ModeKind::Aided).empty());

    const fs::path consensus_out = dir.path / "consensus.json";
    REQUIRE(run_cli({"consensus", "--dataset", annotated.string(), "--mode", "aided", "--out",
                     consensus_out.string()}) == 0);
    CHECK(fs::exists(consensus_out));

    const fs::path metrics_dir = dir.path / "metrics";
    REQUIRE(run_cli({"metrics", "--dataset", annotated.string(), "--out",
                     metrics_dir.string()}) == 0);
    CHECK(slurp(metrics_dir / "concordance.csv").starts_with("mode,annotator,n,mean"));
    CHECK(fs::exists(metrics_dir / "timing.csv"));
    CHECK(fs::exists(metrics_dir / "anova.csv"));

    const fs::path recovery_out = dir.path / "recovery.csv";
    REQUIRE(run_cli({"recovery", "--plan", (injected / "flaw_plan.json").string(), "--dataset",
                     annotated.string(), "--annotator", "expert_01", "--mode", "aided", "--out",
                     recovery_out.string()}) == 0);
    CHECK(slurp(recovery_out).starts_with("kind,bucket,total,recovered,rate"));
}

TEST_CASE("train writes a model and per-repetition metrics") {
    TempDir dir("annostudy_cli_train");
    const fs::path train_csv = dir.path / "train.csv";
    const fs::path val_csv = dir.path / "val.csv";
    for (const auto& [path, count] : {std::pair{train_csv, 80}, std::pair{val_csv, 40}}) {
        std::ofstream out(path);
        out << "sample_id,label,votes,f1,f2\n";
        for (int i = 0; i < count; ++i) {
            const int label = i % 2;
            const double c = label == 1 ? 1.5 : -1.5;
            out << fmt::format("s{},{},{},{},{}\n", i, label, 1 + i % 5, c + 0.1 * (i % 7),
                               c - 0.1 * (i % 5));
        }
    }
    const fs::path out_dir = dir.path / "model";
    REQUIRE(run_cli({"train", "--features", train_csv.string(), "--validation", val_csv.string(),
                     "--loss", "votes", "--seed", "21", "--epochs", "60", "--repetitions", "2",
                     "--out", out_dir.string()}) == 0);
    CHECK(fs::exists(out_dir / "model.json"));
    const std::string metrics = slurp(out_dir / "metrics.csv");
    CHECK(metrics.starts_with("repetition,best_accuracy"));
    CHECK(metrics.find("mean,") != std::string::npos);
}

TEST_CASE("select-patches writes the selection") {
    TempDir dir("annostudy_cli_patches");
    const fs::path candidates = dir.path / "candidates.json";
    {
        std::ofstream out(candidates);
        out << "[";
        for (int i = 0; i < 12; ++i) {
            out << fmt::format(
                R"({}{{"patch_id": "p{:02}", "slide_id": "s{}", "stain": "{}",
                   "class_counts": {{"0": {}, "1": {}}}}})",
                i ? "," : "", i, i % 3 + 1, i % 2 == 0 ? "prussian_blue" : "turnbull_blue",
                i % 4, (i + 1) % 3);
        }
        out << "]";
    }
    const fs::path config = dir.path / "config.json";
    std::ofstream(config) << R"({"target_patch_count": 6, "target_total_objects": 12})";
    const fs::path out = dir.path / "selected.json";
    REQUIRE(run_cli({"select-patches", "--candidates", candidates.string(), "--config",
                     config.string(), "--out", out.string()}) == 0);
    const std::string text = slurp(out);
    CHECK(text.find("patch_id") != std::string::npos);
}

TEST_CASE("run-study reproduces the frozen golden snapshot") {
    TempDir dir("annostudy_cli_golden");
    const fs::path config = dir.path / "study.json";
    // Zero jitter and zero false-positive rate keep this tiny study free of
    // transcendental-function draws, so the snapshot is stable.
    std::ofstream(config) << R"({
      "task": "mitosis",
      "dataset": {"synthetic": {"images": 5, "objects_per_image": 6,
                                "width": 500, "height": 500}},
      "profiles": [
        {"annotator_id": "expert_01", "detection_prob": [0.6, 0.7, 0.8],
         "acceptance_bias": 0.5, "seconds_per_object": 2.0, "seconds_per_image_base": 5.0},
        {"annotator_id": "expert_02", "detection_prob": [0.8, 0.85, 0.9],
         "acceptance_bias": 0.2, "seconds_per_object": 3.0, "seconds_per_image_base": 4.0},
        {"annotator_id": "expert_03", "detection_prob": [0.95, 0.95, 0.95],
         "acceptance_bias": 0.8, "seconds_per_object": 1.5, "seconds_per_image_base": 6.0}
      ],
      "injection": {"removal_fraction": 0.2, "candidate_negative_count": 60},
      "training": {"epochs": 8, "repetitions": 2, "batch_size": 16},
      "features": {"negatives_per_image": 4, "validation_per_class": 40}
    })";

    const fs::path out = dir.path / "report";
    REQUIRE(run_cli({"run-study", "--config", config.string(), "--seed", "42", "--out",
                     out.string()}) == 0);

    const fs::path golden = fs::path(ANNOSTUDY_TEST_DIR) / "golden";
    for (const char* name : {"concordance.csv", "recovery.csv", "flaw_plan.json"}) {
        CAPTURE(name);
        CHECK(slurp(out / name) == slurp(golden / name));
    }
    for (const char* name : {"timing.csv", "anova.csv", "grading.csv", "classifier.csv",
                             "consensus.json", "summary.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(out / name));
    }
}
