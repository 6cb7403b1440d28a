#include "cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "annostudy/dataset_io.hpp"
#include "annostudy/errors.hpp"
#include "annostudy/flaws.hpp"
#include "annostudy/matching.hpp"
#include "annostudy/patches.hpp"
#include "annostudy/simulator.hpp"
#include "annostudy/stats.hpp"
#include "annostudy/study.hpp"
#include "annostudy/training.hpp"

namespace annostudy::cli {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

struct ValidateArgs {
    std::string dataset;
};

int cmd_validate(const ValidateArgs& args) {
    StudyDataset dataset;
    try {
        dataset = parse_dataset(args.dataset);
    } catch (const IntegrityError& e) {
        std::cout << "INVALID: " << e.what() << "\n";
        return 1;
    }
    const auto violations = validate_dataset(dataset);
    if (!violations.empty()) {
        for (const auto& violation : violations) {
            std::cout << fmt::format("[{}] {}: {}\n", violation.rule, violation.record_id,
                                     violation.message);
        }
        return 1;
    }
    const DatasetSummary summary = summarize_dataset(dataset);
    std::cout << fmt::format("OK: task={} images={} annotations={}\n", to_string(dataset.task),
                             summary.image_count, summary.annotation_count);
    for (const auto& [annotator, count] : summary.annotations_per_annotator) {
        std::cout << fmt::format("  {}: {}\n", annotator, count);
    }
    return 0;
}

struct InjectArgs {
    std::string task;
    std::string dataset;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string scores;
    std::string negatives;
    double removal_fraction = 0.20;
};

int cmd_inject(const InjectArgs& args) {
    const StudyDataset ground_truth = parse_dataset(args.dataset);
    const TaskKind task = task_from_string(args.task);
    if (ground_truth.task != task) {
        throw DatasetMismatchError("dataset task differs from --task");
    }

    InjectionResult result;
    switch (task) {
        case TaskKind::Asthma:
            result = inject_asthma(ground_truth, args.seed);
            break;
        case TaskKind::Eiph:
            result = inject_eiph(ground_truth, args.seed);
            break;
        case TaskKind::Mitosis: {
            if (args.scores.empty() || args.negatives.empty()) {
                throw ConfigError("mitosis injection needs --scores and --negatives");
            }
            MitosisInjectionConfig config;
            config.removal_fraction = args.removal_fraction;
            result = inject_mitosis(ground_truth, load_scores_csv(args.scores),
                                    load_negatives_csv(args.negatives), args.seed, config);
            break;
        }
    }

    std::filesystem::create_directories(args.out_dir);
    const auto dataset_path = std::filesystem::path(args.out_dir) / "dataset_with_proposals.json";
    const auto plan_path = std::filesystem::path(args.out_dir) / "flaw_plan.json";
    write_dataset(result.dataset, dataset_path);
    result.plan.save(plan_path);
    std::cout << fmt::format("wrote {} ({} flaws) and {}\n", plan_path.string(),
                             result.plan.flaws.size(), dataset_path.string());
    return 0;
}

struct ConsensusArgs {
    std::string dataset;
    std::string mode = "unaided";
    std::vector<std::string> annotators;
    double nms_iou = kDefaultNmsIou;
    std::string out = "consensus.json";
};

int cmd_consensus(const ConsensusArgs& args) {
    const StudyDataset dataset = parse_dataset(args.dataset);
    const ModeKind mode = mode_from_string(args.mode);
    std::vector<std::string> annotators =
        args.annotators.empty() ? dataset.human_annotators() : args.annotators;

    json root = json::object();
    for (const auto& image : dataset.images) {
        std::vector<AnnotationRecord> records;
        for (const auto& record : dataset.annotations) {
            if (record.image_id != image.image_id || record.mode != mode) continue;
            if (std::find(annotators.begin(), annotators.end(), record.annotator_id) ==
                annotators.end()) {
                continue;
            }
            records.push_back(record);
        }
        std::sort(records.begin(), records.end(),
                  [](const AnnotationRecord& a, const AnnotationRecord& b) { return a.id < b.id; });
        json clusters = json::array();
        for (const auto& cluster : cluster_consensus(records, args.nms_iou, dataset.task)) {
            clusters.push_back({{"representative_box",
                                 {cluster.representative_box.x_min, cluster.representative_box.y_min,
                                  cluster.representative_box.x_max,
                                  cluster.representative_box.y_max}},
                                {"votes", cluster.votes},
                                {"class_histogram", cluster.class_histogram},
                                {"member_ids", cluster.member_ids},
                                {"consensus_label", cluster.consensus_label}});
        }
        root[image.image_id] = std::move(clusters);
    }
    open_out(args.out) << root.dump(2) << "\n";
    std::cout << "wrote " << args.out << "\n";
    return 0;
}

struct MetricsArgs {
    std::string dataset;
    double threshold = 0.5;
    std::string out_dir = ".";
};

int cmd_metrics(const MetricsArgs& args) {
    const StudyDataset dataset = parse_dataset(args.dataset);
    std::filesystem::create_directories(args.out_dir);

    std::map<ModeKind, std::vector<double>> concordance_means;
    std::map<ModeKind, std::vector<double>> timing_means;

    auto concordance_out = open_out(std::filesystem::path(args.out_dir) / "concordance.csv");
    auto timing_out = open_out(std::filesystem::path(args.out_dir) / "timing.csv");
    concordance_out << "mode,annotator,n,mean,min,max,sigma\n";
    timing_out << "mode,annotator,n,mean,min,max,sigma\n";

    for (const ModeKind mode : {ModeKind::Unaided, ModeKind::Aided}) {
        for (const auto& expert : dataset.human_annotators()) {
            if (dataset.annotations_by(expert, mode).empty()) continue;
            const ConcordanceScore score = concordance(expert, dataset, mode, args.threshold);
            std::vector<double> per_image;
            for (const auto& [image_id, value] : score.per_image) per_image.push_back(value);
            const SummaryStat stat = summarize(per_image);
            concordance_out << fmt::format("{},{},{},{},{},{},{}\n", to_string(mode), expert,
                                           stat.n, stat.mean, stat.min, stat.max, stat.sigma);
            concordance_means[mode].push_back(score.mean);
            try {
                const SummaryStat timing = timing_summary(dataset, mode, expert);
                timing_out << fmt::format("{},{},{},{},{},{},{}\n", to_string(mode), expert,
                                          timing.n, timing.mean, timing.min, timing.max,
                                          timing.sigma);
                timing_means[mode].push_back(timing.mean);
            } catch (const EmptyInputError&) {
                // no recorded durations for this annotator
            }
        }
    }

    auto anova_out = open_out(std::filesystem::path(args.out_dir) / "anova.csv");
    anova_out << "metric,f,df_between,df_within,p\n";
    const auto write_anova = [&](const char* metric,
                                 const std::map<ModeKind, std::vector<double>>& groups) {
        const auto a = groups.find(ModeKind::Unaided);
        const auto b = groups.find(ModeKind::Aided);
        if (a == groups.end() || b == groups.end() || a->second.empty() || b->second.empty() ||
            a->second.size() + b->second.size() < 3) {
            return;
        }
        const AnovaResult result = anova_oneway(a->second, b->second);
        anova_out << fmt::format("{},{},{},{},{}\n", metric, result.f_statistic,
                                 result.df_between, result.df_within, result.p_value);
    };
    write_anova("concordance", concordance_means);
    write_anova("seconds_per_image", timing_means);

    std::cout << "wrote concordance.csv, timing.csv, anova.csv under " << args.out_dir << "\n";
    return 0;
}

struct RecoveryArgs {
    std::string plan;
    std::string dataset;
    std::string annotator;
    std::string mode = "aided";
    double threshold = 0.5;
    std::string out = "recovery.csv";
};

int cmd_recovery(const RecoveryArgs& args) {
    const StudyDataset dataset = parse_dataset(args.dataset);
    const FlawPlan plan = FlawPlan::load(args.plan);
    const ModeKind mode = mode_from_string(args.mode);
    std::vector<AnnotationRecord> records;
    for (const auto* record : dataset.annotations_by(args.annotator, mode)) {
        records.push_back(*record);
    }
    if (records.empty()) {
        throw MissingAnnotatorError("no annotations by '" + args.annotator + "' in mode " +
                                    args.mode);
    }
    const RecoveryReport report = recovery_report(plan, dataset, records, args.threshold);

    auto out = open_out(args.out);
    out << "kind,bucket,total,recovered,rate\n";
    for (const auto& [kind, cell] : report.per_kind) {
        out << fmt::format("{},,{},{},{}\n", to_string(kind), cell.total, cell.recovered,
                           cell.rate());
    }
    for (const auto& [key, cell] : report.per_kind_and_bucket) {
        out << fmt::format("{},{},{},{},{}\n", to_string(key.first), key.second, cell.total,
                           cell.recovered, cell.rate());
    }
    std::cout << "wrote " << args.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string features;
    std::string validation;
    std::string loss = "plain_bce";
    std::uint64_t seed = 0;
    double peak_lr = 0.05;
    int epochs = 100;
    int batch_size = 32;
    int repetitions = 5;
    int hidden_width = 0;
    double alpha = 1.0;
    std::string out_dir = ".";
};

int cmd_train(const TrainArgs& args) {
    VoteWeightedBatch training = load_feature_csv(args.features);
    VoteWeightedBatch validation = load_feature_csv(args.validation);
    training.alpha = args.alpha;

    TrainConfig config;
    config.peak_learning_rate = args.peak_lr;
    config.epochs = args.epochs;
    config.batch_size = args.batch_size;
    config.repetitions = args.repetitions;
    config.hidden_width = args.hidden_width;
    config.seed = args.seed;

    const TrainResult result = train(training, validation, config, loss_kind_from_string(args.loss));

    std::filesystem::create_directories(args.out_dir);
    result.model.save(std::filesystem::path(args.out_dir) / "model.json");
    auto metrics = open_out(std::filesystem::path(args.out_dir) / "metrics.csv");
    metrics << "repetition,best_accuracy\n";
    for (std::size_t rep = 0; rep < result.best_accuracy_per_repetition.size(); ++rep) {
        metrics << fmt::format("{},{}\n", rep + 1, result.best_accuracy_per_repetition[rep]);
    }
    metrics << fmt::format("mean,{}\n", result.mean_of_best);
    std::cout << fmt::format("mean of best validation accuracy: {:.4f}\n", result.mean_of_best);
    return 0;
}

struct SimulateArgs {
    std::string dataset;
    std::string profile;
    std::string annotator;
    std::string mode = "unaided";
    std::uint64_t seed = 0;
    std::string out = "annotated.json";
};

AnnotatorProfile load_profile(const std::filesystem::path& path, const std::string& annotator) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open profile file: " + path.string());
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }

    const auto parse_one = [](const json& entry) {
        AnnotatorProfile profile;
        profile.annotator_id = entry.at("annotator_id").get<std::string>();
        if (entry.contains("detection_prob")) {
            const auto probs = entry["detection_prob"].get<std::vector<double>>();
            if (probs.size() != 3) throw SchemaError("/detection_prob", "expected 3 values");
            std::copy(probs.begin(), probs.end(), profile.detection_prob.begin());
        }
        profile.false_positive_rate = entry.value("false_positive_rate", 0.0);
        profile.acceptance_bias = entry.value("acceptance_bias", 0.0);
        profile.localization_jitter = entry.value("localization_jitter", 0.0);
        profile.seconds_per_object = entry.value("seconds_per_object", 1.0);
        profile.seconds_per_image_base = entry.value("seconds_per_image_base", 1.0);
        if (entry.contains("class_confusion")) {
            for (const auto& row : entry["class_confusion"]) {
                profile.class_confusion.push_back(row.get<std::vector<double>>());
            }
        }
        return profile;
    };

    if (root.is_object()) return parse_one(root);
    if (root.is_array()) {
        if (!annotator.empty()) {
            for (const auto& entry : root) {
                if (entry.value("annotator_id", std::string{}) == annotator) {
                    return parse_one(entry);
                }
            }
            throw ConfigError("no profile with annotator_id '" + annotator + "' in file");
        }
        if (root.size() == 1) return parse_one(root[0]);
        throw ConfigError("profile file holds several profiles; pick one with --annotator");
    }
    throw SchemaError("", "profile file must hold an object or an array");
}

int cmd_simulate(const SimulateArgs& args) {
    StudyDataset dataset = parse_dataset(args.dataset);
    const AnnotatorProfile profile = load_profile(args.profile, args.annotator);
    const ModeKind mode = mode_from_string(args.mode);

    const SimulationResult result = simulate_annotator(dataset, profile, mode, args.seed);
    for (const auto& record : result.annotations) dataset.annotations.push_back(record);
    for (auto& image : dataset.images) {
        const auto it = result.durations_by_image.find(image.image_id);
        if (it != result.durations_by_image.end()) {
            image.durations[profile.annotator_id] = it->second;
        }
    }
    write_dataset(dataset, args.out);
    std::cout << fmt::format("wrote {} ({} simulated annotations)\n", args.out,
                             result.annotations.size());
    return 0;
}

struct RunStudyArgs {
    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir = "report";
};

int cmd_run_study(const RunStudyArgs& args) {
    const StudyConfig config = load_study_config(args.config);
    const StudyReport report = run_study(config, args.seed);
    write_report(report, args.out_dir);
    std::cout << "wrote report under " << args.out_dir << "\n";
    return 0;
}

struct SelectPatchesArgs {
    std::string candidates;
    std::string config;
    std::string out = "selected_patches.json";
};

int cmd_select_patches(const SelectPatchesArgs& args) {
    const auto candidates = load_patches_json(args.candidates);
    const PatchSelectionConfig config =
        args.config.empty() ? PatchSelectionConfig{} : patch_config_from_json_file(args.config);
    const auto selection = select_patches(candidates, config);
    open_out(args.out) << patches_to_json(selection);
    std::cout << fmt::format("selected {} patches -> {}\n", selection.size(), args.out);
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"multi-expert annotation study toolkit"};
    app.require_subcommand(1);

    ValidateArgs validate_args;
    auto* validate = app.add_subcommand("validate", "check a dataset file against the schema");
    validate->add_option("dataset", validate_args.dataset, "dataset JSON file")->required();

    InjectArgs inject_args;
    auto* inject = app.add_subcommand("inject", "apply systematic label flaws to ground truth");
    inject->add_option("--task", inject_args.task, "asthma|eiph|mitosis")->required();
    inject->add_option("--dataset", inject_args.dataset, "ground-truth dataset JSON")->required();
    inject->add_option("--seed", inject_args.seed, "RNG seed")->required();
    inject->add_option("--out", inject_args.out_dir, "output directory");
    inject->add_option("--scores", inject_args.scores, "model scores CSV (mitosis)");
    inject->add_option("--negatives", inject_args.negatives, "candidate negatives CSV (mitosis)");
    inject->add_option("--removal-fraction", inject_args.removal_fraction,
                       "fraction of figures to remove (mitosis)");

    ConsensusArgs consensus_args;
    auto* consensus = app.add_subcommand("consensus", "NMS consensus clusters with vote counts");
    consensus->add_option("--dataset", consensus_args.dataset, "dataset JSON")->required();
    consensus->add_option("--mode", consensus_args.mode, "unaided|aided");
    consensus->add_option("--annotators", consensus_args.annotators,
                          "comma-separated annotator ids (default: all human)")
        ->delimiter(',');
    consensus->add_option("--nms-iou", consensus_args.nms_iou, "clustering IoU threshold");
    consensus->add_option("--out", consensus_args.out, "output JSON path");

    MetricsArgs metrics_args;
    auto* metrics = app.add_subcommand("metrics", "concordance, timing and mode F-tests");
    metrics->add_option("--dataset", metrics_args.dataset, "dataset JSON")->required();
    metrics->add_option("--threshold", metrics_args.threshold, "match IoU threshold");
    metrics->add_option("--out", metrics_args.out_dir, "output directory");

    RecoveryArgs recovery_args;
    auto* recovery = app.add_subcommand("recovery", "score flaw recovery for one annotator");
    recovery->add_option("--plan", recovery_args.plan, "flaw plan JSON")->required();
    recovery->add_option("--dataset", recovery_args.dataset, "dataset with ground truth and expert records")
        ->required();
    recovery->add_option("--annotator", recovery_args.annotator, "annotator id")->required();
    recovery->add_option("--mode", recovery_args.mode, "unaided|aided");
    recovery->add_option("--threshold", recovery_args.threshold, "match IoU threshold");
    recovery->add_option("--out", recovery_args.out, "output CSV path");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train the classifier on a feature CSV");
    train_cmd->add_option("--features", train_args.features, "training CSV")->required();
    train_cmd->add_option("--validation", train_args.validation, "validation CSV")->required();
    train_cmd->add_option("--loss", train_args.loss, "votes|plain_bce");
    train_cmd->add_option("--seed", train_args.seed, "RNG seed")->required();
    train_cmd->add_option("--peak-lr", train_args.peak_lr, "one-cycle peak learning rate");
    train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
    train_cmd->add_option("--batch-size", train_args.batch_size, "minibatch size");
    train_cmd->add_option("--repetitions", train_args.repetitions, "training repetitions");
    train_cmd->add_option("--hidden-width", train_args.hidden_width,
                          "hidden layer width (0 = linear)");
    train_cmd->add_option("--alpha", train_args.alpha, "loss scale factor");
    train_cmd->add_option("--out", train_args.out_dir, "output directory");

    SimulateArgs simulate_args;
    auto* simulate = app.add_subcommand("simulate", "simulate one annotator session");
    simulate->add_option("--dataset", simulate_args.dataset, "dataset JSON")->required();
    simulate->add_option("--profile", simulate_args.profile, "annotator profile JSON")->required();
    simulate->add_option("--annotator", simulate_args.annotator,
                         "profile to pick when the file holds several");
    simulate->add_option("--mode", simulate_args.mode, "unaided|aided");
    simulate->add_option("--seed", simulate_args.seed, "RNG seed")->required();
    simulate->add_option("--out", simulate_args.out, "output dataset JSON");

    RunStudyArgs run_study_args;
    auto* run_study_cmd = app.add_subcommand("run-study", "full pipeline into a report directory");
    run_study_cmd->add_option("--config", run_study_args.config, "study config JSON")->required();
    run_study_cmd->add_option("--seed", run_study_args.seed, "RNG seed")->required();
    run_study_cmd->add_option("--out", run_study_args.out_dir, "report directory");

    SelectPatchesArgs select_args;
    auto* select = app.add_subcommand("select-patches", "constrained greedy patch selection");
    select->add_option("--candidates", select_args.candidates, "candidate patches JSON")
        ->required();
    select->add_option("--config", select_args.config, "selection config JSON");
    select->add_option("--out", select_args.out, "output JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n"
                  << "run 'annostudy --help' or 'annostudy <command> --help' for usage\n";
        return 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(validate_args);
        if (inject->parsed()) return cmd_inject(inject_args);
        if (consensus->parsed()) return cmd_consensus(consensus_args);
        if (metrics->parsed()) return cmd_metrics(metrics_args);
        if (recovery->parsed()) return cmd_recovery(recovery_args);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (simulate->parsed()) return cmd_simulate(simulate_args);
        if (run_study_cmd->parsed()) return cmd_run_study(run_study_args);
        if (select->parsed()) return cmd_select_patches(select_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace annostudy::cli
