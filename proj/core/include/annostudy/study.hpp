#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "annostudy/flaws.hpp"
#include "annostudy/matching.hpp"
#include "annostudy/model.hpp"
#include "annostudy/simulator.hpp"
#include "annostudy/stats.hpp"
#include "annostudy/training.hpp"
#include "annostudy/training_sets.hpp"

namespace annostudy {

struct SyntheticDatasetConfig {
    int images = 20;
    double width = 1024.0;
    double height = 1024.0;
    int objects_per_image = 15;  // drawn uniformly within +-30% per image
    double box_radius = kDefaultPointRadius;
    int slides = 6;
};

/// Synthetic ground truth: boxes placed with low mutual overlap, labels
/// drawn uniformly from the task's space.
StudyDataset synthesize_ground_truth(TaskKind task, const SyntheticDatasetConfig& config,
                                     std::uint64_t seed);

struct FeatureConfig {
    int dim = 2;
    double separation = 2.0;  // distance between the class centers per dim
    double sigma = 1.0;
    int negatives_per_image = 15;
};

/// Desk-scale stand-in for image crops: every physical object owns a fixed
/// feature vector drawn from its true class's Gaussian, keyed by identity,
/// so the same object yields the same features in every subset and mode.
/// Clusters that match no ground-truth object draw from the background
/// class -- those are the label-noise samples vote weighting suppresses.
class GaussianFeatureExtractor : public FeatureExtractor {
public:
    GaussianFeatureExtractor(const StudyDataset& ground_truth, FeatureConfig config,
                             double match_threshold, std::uint64_t seed);

    std::vector<double> cluster_features(const ConsensusCluster& cluster,
                                         const std::string& image_id) override;
    std::vector<NegativeSample> negative_samples(const std::string& image_id,
                                                 int annotator_count) override;
    /// Clean, balanced hold-out set with true labels.
    VoteWeightedBatch make_validation(int per_class) const;

private:
    std::vector<double> draw(const std::string& key, bool positive) const;

    const StudyDataset& ground_truth_;
    FeatureConfig config_;
    double match_threshold_;
    std::uint64_t seed_;
    std::map<std::string, std::vector<const AnnotationRecord*>> objects_by_image_;
};

struct StudyConfig {
    TaskKind task = TaskKind::Mitosis;
    std::optional<std::filesystem::path> dataset_path;
    std::optional<SyntheticDatasetConfig> synthetic;
    std::vector<AnnotatorProfile> profiles;

    MitosisInjectionConfig mitosis;
    std::optional<std::filesystem::path> scores_path;     // else synthesized
    std::optional<std::filesystem::path> negatives_path;  // else synthesized
    int candidate_negative_count = 300;

    double match_threshold = 0.5;
    double nms_iou = kDefaultNmsIou;
    int grading_threshold = kDefaultGradingThreshold;

    TrainConfig training;
    FeatureConfig features;
    int validation_per_class = 300;
};

/// Reads a study config JSON; relative paths resolve against the config
/// file's directory.
StudyConfig load_study_config(const std::filesystem::path& path);

struct ExpertModeStat {
    ModeKind mode = ModeKind::Unaided;
    std::string annotator;  // "all" aggregates the expert means
    SummaryStat stat;
};

struct AnovaRow {
    std::string metric;
    AnovaResult result;
};

struct RecoveryRow {
    ModeKind mode = ModeKind::Unaided;
    FlawKind kind = FlawKind::Deletion;
    int bucket = -1;  // -1 when the kind carries no bucket
    RecoveryCell cell;
};

struct GradingRow {
    ModeKind mode = ModeKind::Unaided;
    std::string image_id;
    int reference_count = 0;
    double mean_expert_count = 0.0;
    GradingDecision decision;
};

struct GradingTally {
    ModeKind mode = ModeKind::Unaided;
    int over = 0;
    int under = 0;
    int equal = 0;
};

struct ClassifierRow {
    ModeKind mode = ModeKind::Unaided;
    std::string set_id;
    int experts = 1;
    LossKind loss = LossKind::PlainBce;
    std::vector<double> best_per_repetition;
    double mean_of_best = 0.0;
};

struct StudyReport {
    TaskKind task = TaskKind::Mitosis;
    std::uint64_t seed = 0;
    std::vector<ExpertModeStat> concordance;
    std::vector<ExpertModeStat> timing;
    std::vector<RecoveryRow> recovery;
    std::vector<AnovaRow> anova;
    std::vector<GradingRow> grading;  // mitosis only
    std::vector<GradingTally> grading_tallies;
    std::vector<ClassifierRow> classifier;
    FlawPlan plan;
    /// Full-roster consensus clusters per mode and image.
    std::map<ModeKind, std::map<std::string, std::vector<ConsensusCluster>>> consensus;
    /// Persisted intermediates every other number can be re-derived from.
    StudyDataset unaided_dataset;
    StudyDataset aided_dataset;
};

/// End-to-end pipeline: inject flaws, simulate every profile in both modes,
/// score concordance/timing/recovery, run the mode comparison F-tests,
/// grade mitotic counts, cluster consensus, build the expert-subset
/// training sets, and train both losses on each. Deterministic in
/// (config, seed).
StudyReport run_study(const StudyConfig& config, std::uint64_t seed);

/// Writes the report directory: concordance.csv, timing.csv, recovery.csv,
/// anova.csv, grading.csv, classifier.csv, flaw_plan.json, consensus.json,
/// summary.json, plus the per-mode dataset intermediates.
void write_report(const StudyReport& report, const std::filesystem::path& out_dir);

}  // namespace annostudy
