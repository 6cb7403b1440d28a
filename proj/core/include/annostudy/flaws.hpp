#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "annostudy/model.hpp"

namespace annostudy {

enum class FlawKind {
    ClassFlip,
    Deletion,
    GradeIncrement,
    FalseAnnotation,
    DuplicateAnnotation,
    FakeObject,
    RemovedObject,
};

std::string to_string(FlawKind kind);
FlawKind flaw_kind_from_string(const std::string& token);

/// Model-score cutoffs that stratify fake and removed objects into
/// difficulty buckets {0, 1, 2}.
struct DifficultyThresholds {
    double fake_p0_max = 0.2;
    double fake_p1_max = 0.4;
    double removed_p0_max = 0.33;
    double removed_p1_max = 0.66;

    void check() const;
};

enum class BucketKind { Fake, Removed };

/// Total, monotone step function of the score:
/// fake:    0 if score <= 0.2,  1 if 0.2  < score <= 0.4,  else 2
/// removed: 0 if score <= 0.33, 1 if 0.33 < score <= 0.66, else 2
int bucket(double score, const DifficultyThresholds& cuts, BucketKind which);

/// One artificial error applied to the ground truth. target_id refers to a
/// ground-truth annotation; synthetic_box carries the geometry of added
/// objects. difficulty_bucket is -1 except for the mitosis kinds. A
/// GradeIncrement whose original grade was already maximal is recorded with
/// new_label == original_label (saturated).
struct InjectedFlaw {
    FlawKind kind = FlawKind::Deletion;
    std::string image_id;
    std::string target_id;
    std::optional<BoundingBox> synthetic_box;
    int difficulty_bucket = -1;
    std::string original_label;
    std::string new_label;

    bool saturated() const {
        return kind == FlawKind::GradeIncrement && original_label == new_label;
    }
};

/// Seeded, replayable description of every artificial error. Applying the
/// plan to the same ground truth (apply_plan, no RNG involved) reproduces
/// the proposal set byte-identically.
struct FlawPlan {
    TaskKind task = TaskKind::Asthma;
    std::uint64_t seed = 0;
    std::vector<InjectedFlaw> flaws;

    std::string to_json() const;
    static FlawPlan from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static FlawPlan load(const std::filesystem::path& path);
};

/// Proposal id of the unchanged/relabeled copy of a ground-truth record.
std::string proposal_id_for(const std::string& ground_truth_id);
/// Proposal id of the synthetic object created by plan.flaws[index].
std::string proposal_id_for_flaw(std::size_t flaw_index);

/// Deterministically derives the proposal set from ground truth and a plan:
/// ground-truth records are copied under the reserved "proposal" annotator,
/// with flaw targets relabeled or dropped and synthetic objects appended.
StudyDataset apply_plan(const StudyDataset& ground_truth, const FlawPlan& plan);

struct InjectionResult {
    StudyDataset dataset;  // ground truth plus proposals
    FlawPlan plan;
};

/// 15 class flips spread over five images (every flip image hosts at least
/// one) plus one deleted cell on each of five further images.
InjectionResult inject_asthma(const StudyDataset& ground_truth, std::uint64_t seed);

/// Five images with one deleted cell, five with every grade incremented
/// (clamped at 4), and five carrying ten detection-pipeline artifacts in
/// total: false annotations over background (IoU <= 0.1 with every cell) or
/// duplicate annotations (IoU >= 0.7 with an existing cell).
InjectionResult inject_eiph(const StudyDataset& ground_truth, std::uint64_t seed);

struct ScoredBox {
    BoundingBox box;
    double score = 0.0;
};

struct MitosisInjectionConfig {
    double removal_fraction = 0.20;
    /// Per-bucket quotas; when they disagree with the requested total they
    /// are rescaled proportionally with largest-remainder rounding.
    std::array<int, 3> fake_quotas = {49, 50, 50};
    std::array<int, 3> removed_quotas = {49, 59, 50};
    DifficultyThresholds thresholds;
};

/// Removes round(removal_fraction * |ground truth|) mitotic figures,
/// stratified over the removed-score buckets, and adds the same number of
/// fake figures drawn from candidate_negatives stratified over the
/// fake-score buckets. The negatives CSV carries no image column, so each
/// sampled fake is placed on a seeded random image whose bounds contain its
/// box. `scores` must cover every ground-truth figure.
InjectionResult inject_mitosis(const StudyDataset& ground_truth,
                               const std::map<std::string, double>& scores,
                               const std::vector<ScoredBox>& candidate_negatives,
                               std::uint64_t seed, const MitosisInjectionConfig& config = {});

struct RecoveryCell {
    std::size_t total = 0;
    std::size_t recovered = 0;

    double rate() const { return total == 0 ? 0.0 : static_cast<double>(recovered) / total; }
};

struct RecoveryReport {
    std::map<FlawKind, RecoveryCell> per_kind;
    /// Mitosis kinds additionally broken down by difficulty bucket.
    std::map<std::pair<FlawKind, int>, RecoveryCell> per_kind_and_bucket;
};

/// Scores how much of a plan an expert undid. A flaw counts as recovered iff
///  - ClassFlip / GradeIncrement: an expert object matches the target at
///    IoU >= threshold and carries the original label;
///  - Deletion / RemovedObject: an expert object matches the removed box;
///  - FalseAnnotation / FakeObject: no expert object matches the fake box;
///  - DuplicateAnnotation: exactly one expert object matches the cell.
RecoveryReport recovery_report(const FlawPlan& plan, const StudyDataset& ground_truth,
                               const std::vector<AnnotationRecord>& expert_annotations,
                               double threshold);

/// CSV `id,score` with header.
std::map<std::string, double> load_scores_csv(const std::filesystem::path& path);
/// CSV `x_min,y_min,x_max,y_max,score` with header.
std::vector<ScoredBox> load_negatives_csv(const std::filesystem::path& path);

}  // namespace annostudy
