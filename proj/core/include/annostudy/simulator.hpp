#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "annostudy/model.hpp"

namespace annostudy {

/// Behavioral parameters of one simulated expert.
///
/// detection_prob is indexed by an object's difficulty bucket with 0 the
/// hardest; unbucketed tasks put their overall detection probability in
/// slot 0. acceptance_bias is the probability of leaving a presented item
/// unexamined in Aided mode, the central bias the study measures.
struct AnnotatorProfile {
    std::string annotator_id;
    std::array<double, 3> detection_prob = {1.0, 1.0, 1.0};
    double false_positive_rate = 0.0;  // expected spurious objects per image
    /// Row-stochastic matrix over the task's label space (row = true class);
    /// empty means identity.
    std::vector<std::vector<double>> class_confusion;
    double acceptance_bias = 0.0;
    double localization_jitter = 0.0;  // box shift scale in pixels
    double seconds_per_object = 1.0;
    double seconds_per_image_base = 1.0;

    void check(TaskKind task) const;
};

struct SimulationContext {
    /// IoU threshold used to relate proposals, ground truth, and output.
    double match_threshold = 0.5;
    /// Box radius for spurious unaided annotations.
    double point_radius = kDefaultPointRadius;
    /// Ground-truth annotation id -> difficulty bucket (0 = hardest);
    /// missing ids default to 0.
    std::map<std::string, int> difficulty_bucket;
    /// Proposal annotation id -> fake-score bucket (0 = easiest to spot);
    /// drives how readily a re-examined fake is rejected.
    std::map<std::string, int> fake_bucket;
};

struct SimulationResult {
    std::vector<AnnotationRecord> annotations;
    std::map<std::string, double> durations_by_image;  // seconds per image
};

/// Simulates one annotation session over every image of the dataset.
///
/// Unaided: each ground-truth object is kept with detection_prob for its
/// bucket, relabeled through the confusion row, and jittered; spurious
/// objects are added with Poisson(false_positive_rate) per image.
///
/// Aided (requires "proposal" records; MissingProposalsError otherwise):
/// each proposal is left untouched with probability acceptance_bias,
/// otherwise re-examined against ground truth -- corrected to the true
/// geometry (confusion-relabeled) when the object is recognized, deleted
/// when it matches nothing or duplicates an already-corrected object.
/// Ground-truth objects absent from the output are then each examined with
/// probability 1 - acceptance_bias and recovered with detection_prob, so
/// acceptance_bias = 1 reproduces the proposals exactly.
///
/// Durations: base + seconds_per_object * work, where work counts produced
/// objects (Unaided) or examined items (Aided). Deterministic per seed; the
/// caller derives seeds per (annotator, mode) for independent streams.
SimulationResult simulate_annotator(const StudyDataset& dataset, const AnnotatorProfile& profile,
                                    ModeKind mode, std::uint64_t seed,
                                    const SimulationContext& context = {});

}  // namespace annostudy
