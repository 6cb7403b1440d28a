#pragma once

#include <map>
#include <string>
#include <vector>

#include "annostudy/model.hpp"

namespace annostudy {

/// Intersection over union of two valid boxes, in [0, 1].
double iou(const BoundingBox& a, const BoundingBox& b);

struct MatchedPair {
    std::string annotation_id;
    std::string reference_id;
    double iou = 0.0;
};

struct MatchResult {
    std::vector<MatchedPair> pairs;
    std::vector<std::string> unmatched_annotations;
    std::vector<std::string> unmatched_references;
};

/// Greedy one-to-one matching in descending IoU order; only pairs with
/// IoU >= threshold are formed. Deterministic under input permutation:
/// IoU ties break by lexicographic (annotation_id, reference_id).
/// All records must share one image (MixedImageError otherwise).
MatchResult match_sets(const std::vector<AnnotationRecord>& candidates,
                       const std::vector<AnnotationRecord>& references, double threshold);

/// NMS-merged object: one physical cell with the count of distinct experts
/// who annotated it (the vote) and the per-class vote histogram.
struct ConsensusCluster {
    BoundingBox representative_box;
    int votes = 0;
    std::map<std::string, int> class_histogram;
    std::vector<std::string> member_ids;
    std::string consensus_label;
};

inline constexpr double kDefaultNmsIou = 0.5;

/// Groups mutually overlapping annotations so each physical object appears
/// once. Clusters are seeded at the annotation with the most unassigned
/// overlapping peers (ties by id); the representative box is the
/// coordinate-wise median of the members. An annotator contributing the
/// same cell twice is counted once per cluster. All records must share one
/// image. Ordering note: `task` fixes the class-enum order used to break
/// consensus-label ties.
std::vector<ConsensusCluster> cluster_consensus(const std::vector<AnnotationRecord>& annotations,
                                                double nms_iou, TaskKind task);

struct ConcordanceScore {
    /// image_id -> object-set Jaccard with label agreement required.
    std::map<std::string, double> per_image;
    double mean = 0.0;
};

/// Agreement of one expert's mode-filtered annotations with the dataset's
/// ground truth. Per image: matched pairs with equal labels divided by the
/// size of the union of expert and reference object sets; an image where
/// both sets are empty scores 1. Throws MissingAnnotatorError when the
/// expert has no annotations in the given mode.
ConcordanceScore concordance(const std::string& expert, const StudyDataset& dataset, ModeKind mode,
                             double threshold);

}  // namespace annostudy
