#pragma once

#include <map>
#include <string>
#include <vector>

#include "annostudy/matching.hpp"
#include "annostudy/votes_loss.hpp"

namespace annostudy {

struct NegativeSample {
    std::vector<double> features;
    int votes = 1;
};

/// Supplies feature vectors for consensus clusters and the background
/// (negative) samples that complete a binary training set.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<double> cluster_features(const ConsensusCluster& cluster,
                                                 const std::string& image_id) = 0;
    virtual std::vector<NegativeSample> negative_samples(const std::string& image_id,
                                                         int annotator_count) = 0;
};

/// One positive sample per cluster (label 1, v = cluster votes) plus the
/// extractor's background negatives (label 0); vote bounds are computed
/// over the entire resulting set. A single-expert subset ends up with
/// min = max votes, so every weight degenerates to 1.
VoteWeightedBatch build_training_set(
    const std::map<std::string, std::vector<ConsensusCluster>>& clusters_by_image,
    const std::vector<std::string>& expert_subset, FeatureExtractor& extractor,
    double alpha = 1.0);

}  // namespace annostudy
