#include "annostudy/training_sets.hpp"

#include <fmt/format.h>

#include "annostudy/errors.hpp"

namespace annostudy {

VoteWeightedBatch build_training_set(
    const std::map<std::string, std::vector<ConsensusCluster>>& clusters_by_image,
    const std::vector<std::string>& expert_subset, FeatureExtractor& extractor, double alpha) {
    if (expert_subset.empty()) {
        throw EmptySubsetError("build_training_set: empty expert subset");
    }
    const int subset_size = static_cast<int>(expert_subset.size());

    VoteWeightedBatch batch;
    batch.alpha = alpha;
    for (const auto& [image_id, clusters] : clusters_by_image) {
        for (const auto& cluster : clusters) {
            if (cluster.votes < 1 || cluster.votes > subset_size) {
                throw RangeError(fmt::format(
                    "cluster on '{}' has {} votes but the subset holds {} experts", image_id,
                    cluster.votes, subset_size));
            }
            batch.features.push_back(extractor.cluster_features(cluster, image_id));
            batch.labels.push_back(1);
            batch.votes.push_back(cluster.votes);
        }
        for (const auto& negative : extractor.negative_samples(image_id, subset_size)) {
            batch.features.push_back(negative.features);
            batch.labels.push_back(0);
            batch.votes.push_back(negative.votes);
        }
    }
    if (batch.size() == 0) {
        throw EmptyInputError("build_training_set: no samples produced");
    }
    batch.set_vote_bounds();
    batch.check();
    return batch;
}

}  // namespace annostudy
