#pragma once

#include <cstddef>
#include <vector>

namespace annostudy {

/// Batch of (features, binary labels, per-sample expert vote counts) with
/// vote bounds taken over the whole training set, not per minibatch, so the
/// weight of a sample is stationary across batches.
struct VoteWeightedBatch {
    std::vector<std::vector<double>> features;  // n x d
    std::vector<int> labels;                    // y_i in {0, 1}
    std::vector<int> votes;                     // v_i >= 1
    int min_votes = 1;                          // over the whole training set
    int max_votes = 1;
    double alpha = 1.0;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.empty() ? 0 : features.front().size(); }

    /// Sets vote bounds from this batch's own votes (dataset-wide caller).
    void set_vote_bounds();
    /// Throws on violated invariants (shape mismatch, label/vote ranges).
    void check() const;
};

/// Min-max normalized vote weight (v - min) / (max - min) in [0, 1].
/// Degenerate bounds (max == min, e.g. a single-expert training set) give
/// weight 1 for every sample so training reduces to plain scaled cross
/// entropy. Throws RangeError if v lies outside [min, max].
double vote_weight(int v, int min_votes, int max_votes);

/// Vote-weighted binary cross entropy:
///   -(alpha/n) * sum_i [y_i log p_i + (1-y_i) log(1-p_i)] * weight_i
/// Equals alpha times mean BCE when every weight is 1. Throws DomainError
/// unless every p_i lies strictly inside (0, 1).
double votes_loss(const VoteWeightedBatch& batch, const std::vector<double>& predictions);

/// Plain (uniformly weighted) counterpart used as the baseline.
double plain_bce_loss(const VoteWeightedBatch& batch, const std::vector<double>& predictions);

}  // namespace annostudy
