#include "annostudy/votes_loss.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "annostudy/errors.hpp"

namespace annostudy {

void VoteWeightedBatch::set_vote_bounds() {
    if (votes.empty()) {
        min_votes = max_votes = 1;
        return;
    }
    const auto [lo, hi] = std::minmax_element(votes.begin(), votes.end());
    min_votes = *lo;
    max_votes = *hi;
}

void VoteWeightedBatch::check() const {
    if (size() == 0) {
        throw EmptyInputError("batch is empty");
    }
    if (features.size() != labels.size() || votes.size() != labels.size()) {
        throw RangeError("batch arrays disagree in length");
    }
    const std::size_t d = feature_dim();
    for (const auto& row : features) {
        if (row.size() != d) throw RangeError("ragged feature rows");
    }
    if (!(alpha > 0.0)) throw RangeError("alpha must be positive");
    for (std::size_t i = 0; i < size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw RangeError(fmt::format("label at {} is {}, expected 0 or 1", i, labels[i]));
        }
        if (votes[i] < min_votes || votes[i] > max_votes) {
            throw RangeError(fmt::format("vote {} at {} outside bounds [{}, {}]", votes[i], i,
                                         min_votes, max_votes));
        }
    }
}

double vote_weight(int v, int min_votes, int max_votes) {
    if (v < min_votes || v > max_votes) {
        throw RangeError(
            fmt::format("vote {} outside bounds [{}, {}]", v, min_votes, max_votes));
    }
    if (max_votes == min_votes) return 1.0;
    return static_cast<double>(v - min_votes) / static_cast<double>(max_votes - min_votes);
}

namespace {

double weighted_bce(const VoteWeightedBatch& batch, const std::vector<double>& predictions,
                    bool vote_weighted) {
    batch.check();
    if (predictions.size() != batch.size()) {
        throw RangeError("predictions length differs from batch size");
    }
    const std::size_t n = batch.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = predictions[i];
        if (!(p > 0.0) || !(p < 1.0)) {
            throw DomainError(fmt::format("prediction at {} is {}, expected p in (0, 1)", i, p));
        }
        const double w =
            vote_weighted ? vote_weight(batch.votes[i], batch.min_votes, batch.max_votes) : 1.0;
        const double y = batch.labels[i];
        total += (y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) * w;
    }
    return -batch.alpha / static_cast<double>(n) * total;
}

}  // namespace

double votes_loss(const VoteWeightedBatch& batch, const std::vector<double>& predictions) {
    return weighted_bce(batch, predictions, true);
}

double plain_bce_loss(const VoteWeightedBatch& batch, const std::vector<double>& predictions) {
    return weighted_bce(batch, predictions, false);
}

}  // namespace annostudy
