#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "annostudy/classifier.hpp"
#include "annostudy/votes_loss.hpp"

namespace annostudy {

struct TrainConfig {
    double peak_learning_rate = 0.05;  // one-cycle peak
    int epochs = 100;
    int batch_size = 32;
    int repetitions = 5;
    std::uint64_t seed = 0;
    int hidden_width = 0;  // 0 selects the linear model
    /// Optional lower bound on the vote weight; 0 keeps the exact
    /// zero-at-minimum-votes behavior.
    double weight_floor = 0.0;

    void check() const;
};

/// One-cycle schedule: linear warmup over the first 30% of steps from
/// peak/25 to peak, then cosine decay to peak/1e4.
double one_cycle_lr(int step, int total_steps, double peak);

struct TrainResult {
    ClassifierModel model;  // snapshot from the best repetition's best epoch
    std::vector<double> best_accuracy_per_repetition;
    double mean_of_best = 0.0;
};

/// Minibatch gradient descent under the one-cycle schedule, repeated
/// config.repetitions times from fresh seeded initializations; reports the
/// best validation accuracy per repetition and their mean. Deterministic
/// given (config, batches). Throws DivergenceError if the training loss
/// becomes non-finite.
TrainResult train(const VoteWeightedBatch& training, const VoteWeightedBatch& validation,
                  const TrainConfig& config, LossKind kind);

/// CSV with header sample_id,label,votes,f1..fd. Vote bounds are set from
/// the loaded votes (dataset-wide convention).
VoteWeightedBatch load_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const VoteWeightedBatch& batch, const std::filesystem::path& path);

}  // namespace annostudy
