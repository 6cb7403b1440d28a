#include "annostudy/training.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "annostudy/errors.hpp"
#include "annostudy/rng.hpp"

namespace annostudy {

void TrainConfig::check() const {
    if (!(peak_learning_rate > 0.0)) throw ConfigError("peak learning rate must be positive");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (hidden_width < 0) throw ConfigError("hidden width must be >= 0");
    if (weight_floor < 0.0 || weight_floor > 1.0) throw ConfigError("weight floor outside [0,1]");
}

double one_cycle_lr(int step, int total_steps, double peak) {
    const double start = peak / 25.0;
    const double end = peak / 1e4;
    const double warmup = 0.3 * total_steps;
    if (step < warmup) {
        return start + (peak - start) * (static_cast<double>(step) / warmup);
    }
    const double t = (static_cast<double>(step) - warmup) / (total_steps - warmup);
    constexpr double kPi = 3.14159265358979323846;
    return end + 0.5 * (peak - end) * (1.0 + std::cos(kPi * t));
}

namespace {

VoteWeightedBatch slice(const VoteWeightedBatch& batch, const std::vector<std::size_t>& order,
                        std::size_t begin, std::size_t end) {
    VoteWeightedBatch out;
    out.min_votes = batch.min_votes;
    out.max_votes = batch.max_votes;
    out.alpha = batch.alpha;
    out.features.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const std::size_t at = order[i];
        out.features.push_back(batch.features[at]);
        out.labels.push_back(batch.labels[at]);
        out.votes.push_back(batch.votes[at]);
    }
    return out;
}

VoteWeightedBatch apply_weight_floor(VoteWeightedBatch batch, double floor) {
    if (floor <= 0.0 || batch.max_votes == batch.min_votes) return batch;
    // Raise votes below the floored weight to the equivalent vote level;
    // weights are (v - min) / (max - min), so the floor maps back to votes.
    const double span = batch.max_votes - batch.min_votes;
    const int min_allowed =
        batch.min_votes + static_cast<int>(std::ceil(floor * span - 1e-12));
    for (int& v : batch.votes) v = std::max(v, min_allowed);
    return batch;
}

}  // namespace

TrainResult train(const VoteWeightedBatch& training, const VoteWeightedBatch& validation,
                  const TrainConfig& config, LossKind kind) {
    config.check();
    training.check();
    validation.check();
    if (validation.feature_dim() != training.feature_dim()) {
        throw RangeError("validation feature dimension differs from training");
    }

    const VoteWeightedBatch effective = apply_weight_floor(training, config.weight_floor);
    const std::size_t n = effective.size();
    const std::size_t batch_size = std::min<std::size_t>(config.batch_size, n);
    const std::size_t batches_per_epoch = (n + batch_size - 1) / batch_size;
    const int total_steps = config.epochs * static_cast<int>(batches_per_epoch);

    TrainResult result;
    double best_overall = -1.0;

    for (int rep = 0; rep < config.repetitions; ++rep) {
        ClassifierModel model =
            config.hidden_width > 0
                ? ClassifierModel::one_hidden(effective.feature_dim(), config.hidden_width)
                : ClassifierModel::linear(effective.feature_dim());
        Rng init_rng(mix_seed(config.seed, fmt::format("init/{}", rep)));
        model.init_random(init_rng);
        Rng shuffle_rng(mix_seed(config.seed, fmt::format("shuffle/{}", rep)));

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});

        double best_accuracy = -1.0;
        ClassifierModel best_model = model;
        int step = 0;
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            shuffle_rng.shuffle(order);
            for (std::size_t begin = 0; begin < n; begin += batch_size) {
                const std::size_t end = std::min(begin + batch_size, n);
                const VoteWeightedBatch minibatch = slice(effective, order, begin, end);
                const auto grad = loss_gradient(minibatch, model, kind);
                const double lr = one_cycle_lr(step, total_steps, config.peak_learning_rate);
                auto& theta = model.theta();
                for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= lr * grad[k];
                ++step;
            }
            double epoch_loss = 0.0;
            try {
                epoch_loss = loss_value(effective, model, kind);
            } catch (const DomainError&) {
                // Clamped logits keep p inside (0,1) unless the parameters
                // went non-finite.
                epoch_loss = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(epoch_loss)) {
                throw DivergenceError(
                    fmt::format("training loss non-finite at repetition {}, epoch {}", rep, epoch));
            }
            const double val_accuracy = accuracy(model, validation);
            if (val_accuracy > best_accuracy) {
                best_accuracy = val_accuracy;
                best_model = model;
            }
        }
        result.best_accuracy_per_repetition.push_back(best_accuracy);
        if (best_accuracy > best_overall) {
            best_overall = best_accuracy;
            result.model = best_model;
        }
    }

    result.mean_of_best =
        std::accumulate(result.best_accuracy_per_repetition.begin(),
                        result.best_accuracy_per_repetition.end(), 0.0) /
        static_cast<double>(result.best_accuracy_per_repetition.size());
    return result;
}

VoteWeightedBatch load_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature CSV: " + path.string());

    VoteWeightedBatch batch;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string(), "empty feature CSV");
    // Header: sample_id,label,votes,f1..fd
    std::size_t expected_columns = 1 + std::count(line.begin(), line.end(), ',');
    if (expected_columns < 4) {
        throw SchemaError(path.string(), "feature CSV needs sample_id,label,votes,f1..fd");
    }
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != expected_columns) {
            throw SchemaError(fmt::format("{}:{}", path.string(), line_number),
                              fmt::format("expected {} columns, got {}", expected_columns,
                                          cells.size()));
        }
        try {
            batch.labels.push_back(std::stoi(cells[1]));
            batch.votes.push_back(std::stoi(cells[2]));
            std::vector<double> row_features;
            for (std::size_t k = 3; k < cells.size(); ++k) {
                row_features.push_back(std::stod(cells[k]));
            }
            batch.features.push_back(std::move(row_features));
        } catch (const std::exception&) {
            throw SchemaError(fmt::format("{}:{}", path.string(), line_number),
                              "non-numeric cell");
        }
    }
    if (batch.size() == 0) throw EmptyInputError("feature CSV has no samples: " + path.string());
    batch.set_vote_bounds();
    batch.check();
    return batch;
}

void write_feature_csv(const VoteWeightedBatch& batch, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "sample_id,label,votes";
    for (std::size_t k = 0; k < batch.feature_dim(); ++k) out << ",f" << (k + 1);
    out << "\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out << fmt::format("s{:05},{},{}", i, batch.labels[i], batch.votes[i]);
        for (const double f : batch.features[i]) out << fmt::format(",{}", f);
        out << "\n";
    }
}

}  // namespace annostudy
