#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "annostudy/rng.hpp"
#include "annostudy/votes_loss.hpp"

namespace annostudy {

enum class Architecture { Linear, OneHidden };
enum class LossKind { Votes, PlainBce };

LossKind loss_kind_from_string(const std::string& token);
std::string to_string(LossKind kind);

inline constexpr double kLogitClamp = 30.0;
inline constexpr int kDefaultHiddenWidth = 32;

/// Differentiable scorer mapping a feature vector to a logit; the sigmoid
/// output is kept strictly inside (0, 1) by clamping the logit to
/// +-kLogitClamp. Either a linear model or one tanh hidden layer.
class ClassifierModel {
public:
    ClassifierModel() = default;
    static ClassifierModel linear(std::size_t feature_dim);
    static ClassifierModel one_hidden(std::size_t feature_dim, int width = kDefaultHiddenWidth);

    void init_random(Rng& rng);

    double logit(std::span<const double> x) const;
    /// sigmoid(clamped logit), strictly inside (0, 1).
    double predict(std::span<const double> x) const;
    std::vector<double> predict_batch(const VoteWeightedBatch& batch) const;

    Architecture architecture() const { return architecture_; }
    std::size_t feature_dim() const { return feature_dim_; }
    int hidden_width() const { return hidden_width_; }
    std::vector<double>& theta() { return theta_; }
    const std::vector<double>& theta() const { return theta_; }

    std::string to_json() const;
    static ClassifierModel from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static ClassifierModel load(const std::filesystem::path& path);

private:
    Architecture architecture_ = Architecture::Linear;
    std::size_t feature_dim_ = 0;
    int hidden_width_ = 0;
    std::vector<double> theta_;
};

/// Analytic gradient of the vote-weighted (or plain) cross entropy with
/// respect to the model parameters; summation runs in sample order so the
/// result is bit-stable. For the linear model each sample contributes
/// alpha/n * weight_i * (p_i - y_i) * x_i to the weight part.
std::vector<double> loss_gradient(const VoteWeightedBatch& batch, const ClassifierModel& model,
                                  LossKind kind);

/// Loss evaluated through the model (predictions = model.predict per row).
double loss_value(const VoteWeightedBatch& batch, const ClassifierModel& model, LossKind kind);

/// Fraction of samples with (p > 0.5) equal to the label.
double accuracy(const ClassifierModel& model, const VoteWeightedBatch& batch);

}  // namespace annostudy
