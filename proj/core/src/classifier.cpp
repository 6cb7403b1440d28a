#include "annostudy/classifier.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "annostudy/errors.hpp"

namespace annostudy {

using nlohmann::json;

LossKind loss_kind_from_string(const std::string& token) {
    if (token == "votes") return LossKind::Votes;
    if (token == "plain_bce") return LossKind::PlainBce;
    throw ConfigError("unknown loss kind '" + token + "' (expected votes|plain_bce)");
}

std::string to_string(LossKind kind) {
    return kind == LossKind::Votes ? "votes" : "plain_bce";
}

ClassifierModel ClassifierModel::linear(std::size_t feature_dim) {
    ClassifierModel model;
    model.architecture_ = Architecture::Linear;
    model.feature_dim_ = feature_dim;
    model.hidden_width_ = 0;
    model.theta_.assign(feature_dim + 1, 0.0);  // weights + bias
    return model;
}

ClassifierModel ClassifierModel::one_hidden(std::size_t feature_dim, int width) {
    if (width <= 0) throw ConfigError("hidden width must be positive");
    ClassifierModel model;
    model.architecture_ = Architecture::OneHidden;
    model.feature_dim_ = feature_dim;
    model.hidden_width_ = width;
    // W1 (width x d) + b1 (width) + w2 (width) + b2
    model.theta_.assign(static_cast<std::size_t>(width) * feature_dim + 2 * width + 1, 0.0);
    return model;
}

void ClassifierModel::init_random(Rng& rng) {
    const double scale =
        1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(feature_dim_, 1)));
    for (double& value : theta_) value = scale * rng.normal();
}

double ClassifierModel::logit(std::span<const double> x) const {
    if (x.size() != feature_dim_) {
        throw RangeError("feature vector dimension mismatch");
    }
    if (architecture_ == Architecture::Linear) {
        double z = theta_[feature_dim_];
        for (std::size_t k = 0; k < feature_dim_; ++k) z += theta_[k] * x[k];
        return z;
    }
    const std::size_t w = static_cast<std::size_t>(hidden_width_);
    const double* w1 = theta_.data();
    const double* b1 = theta_.data() + w * feature_dim_;
    const double* w2 = b1 + w;
    const double b2 = *(w2 + w);
    double z = b2;
    for (std::size_t j = 0; j < w; ++j) {
        double a = b1[j];
        for (std::size_t k = 0; k < feature_dim_; ++k) a += w1[j * feature_dim_ + k] * x[k];
        z += w2[j] * std::tanh(a);
    }
    return z;
}

namespace {

double clamp_logit(double z) {
    if (z > kLogitClamp) return kLogitClamp;
    if (z < -kLogitClamp) return -kLogitClamp;
    return z;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double ClassifierModel::predict(std::span<const double> x) const {
    return sigmoid(clamp_logit(logit(x)));
}

std::vector<double> ClassifierModel::predict_batch(const VoteWeightedBatch& batch) const {
    std::vector<double> predictions;
    predictions.reserve(batch.size());
    for (const auto& row : batch.features) predictions.push_back(predict(row));
    return predictions;
}

std::string ClassifierModel::to_json() const {
    json root;
    root["architecture"] = architecture_ == Architecture::Linear ? "linear" : "one_hidden";
    root["feature_dim"] = feature_dim_;
    if (architecture_ == Architecture::OneHidden) root["hidden_width"] = hidden_width_;
    root["theta"] = theta_;
    return root.dump(2) + "\n";
}

ClassifierModel ClassifierModel::from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid model JSON: ") + e.what());
    }
    if (!root.is_object() || !root.contains("architecture") || !root.contains("feature_dim") ||
        !root.contains("theta")) {
        throw SchemaError("", "model JSON needs architecture, feature_dim, theta");
    }
    const std::string arch = root["architecture"].get<std::string>();
    const auto dim = root["feature_dim"].get<std::size_t>();
    ClassifierModel model;
    if (arch == "linear") {
        model = ClassifierModel::linear(dim);
    } else if (arch == "one_hidden") {
        model = ClassifierModel::one_hidden(dim, root.value("hidden_width", kDefaultHiddenWidth));
    } else {
        throw SchemaError("/architecture", "expected linear|one_hidden");
    }
    const auto theta = root["theta"].get<std::vector<double>>();
    if (theta.size() != model.theta_.size()) {
        throw SchemaError("/theta", "theta length does not match architecture");
    }
    model.theta_ = theta;
    return model;
}

void ClassifierModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << to_json();
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::vector<double> loss_gradient(const VoteWeightedBatch& batch, const ClassifierModel& model,
                                  LossKind kind) {
    batch.check();
    const std::size_t n = batch.size();
    const std::size_t d = model.feature_dim();
    std::vector<double> grad(model.theta().size(), 0.0);
    const double inv_n = batch.alpha / static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto& x = batch.features[i];
        const double raw_z = model.logit(x);
        // Clamped logits have zero slope; keep the analytic gradient
        // consistent with the forward pass.
        if (raw_z > kLogitClamp || raw_z < -kLogitClamp) continue;
        const double p = sigmoid(raw_z);
        const double weight = kind == LossKind::Votes
                                  ? vote_weight(batch.votes[i], batch.min_votes, batch.max_votes)
                                  : 1.0;
        const double g = inv_n * weight * (p - batch.labels[i]);
        if (g == 0.0) continue;

        if (model.architecture() == Architecture::Linear) {
            for (std::size_t k = 0; k < d; ++k) grad[k] += g * x[k];
            grad[d] += g;
        } else {
            const std::size_t w = static_cast<std::size_t>(model.hidden_width());
            const double* w1 = model.theta().data();
            const double* b1 = w1 + w * d;
            const double* w2 = b1 + w;
            double* g_w1 = grad.data();
            double* g_b1 = g_w1 + w * d;
            double* g_w2 = g_b1 + w;
            double* g_b2 = g_w2 + w;
            for (std::size_t j = 0; j < w; ++j) {
                double a = b1[j];
                for (std::size_t k = 0; k < d; ++k) a += w1[j * d + k] * x[k];
                const double h = std::tanh(a);
                g_w2[j] += g * h;
                const double back = g * w2[j] * (1.0 - h * h);
                g_b1[j] += back;
                for (std::size_t k = 0; k < d; ++k) g_w1[j * d + k] += back * x[k];
            }
            *g_b2 += g;
        }
    }
    return grad;
}

double loss_value(const VoteWeightedBatch& batch, const ClassifierModel& model, LossKind kind) {
    const auto predictions = model.predict_batch(batch);
    return kind == LossKind::Votes ? votes_loss(batch, predictions)
                                   : plain_bce_loss(batch, predictions);
}

double accuracy(const ClassifierModel& model, const VoteWeightedBatch& batch) {
    if (batch.size() == 0) throw EmptyInputError("accuracy: empty batch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int predicted = model.predict(batch.features[i]) > 0.5 ? 1 : 0;
        if (predicted == batch.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace annostudy
