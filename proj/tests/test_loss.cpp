#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "annostudy/classifier.hpp"
#include "annostudy/errors.hpp"
#include "annostudy/rng.hpp"
#include "annostudy/training.hpp"
#include "annostudy/training_sets.hpp"
#include "annostudy/votes_loss.hpp"

using namespace annostudy;

namespace {

VoteWeightedBatch random_batch(Rng& rng, std::size_t n, std::size_t dim, int max_votes) {
    VoteWeightedBatch batch;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(dim);
        for (double& f : row) f = rng.normal();
        batch.features.push_back(std::move(row));
        batch.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
        batch.votes.push_back(rng.uniform_int(1, max_votes));
    }
    batch.set_vote_bounds();
    return batch;
}

/// Central finite differences through loss_value; the oracle for the
/// analytic gradient.
std::vector<double> finite_difference_gradient(const VoteWeightedBatch& batch,
                                               ClassifierModel model, LossKind kind,
                                               double step = 1e-5) {
    std::vector<double> grad(model.theta().size());
    for (std::size_t k = 0; k < grad.size(); ++k) {
        const double original = model.theta()[k];
        model.theta()[k] = original + step;
        const double up = loss_value(batch, model, kind);
        model.theta()[k] = original - step;
        const double down = loss_value(batch, model, kind);
        model.theta()[k] = original;
        grad[k] = (up - down) / (2.0 * step);
    }
    return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double scale = std::max({std::fabs(a[k]), std::fabs(b[k]), 1e-8});
        worst = std::max(worst, std::fabs(a[k] - b[k]) / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("vote weight normalizes votes to [0, 1]") {
    CHECK(vote_weight(10, 1, 10) == 1.0);
    CHECK(vote_weight(1, 1, 10) == 0.0);
    // (5 - 1) / (9 - 1), direct evaluation
    CHECK(vote_weight(5, 1, 9) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(vote_weight(11, 1, 10), RangeError);
    CHECK_THROWS_AS(vote_weight(0, 1, 10), RangeError);
}

TEST_CASE("degenerate bounds give weight 1 so a single-expert set trains plain") {
    CHECK(vote_weight(3, 3, 3) == 1.0);
    VoteWeightedBatch batch;
    batch.features = {{1.0}, {2.0}};
    batch.labels = {1, 0};
    batch.votes = {1, 1};
    batch.set_vote_bounds();
    const std::vector<double> predictions{0.5, 0.5};
    CHECK(votes_loss(batch, predictions) ==
          doctest::Approx(plain_bce_loss(batch, predictions)).epsilon(1e-15));
}

TEST_CASE("single sample at p=0.5 gives -log(0.5)") {
    VoteWeightedBatch batch;
    batch.features = {{0.0}};
    batch.labels = {1};
    batch.votes = {1};
    batch.set_vote_bounds();
    CHECK(votes_loss(batch, {0.5}) == doctest::Approx(0.6931471805599453).epsilon(1e-9));
}

TEST_CASE("a minimum-vote sample is annihilated by its zero weight") {
    VoteWeightedBatch batch;
    batch.features = {{0.0}};
    batch.labels = {1};
    batch.votes = {1};
    batch.min_votes = 1;
    batch.max_votes = 10;
    CHECK(votes_loss(batch, {0.5}) == 0.0);
}

TEST_CASE("two-sample hand value") {
    // y=(1,0), p=(0.9,0.2), v=(10,1), bounds (1,10), alpha=1:
    // -(1/2)[log(0.9)*1 + log(0.8)*0] = 0.052680...
    VoteWeightedBatch batch;
    batch.features = {{0.0}, {0.0}};
    batch.labels = {1, 0};
    batch.votes = {10, 1};
    batch.min_votes = 1;
    batch.max_votes = 10;
    CHECK(votes_loss(batch, {0.9, 0.2}) ==
          doctest::Approx(0.05268025782891315).epsilon(1e-9));
}

TEST_CASE("predictions outside (0,1) are a domain error") {
    VoteWeightedBatch batch;
    batch.features = {{0.0}};
    batch.labels = {1};
    batch.votes = {1};
    batch.set_vote_bounds();
    CHECK_THROWS_AS(votes_loss(batch, {0.0}), DomainError);
    CHECK_THROWS_AS(votes_loss(batch, {1.0}), DomainError);
    CHECK_THROWS_AS(votes_loss(batch, {-0.1}), DomainError);
}

TEST_CASE("uniform votes reduce the loss to alpha times mean BCE") {
    Rng rng(31);
    for (int trial = 0; trial < 500; ++trial) {
        VoteWeightedBatch batch = random_batch(rng, 1 + rng.uniform_index(20), 3, 1);
        batch.alpha = rng.uniform(0.5, 3.0);
        std::vector<double> predictions(batch.size());
        for (double& p : predictions) p = rng.uniform(0.01, 0.99);

        double mean_bce = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const double y = batch.labels[i];
            mean_bce -= y * std::log(predictions[i]) + (1.0 - y) * std::log(1.0 - predictions[i]);
        }
        mean_bce /= static_cast<double>(batch.size());
        CHECK(std::fabs(votes_loss(batch, predictions) - batch.alpha * mean_bce) < 1e-12);
    }
}

TEST_CASE("loss is nondecreasing in a sample's vote count") {
    VoteWeightedBatch batch;
    batch.features = {{0.0}};
    batch.labels = {1};
    batch.votes = {1};
    batch.min_votes = 1;
    batch.max_votes = 10;
    double previous = -1.0;
    for (int v = 1; v <= 10; ++v) {
        batch.votes[0] = v;
        const double value = votes_loss(batch, {0.3});
        CHECK(value >= previous);
        previous = value;
    }
}

TEST_CASE("alpha=2 doubles the loss exactly") {
    Rng rng(77);
    VoteWeightedBatch batch = random_batch(rng, 13, 2, 7);
    std::vector<double> predictions(batch.size());
    for (double& p : predictions) p = rng.uniform(0.05, 0.95);
    batch.alpha = 1.0;
    const double base = votes_loss(batch, predictions);
    batch.alpha = 2.0;
    CHECK(votes_loss(batch, predictions) == doctest::Approx(2.0 * base).epsilon(1e-15));
}

TEST_CASE("analytic gradient matches central differences on both architectures") {
    Rng rng(123);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t dim = 1 + rng.uniform_index(4);
        const VoteWeightedBatch batch = random_batch(rng, 1 + rng.uniform_index(12), dim, 7);
        ClassifierModel model = trial % 2 == 0
                                    ? ClassifierModel::linear(dim)
                                    : ClassifierModel::one_hidden(dim, 1 + (trial % 5));
        model.init_random(rng);
        const LossKind kind = trial % 3 == 0 ? LossKind::PlainBce : LossKind::Votes;
        const auto analytic = loss_gradient(batch, model, kind);
        const auto numeric = finite_difference_gradient(batch, model, kind);
        CHECK(max_relative_error(analytic, numeric) < 1e-6);
    }
}

TEST_CASE("single-sample linear gradient is weight*(p-y)*x") {
    VoteWeightedBatch batch;
    batch.features = {{2.0, -1.0}};
    batch.labels = {1};
    batch.votes = {5};
    batch.min_votes = 1;
    batch.max_votes = 9;
    auto model = ClassifierModel::linear(2);
    model.theta() = {0.3, -0.2, 0.1};
    const double p = model.predict(batch.features[0]);
    const double w = vote_weight(5, 1, 9);
    const auto grad = loss_gradient(batch, model, LossKind::Votes);
    CHECK(grad[0] == doctest::Approx(w * (p - 1.0) * 2.0).epsilon(1e-12));
    CHECK(grad[1] == doctest::Approx(w * (p - 1.0) * -1.0).epsilon(1e-12));
    CHECK(grad[2] == doctest::Approx(w * (p - 1.0)).epsilon(1e-12));
}

TEST_CASE("zero-weight samples contribute nothing to loss or gradient") {
    VoteWeightedBatch batch;
    batch.features = {{1.0}, {2.0}};
    batch.labels = {1, 1};
    batch.votes = {1, 1};  // both at the minimum while max is larger
    batch.min_votes = 1;
    batch.max_votes = 4;
    auto model = ClassifierModel::linear(1);
    model.theta() = {0.7, -0.1};
    CHECK(votes_loss(batch, model.predict_batch(batch)) == 0.0);
    for (const double g : loss_gradient(batch, model, LossKind::Votes)) CHECK(g == 0.0);

    // With all weights 1 the gradient equals alpha times the plain one.
    batch.votes = {4, 4};
    batch.min_votes = 4;
    batch.max_votes = 4;
    batch.alpha = 2.5;
    const auto weighted = loss_gradient(batch, model, LossKind::Votes);
    batch.alpha = 1.0;
    const auto plain = loss_gradient(batch, model, LossKind::PlainBce);
    for (std::size_t k = 0; k < weighted.size(); ++k) {
        CHECK(weighted[k] == doctest::Approx(2.5 * plain[k]).epsilon(1e-12));
    }
}

TEST_CASE("predictions stay strictly inside (0,1) even for huge logits") {
    auto model = ClassifierModel::linear(1);
    model.theta() = {1000.0, 0.0};
    const double high = model.predict(std::vector<double>{1.0});
    const double low = model.predict(std::vector<double>{-1.0});
    CHECK(high < 1.0);
    CHECK(high > 0.99);
    CHECK(low > 0.0);
    CHECK(low < 0.01);
}

TEST_CASE("model JSON round-trips") {
    Rng rng(5);
    auto model = ClassifierModel::one_hidden(3, 4);
    model.init_random(rng);
    const ClassifierModel loaded = ClassifierModel::from_json(model.to_json());
    CHECK(loaded.architecture() == Architecture::OneHidden);
    CHECK(loaded.feature_dim() == 3);
    CHECK(loaded.hidden_width() == 4);
    CHECK(loaded.theta() == model.theta());
    CHECK_THROWS_AS(ClassifierModel::from_json("{}"), SchemaError);
}

TEST_CASE("one-cycle schedule warms up to the peak then decays") {
    const int total = 100;
    const double peak = 0.05;
    CHECK(one_cycle_lr(0, total, peak) == doctest::Approx(peak / 25.0));
    double max_seen = 0.0;
    for (int step = 0; step < total; ++step) {
        max_seen = std::max(max_seen, one_cycle_lr(step, total, peak));
    }
    CHECK(max_seen == doctest::Approx(peak).epsilon(1e-6));
    CHECK(one_cycle_lr(total, total, peak) == doctest::Approx(peak / 1e4).epsilon(1e-6));
}

TEST_CASE("training separates a linearly separable problem") {
    Rng rng(42);
    VoteWeightedBatch training;
    VoteWeightedBatch validation;
    for (int i = 0; i < 120; ++i) {
        const int label = i % 2;
        const double cx = label == 1 ? 2.0 : -2.0;
        std::vector<double> row{cx + 0.3 * rng.normal(), cx + 0.3 * rng.normal()};
        auto& target = i % 3 == 0 ? validation : training;
        target.features.push_back(row);
        target.labels.push_back(label);
        target.votes.push_back(1);
    }
    training.set_vote_bounds();
    validation.set_vote_bounds();

    TrainConfig config;
    config.epochs = 200;
    config.batch_size = 16;
    config.repetitions = 2;
    config.seed = 9;
    for (const LossKind kind : {LossKind::PlainBce, LossKind::Votes}) {
        const TrainResult result = train(training, validation, config, kind);
        CHECK(result.mean_of_best == doctest::Approx(1.0));
    }
}

TEST_CASE("training is deterministic in seed and config") {
    Rng rng(8);
    VoteWeightedBatch batch = random_batch(rng, 60, 2, 6);
    VoteWeightedBatch validation = random_batch(rng, 40, 2, 1);
    TrainConfig config;
    config.epochs = 30;
    config.repetitions = 2;
    config.seed = 1234;
    const TrainResult a = train(batch, validation, config, LossKind::Votes);
    const TrainResult b = train(batch, validation, config, LossKind::Votes);
    CHECK(a.model.theta() == b.model.theta());
    CHECK(a.best_accuracy_per_repetition == b.best_accuracy_per_repetition);

    config.seed = 4321;
    const TrainResult c = train(batch, validation, config, LossKind::Votes);
    CHECK(c.model.theta() != a.model.theta());
}

TEST_CASE("the optional weight floor lifts minimum-vote samples") {
    Rng rng(14);
    VoteWeightedBatch batch = random_batch(rng, 40, 2, 10);
    batch.votes[0] = 1;
    batch.votes[1] = 10;
    batch.set_vote_bounds();
    VoteWeightedBatch validation = random_batch(rng, 30, 2, 1);

    // Floor 0.12 over bounds (1,10) maps to the next achievable vote level,
    // so training behaves as if every vote were at least 1 + ceil(0.12*9) = 3.
    VoteWeightedBatch lifted = batch;
    for (int& v : lifted.votes) v = std::max(v, 3);

    TrainConfig config;
    config.epochs = 15;
    config.repetitions = 1;
    config.seed = 77;
    TrainConfig floored = config;
    floored.weight_floor = 0.12;

    const TrainResult with_floor = train(batch, validation, floored, LossKind::Votes);
    const TrainResult with_lifted_votes = train(lifted, validation, config, LossKind::Votes);
    CHECK(with_floor.model.theta() == with_lifted_votes.model.theta());

    // Floor off keeps the exact zero-at-minimum behavior.
    const TrainResult without = train(batch, validation, config, LossKind::Votes);
    CHECK(without.model.theta() != with_floor.model.theta());
}

TEST_CASE("non-finite features surface as a divergence error") {
    VoteWeightedBatch batch;
    batch.features = {{std::numeric_limits<double>::quiet_NaN()}, {1.0}};
    batch.labels = {1, 0};
    batch.votes = {1, 1};
    batch.set_vote_bounds();
    TrainConfig config;
    config.epochs = 2;
    config.repetitions = 1;
    CHECK_THROWS_AS(train(batch, batch, config, LossKind::PlainBce), DivergenceError);
}

TEST_CASE("feature CSV round-trips") {
    Rng rng(3);
    const VoteWeightedBatch batch = random_batch(rng, 25, 3, 8);
    const auto path = std::filesystem::temp_directory_path() / "annostudy_features.csv";
    write_feature_csv(batch, path);
    const VoteWeightedBatch loaded = load_feature_csv(path);
    REQUIRE(loaded.size() == batch.size());
    CHECK(loaded.labels == batch.labels);
    CHECK(loaded.votes == batch.votes);
    CHECK(loaded.min_votes == batch.min_votes);
    CHECK(loaded.max_votes == batch.max_votes);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t k = 0; k < batch.feature_dim(); ++k) {
            CHECK(loaded.features[i][k] == doctest::Approx(batch.features[i][k]).epsilon(1e-12));
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("build_training_set rejects an empty subset and bad vote counts") {
    struct StubExtractor : FeatureExtractor {
        std::vector<double> cluster_features(const ConsensusCluster&,
                                             const std::string&) override {
            return {1.0};
        }
        std::vector<NegativeSample> negative_samples(const std::string&, int count) override {
            return {{{-1.0}, count}};
        }
    } extractor;

    ConsensusCluster cluster;
    cluster.votes = 2;
    cluster.consensus_label = "mitotic_figure";
    std::map<std::string, std::vector<ConsensusCluster>> clusters{{"img", {cluster}}};

    CHECK_THROWS_AS(build_training_set(clusters, {}, extractor), EmptySubsetError);
    CHECK_THROWS_AS(build_training_set(clusters, {"only_one"}, extractor), RangeError);

    const VoteWeightedBatch batch = build_training_set(clusters, {"e1", "e2", "e3"}, extractor);
    REQUIRE(batch.size() == 2);  // one cluster + one negative
    CHECK(batch.labels == std::vector<int>{1, 0});
    CHECK(batch.votes == std::vector<int>{2, 3});
    CHECK(batch.min_votes == 2);
    CHECK(batch.max_votes == 3);
}
