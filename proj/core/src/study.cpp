#include "annostudy/study.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include <json.hpp>

#include "annostudy/dataset_io.hpp"
#include "annostudy/errors.hpp"
#include "annostudy/rng.hpp"

namespace annostudy {

using nlohmann::json;

StudyDataset synthesize_ground_truth(TaskKind task, const SyntheticDatasetConfig& config,
                                     std::uint64_t seed) {
    if (config.images <= 0 || config.objects_per_image <= 0 || config.slides <= 0) {
        throw ConfigError("synthetic dataset needs positive counts");
    }
    if (config.width <= 4.0 * config.box_radius || config.height <= 4.0 * config.box_radius) {
        throw ConfigError("synthetic images too small for the box radius");
    }
    Rng rng(mix_seed(seed, "synthetic_ground_truth"));
    StudyDataset dataset;
    dataset.task = task;
    const auto& space = label_space(task);

    for (int i = 0; i < config.images; ++i) {
        ImageRecord image;
        image.image_id = fmt::format("img_{:03}", i + 1);
        image.task = task;
        image.width = config.width;
        image.height = config.height;
        image.source_slide_id = fmt::format("slide_{}", i % config.slides + 1);
        dataset.images.push_back(image);

        const int lo = std::max(1, static_cast<int>(std::floor(0.7 * config.objects_per_image)));
        const int hi = static_cast<int>(std::ceil(1.3 * config.objects_per_image));
        const int count = rng.uniform_int(lo, hi);
        std::vector<BoundingBox> placed;
        for (int k = 0; k < count; ++k) {
            BoundingBox box;
            bool ok = false;
            for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
                const double r = config.box_radius;
                const double cx = r + rng.uniform() * (config.width - 2.0 * r);
                const double cy = r + rng.uniform() * (config.height - 2.0 * r);
                box = box_from_point(cx, cy, r);
                ok = true;
                for (const auto& other : placed) {
                    if (iou(box, other) > 0.2) {
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) break;  // image saturated
            placed.push_back(box);
            AnnotationRecord record;
            record.id = fmt::format("gt_{:03}_{:03}", i + 1, k + 1);
            record.image_id = image.image_id;
            record.annotator_id = std::string(kGroundTruthAnnotator);
            record.provenance = Provenance::GroundTruth;
            record.mode = ModeKind::Unaided;
            record.box = box;
            record.label = space[rng.uniform_index(space.size())];
            dataset.annotations.push_back(std::move(record));
        }
    }
    return dataset;
}

GaussianFeatureExtractor::GaussianFeatureExtractor(const StudyDataset& ground_truth,
                                                   FeatureConfig config, double match_threshold,
                                                   std::uint64_t seed)
    : ground_truth_(ground_truth),
      config_(config),
      match_threshold_(match_threshold),
      seed_(seed) {
    if (config_.dim <= 0 || config_.sigma <= 0.0) {
        throw ConfigError("feature config needs positive dim and sigma");
    }
    for (const auto& record : ground_truth_.annotations) {
        if (record.annotator_id == kGroundTruthAnnotator) {
            objects_by_image_[record.image_id].push_back(&record);
        }
    }
}

std::vector<double> GaussianFeatureExtractor::draw(const std::string& key, bool positive) const {
    Rng rng(mix_seed(seed_, key));
    const double center = (positive ? 0.5 : -0.5) * config_.separation;
    std::vector<double> features(static_cast<std::size_t>(config_.dim));
    for (double& f : features) f = rng.normal(center, config_.sigma);
    return features;
}

std::vector<double> GaussianFeatureExtractor::cluster_features(const ConsensusCluster& cluster,
                                                               const std::string& image_id) {
    const AnnotationRecord* matched = nullptr;
    double best = 0.0;
    if (const auto it = objects_by_image_.find(image_id); it != objects_by_image_.end()) {
        for (const auto* object : it->second) {
            const double overlap = iou(cluster.representative_box, object->box);
            if (overlap >= match_threshold_ && overlap > best) {
                best = overlap;
                matched = object;
            }
        }
    }
    if (matched != nullptr) {
        return draw("obj/" + matched->id, true);
    }
    const auto& box = cluster.representative_box;
    return draw(fmt::format("fp/{}/{}:{}:{}:{}", image_id, std::llround(box.x_min * 4.0),
                            std::llround(box.y_min * 4.0), std::llround(box.x_max * 4.0),
                            std::llround(box.y_max * 4.0)),
                false);
}

std::vector<NegativeSample> GaussianFeatureExtractor::negative_samples(
    const std::string& image_id, int annotator_count) {
    std::vector<NegativeSample> negatives;
    negatives.reserve(static_cast<std::size_t>(config_.negatives_per_image));
    for (int i = 0; i < config_.negatives_per_image; ++i) {
        NegativeSample sample;
        sample.features = draw(fmt::format("neg/{}/{}", image_id, i), false);
        sample.votes = annotator_count;
        negatives.push_back(std::move(sample));
    }
    return negatives;
}

VoteWeightedBatch GaussianFeatureExtractor::make_validation(int per_class) const {
    VoteWeightedBatch batch;
    for (int i = 0; i < per_class; ++i) {
        batch.features.push_back(draw(fmt::format("val/pos/{}", i), true));
        batch.labels.push_back(1);
        batch.votes.push_back(1);
        batch.features.push_back(draw(fmt::format("val/neg/{}", i), false));
        batch.labels.push_back(0);
        batch.votes.push_back(1);
    }
    batch.set_vote_bounds();
    batch.check();
    return batch;
}

namespace {

AnnotatorProfile profile_from_json(const json& entry, const std::string& location) {
    AnnotatorProfile profile;
    if (!entry.is_object() || !entry.contains("annotator_id")) {
        throw SchemaError(location, "profile needs annotator_id");
    }
    profile.annotator_id = entry["annotator_id"].get<std::string>();
    if (entry.contains("detection_prob")) {
        const auto& probs = entry["detection_prob"];
        if (!probs.is_array() || probs.size() != 3) {
            throw SchemaError(location + "/detection_prob", "expected three probabilities");
        }
        for (int b = 0; b < 3; ++b) profile.detection_prob[b] = probs[b].get<double>();
    }
    profile.false_positive_rate = entry.value("false_positive_rate", 0.0);
    profile.acceptance_bias = entry.value("acceptance_bias", 0.0);
    profile.localization_jitter = entry.value("localization_jitter", 0.0);
    profile.seconds_per_object = entry.value("seconds_per_object", 1.0);
    profile.seconds_per_image_base = entry.value("seconds_per_image_base", 1.0);
    if (entry.contains("class_confusion")) {
        for (const auto& row : entry["class_confusion"]) {
            profile.class_confusion.push_back(row.get<std::vector<double>>());
        }
    }
    return profile;
}

}  // namespace

StudyConfig load_study_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open study config: " + path.string());
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object() || !root.contains("task") || !root.contains("profiles")) {
        throw SchemaError("", "study config needs task and profiles");
    }
    const auto base_dir = path.parent_path();
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path candidate(p);
        return candidate.is_absolute() ? candidate : base_dir / candidate;
    };

    StudyConfig config;
    config.task = task_from_string(root["task"].get<std::string>());

    if (root.contains("dataset")) {
        const json& dataset = root["dataset"];
        if (dataset.contains("path")) {
            config.dataset_path = resolve(dataset["path"].get<std::string>());
        } else if (dataset.contains("synthetic")) {
            const json& synth = dataset["synthetic"];
            SyntheticDatasetConfig synthetic;
            synthetic.images = synth.value("images", synthetic.images);
            synthetic.width = synth.value("width", synthetic.width);
            synthetic.height = synth.value("height", synthetic.height);
            synthetic.objects_per_image =
                synth.value("objects_per_image", synthetic.objects_per_image);
            synthetic.box_radius = synth.value("box_radius", synthetic.box_radius);
            synthetic.slides = synth.value("slides", synthetic.slides);
            config.synthetic = synthetic;
        } else {
            throw SchemaError("/dataset", "expected 'path' or 'synthetic'");
        }
    } else {
        config.synthetic = SyntheticDatasetConfig{};
    }

    const json& profiles = root["profiles"];
    if (profiles.is_string()) {
        std::ifstream profile_in(resolve(profiles.get<std::string>()));
        if (!profile_in) {
            throw IoError("cannot open profiles file referenced by study config");
        }
        json profile_root;
        profile_in >> profile_root;
        for (std::size_t i = 0; i < profile_root.size(); ++i) {
            config.profiles.push_back(
                profile_from_json(profile_root[i], "/profiles/" + std::to_string(i)));
        }
    } else if (profiles.is_array()) {
        for (std::size_t i = 0; i < profiles.size(); ++i) {
            config.profiles.push_back(
                profile_from_json(profiles[i], "/profiles/" + std::to_string(i)));
        }
    } else {
        throw SchemaError("/profiles", "expected an array or a file path");
    }

    if (root.contains("injection")) {
        const json& injection = root["injection"];
        config.mitosis.removal_fraction =
            injection.value("removal_fraction", config.mitosis.removal_fraction);
        if (injection.contains("fake_quotas")) {
            const auto quotas = injection["fake_quotas"].get<std::vector<int>>();
            if (quotas.size() != 3) throw SchemaError("/injection/fake_quotas", "expected 3 values");
            std::copy(quotas.begin(), quotas.end(), config.mitosis.fake_quotas.begin());
        }
        if (injection.contains("removed_quotas")) {
            const auto quotas = injection["removed_quotas"].get<std::vector<int>>();
            if (quotas.size() != 3)
                throw SchemaError("/injection/removed_quotas", "expected 3 values");
            std::copy(quotas.begin(), quotas.end(), config.mitosis.removed_quotas.begin());
        }
        if (injection.contains("scores")) {
            config.scores_path = resolve(injection["scores"].get<std::string>());
        }
        if (injection.contains("negatives")) {
            config.negatives_path = resolve(injection["negatives"].get<std::string>());
        }
        config.candidate_negative_count =
            injection.value("candidate_negative_count", config.candidate_negative_count);
    }

    config.match_threshold = root.value("match_threshold", config.match_threshold);
    config.nms_iou = root.value("nms_iou", config.nms_iou);
    config.grading_threshold = root.value("grading_threshold", config.grading_threshold);

    if (root.contains("training")) {
        const json& training = root["training"];
        config.training.peak_learning_rate =
            training.value("peak_learning_rate", config.training.peak_learning_rate);
        config.training.epochs = training.value("epochs", config.training.epochs);
        config.training.batch_size = training.value("batch_size", config.training.batch_size);
        config.training.repetitions = training.value("repetitions", config.training.repetitions);
        config.training.hidden_width =
            training.value("hidden_width", config.training.hidden_width);
        config.training.weight_floor =
            training.value("weight_floor", config.training.weight_floor);
    }
    if (root.contains("features")) {
        const json& features = root["features"];
        config.features.dim = features.value("dim", config.features.dim);
        config.features.separation = features.value("separation", config.features.separation);
        config.features.sigma = features.value("sigma", config.features.sigma);
        config.features.negatives_per_image =
            features.value("negatives_per_image", config.features.negatives_per_image);
        config.validation_per_class =
            features.value("validation_per_class", config.validation_per_class);
    }
    return config;
}

namespace {

int round_half_away(double value) {
    return static_cast<int>(value >= 0.0 ? std::floor(value + 0.5) : std::ceil(value - 0.5));
}

struct SimulatedMode {
    StudyDataset dataset;  // reference records + expert records + durations
    std::vector<std::string> experts;
};

SimulatedMode simulate_mode(const StudyDataset& base, const std::vector<AnnotatorProfile>& profiles,
                            ModeKind mode, std::uint64_t seed, const SimulationContext& context) {
    SimulatedMode out;
    out.dataset.task = base.task;
    out.dataset.images = base.images;
    out.dataset.annotations = base.annotations;
    for (const auto& profile : profiles) {
        const std::uint64_t sim_seed =
            mix_seed(seed, fmt::format("sim/{}/{}", profile.annotator_id, to_string(mode)));
        SimulationResult sim = simulate_annotator(base, profile, mode, sim_seed, context);
        for (auto& record : sim.annotations) out.dataset.annotations.push_back(std::move(record));
        for (auto& image : out.dataset.images) {
            const auto it = sim.durations_by_image.find(image.image_id);
            if (it != sim.durations_by_image.end()) {
                image.durations[profile.annotator_id] = it->second;
            }
        }
        out.experts.push_back(profile.annotator_id);
    }
    std::sort(out.experts.begin(), out.experts.end());
    return out;
}

std::map<std::string, std::vector<ConsensusCluster>> clusters_for_subset(
    const StudyDataset& dataset, const std::vector<std::string>& subset, ModeKind mode,
    double nms_iou) {
    std::map<std::string, std::vector<ConsensusCluster>> out;
    for (const auto& image : dataset.images) {
        std::vector<AnnotationRecord> records;
        for (const auto& record : dataset.annotations) {
            if (record.image_id != image.image_id || record.mode != mode) continue;
            if (std::find(subset.begin(), subset.end(), record.annotator_id) == subset.end())
                continue;
            records.push_back(record);
        }
        if (records.empty()) continue;
        std::sort(records.begin(), records.end(),
                  [](const AnnotationRecord& a, const AnnotationRecord& b) { return a.id < b.id; });
        out[image.image_id] = cluster_consensus(records, nms_iou, dataset.task);
    }
    return out;
}

StudyReport run_study_pipeline(const StudyConfig& config, std::uint64_t seed,
                               const char*& stage) {
    if (config.profiles.empty()) throw ConfigError("study config lists no annotator profiles");

    StudyDataset ground_truth;
    if (config.dataset_path) {
        ground_truth = parse_dataset(*config.dataset_path);
        if (ground_truth.task != config.task) {
            throw DatasetMismatchError("dataset task differs from the configured task");
        }
    } else {
        ground_truth = synthesize_ground_truth(config.task, *config.synthetic, seed);
    }
    if (ground_truth.annotations_by(kGroundTruthAnnotator).empty()) {
        throw InsufficientDataError("dataset carries no ground_truth annotations");
    }

    StudyReport report;
    report.task = config.task;
    report.seed = seed;

    // Stage: flaw injection.
    stage = "injection";
    SimulationContext context;
    context.match_threshold = config.match_threshold;
    InjectionResult injection;
    const std::uint64_t injection_seed = mix_seed(seed, "inject");
    switch (config.task) {
        case TaskKind::Asthma:
            injection = inject_asthma(ground_truth, injection_seed);
            break;
        case TaskKind::Eiph:
            injection = inject_eiph(ground_truth, injection_seed);
            break;
        case TaskKind::Mitosis: {
            std::map<std::string, double> scores;
            if (config.scores_path) {
                scores = load_scores_csv(*config.scores_path);
            } else {
                Rng rng(mix_seed(seed, "scores"));
                for (const auto* record :
                     ground_truth.annotations_by(kGroundTruthAnnotator)) {
                    scores[record->id] = rng.uniform();
                }
            }
            std::vector<ScoredBox> negatives;
            if (config.negatives_path) {
                negatives = load_negatives_csv(*config.negatives_path);
            } else {
                Rng rng(mix_seed(seed, "negatives"));
                double min_w = 1e18, min_h = 1e18;
                for (const auto& image : ground_truth.images) {
                    min_w = std::min(min_w, image.width);
                    min_h = std::min(min_h, image.height);
                }
                const double r = kDefaultPointRadius;
                for (int i = 0; i < config.candidate_negative_count; ++i) {
                    const double cx = r + rng.uniform() * (min_w - 2.0 * r);
                    const double cy = r + rng.uniform() * (min_h - 2.0 * r);
                    negatives.push_back({box_from_point(cx, cy, r), rng.uniform()});
                }
            }
            injection = inject_mitosis(ground_truth, scores, negatives, injection_seed,
                                       config.mitosis);
            for (const auto& [id, score] : scores) {
                context.difficulty_bucket[id] =
                    bucket(score, config.mitosis.thresholds, BucketKind::Removed);
            }
            for (std::size_t i = 0; i < injection.plan.flaws.size(); ++i) {
                const auto& flaw = injection.plan.flaws[i];
                if (flaw.kind == FlawKind::FakeObject) {
                    context.fake_bucket[proposal_id_for_flaw(i)] = flaw.difficulty_bucket;
                }
            }
            break;
        }
    }
    report.plan = injection.plan;

    // Stage: simulate both modes for every profile.
    stage = "simulation";
    const SimulatedMode unaided =
        simulate_mode(ground_truth, config.profiles, ModeKind::Unaided, seed, context);
    const SimulatedMode aided =
        simulate_mode(injection.dataset, config.profiles, ModeKind::Aided, seed, context);
    report.unaided_dataset = unaided.dataset;
    report.aided_dataset = aided.dataset;
    const std::vector<std::string>& experts = unaided.experts;

    // Stage: concordance and timing, with the mode comparison F-tests.
    std::map<ModeKind, std::vector<double>> concordance_means;
    std::map<ModeKind, std::vector<double>> timing_means;
    stage = "metrics";
    for (const ModeKind mode : {ModeKind::Unaided, ModeKind::Aided}) {
        const StudyDataset& dataset = mode == ModeKind::Unaided ? unaided.dataset : aided.dataset;
        for (const auto& expert : experts) {
            const ConcordanceScore score =
                concordance(expert, dataset, mode, config.match_threshold);
            std::vector<double> per_image;
            for (const auto& [image_id, value] : score.per_image) per_image.push_back(value);
            report.concordance.push_back({mode, expert, summarize(per_image)});
            concordance_means[mode].push_back(score.mean);

            const SummaryStat timing = timing_summary(dataset, mode, expert);
            report.timing.push_back({mode, expert, timing});
            timing_means[mode].push_back(timing.mean);
        }
        report.concordance.push_back({mode, "all", summarize(concordance_means[mode])});
        report.timing.push_back({mode, "all", summarize(timing_means[mode])});
    }
    report.anova.push_back(
        {"concordance", anova_oneway(concordance_means[ModeKind::Unaided],
                                     concordance_means[ModeKind::Aided])});
    report.anova.push_back({"seconds_per_image",
                            anova_oneway(timing_means[ModeKind::Unaided],
                                         timing_means[ModeKind::Aided])});

    // Stage: flaw recovery, aggregated over experts per mode.
    stage = "recovery";
    for (const ModeKind mode : {ModeKind::Unaided, ModeKind::Aided}) {
        const StudyDataset& dataset = mode == ModeKind::Unaided ? unaided.dataset : aided.dataset;
        std::map<FlawKind, RecoveryCell> per_kind;
        std::map<std::pair<FlawKind, int>, RecoveryCell> per_bucket;
        for (const auto& expert : experts) {
            std::vector<AnnotationRecord> records;
            for (const auto* record : dataset.annotations_by(expert, mode)) {
                records.push_back(*record);
            }
            const RecoveryReport recovery =
                recovery_report(report.plan, ground_truth, records, config.match_threshold);
            for (const auto& [kind, cell] : recovery.per_kind) {
                per_kind[kind].total += cell.total;
                per_kind[kind].recovered += cell.recovered;
            }
            for (const auto& [key, cell] : recovery.per_kind_and_bucket) {
                per_bucket[key].total += cell.total;
                per_bucket[key].recovered += cell.recovered;
            }
        }
        for (const auto& [kind, cell] : per_kind) {
            report.recovery.push_back({mode, kind, -1, cell});
        }
        for (const auto& [key, cell] : per_bucket) {
            report.recovery.push_back({mode, key.first, key.second, cell});
        }
    }

    // Stage: mitotic-count grading.
    stage = "grading";
    if (config.task == TaskKind::Mitosis) {
        for (const ModeKind mode : {ModeKind::Unaided, ModeKind::Aided}) {
            const StudyDataset& dataset =
                mode == ModeKind::Unaided ? unaided.dataset : aided.dataset;
            GradingTally tally{mode, 0, 0, 0};
            for (const auto& image : dataset.images) {
                int reference = 0;
                for (const auto* record : dataset.annotations_on_image(image.image_id)) {
                    if (record->annotator_id == kGroundTruthAnnotator) ++reference;
                }
                double expert_total = 0.0;
                for (const auto& expert : experts) {
                    int count = 0;
                    for (const auto* record : dataset.annotations_on_image(image.image_id)) {
                        if (record->annotator_id == expert && record->mode == mode) ++count;
                    }
                    expert_total += count;
                }
                const double mean_count = expert_total / static_cast<double>(experts.size());
                const GradingDecision decision =
                    grade_case(round_half_away(mean_count), reference, config.grading_threshold);
                report.grading.push_back({mode, image.image_id, reference, mean_count, decision});
                switch (decision.direction_vs_reference) {
                    case GradeDirection::Over: ++tally.over; break;
                    case GradeDirection::Under: ++tally.under; break;
                    case GradeDirection::Equal: ++tally.equal; break;
                }
            }
            report.grading_tallies.push_back(tally);
        }
    }

    // Stage: consensus clustering over the full roster.
    stage = "consensus";
    for (const ModeKind mode : {ModeKind::Unaided, ModeKind::Aided}) {
        const StudyDataset& dataset = mode == ModeKind::Unaided ? unaided.dataset : aided.dataset;
        report.consensus[mode] = clusters_for_subset(dataset, experts, mode, config.nms_iou);
    }

    // Stage: the expert-subset training sets, both losses each.
    stage = "training";
    GaussianFeatureExtractor extractor(ground_truth, config.features, config.match_threshold,
                                       mix_seed(seed, "features"));
    const VoteWeightedBatch validation = extractor.make_validation(config.validation_per_class);

    struct Subset {
        std::string set_id;
        std::vector<std::string> experts;
    };
    std::vector<Subset> subsets;
    for (const auto& expert : experts) subsets.push_back({expert, {expert}});
    for (std::size_t k = 2; k <= experts.size(); ++k) {
        subsets.push_back({fmt::format("experts_{:02}", k),
                           std::vector<std::string>(experts.begin(), experts.begin() + k)});
    }

    for (const ModeKind mode : {ModeKind::Unaided, ModeKind::Aided}) {
        const StudyDataset& dataset = mode == ModeKind::Unaided ? unaided.dataset : aided.dataset;
        for (const auto& subset : subsets) {
            const auto clusters =
                clusters_for_subset(dataset, subset.experts, mode, config.nms_iou);
            const VoteWeightedBatch batch = build_training_set(clusters, subset.experts, extractor);
            for (const LossKind loss : {LossKind::PlainBce, LossKind::Votes}) {
                TrainConfig train_config = config.training;
                train_config.seed = mix_seed(
                    seed, fmt::format("train/{}/{}/{}", to_string(mode), subset.set_id,
                                      to_string(loss)));
                const TrainResult trained = train(batch, validation, train_config, loss);
                report.classifier.push_back({mode, subset.set_id,
                                             static_cast<int>(subset.experts.size()), loss,
                                             trained.best_accuracy_per_repetition,
                                             trained.mean_of_best});
            }
        }
    }
    return report;
}

}  // namespace

StudyReport run_study(const StudyConfig& config, std::uint64_t seed) {
    const char* stage = "setup";
    try {
        return run_study_pipeline(config, seed, stage);
    } catch (const Error& e) {
        throw Error(fmt::format("{} stage: {}", stage, e.what()));
    }
}

}  // namespace annostudy
