#include "annostudy/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "annostudy/errors.hpp"
#include "annostudy/matching.hpp"
#include "annostudy/rng.hpp"

namespace annostudy {

void AnnotatorProfile::check(TaskKind task) const {
    if (annotator_id.empty()) throw ConfigError("profile needs an annotator_id");
    if (annotator_id == kGroundTruthAnnotator || annotator_id == kProposalAnnotator) {
        throw ConfigError("profile may not use a reserved annotator id");
    }
    for (const double p : detection_prob) {
        if (p < 0.0 || p > 1.0) throw ConfigError("detection_prob outside [0, 1]");
    }
    if (false_positive_rate < 0.0) throw ConfigError("false_positive_rate must be >= 0");
    if (acceptance_bias < 0.0 || acceptance_bias > 1.0) {
        throw ConfigError("acceptance_bias outside [0, 1]");
    }
    if (localization_jitter < 0.0) throw ConfigError("localization_jitter must be >= 0");
    if (!(seconds_per_object > 0.0) || !(seconds_per_image_base > 0.0)) {
        throw ConfigError("timing parameters must be positive");
    }
    if (!class_confusion.empty()) {
        const std::size_t k = label_space(task).size();
        if (class_confusion.size() != k) {
            throw ConfigError(fmt::format("confusion matrix needs {} rows for task {}", k,
                                          to_string(task)));
        }
        for (const auto& row : class_confusion) {
            if (row.size() != k) throw ConfigError("confusion matrix must be square");
            double sum = 0.0;
            for (const double p : row) {
                if (p < 0.0 || p > 1.0) throw ConfigError("confusion entries outside [0, 1]");
                sum += p;
            }
            if (std::fabs(sum - 1.0) > 1e-9) {
                throw ConfigError("confusion rows must sum to 1");
            }
        }
    }
}

namespace {

struct Session {
    const StudyDataset& dataset;
    const AnnotatorProfile& profile;
    const SimulationContext& context;
    ModeKind mode;

    int detection_rank(const std::string& ground_truth_id) const {
        const auto it = context.difficulty_bucket.find(ground_truth_id);
        return it == context.difficulty_bucket.end() ? 0 : std::clamp(it->second, 0, 2);
    }

    /// Rank used when deciding whether a re-examined fake gets rejected;
    /// fake buckets are oriented easy-to-spot first, so invert.
    int fake_rank(const std::string& proposal_id) const {
        const auto it = context.fake_bucket.find(proposal_id);
        return it == context.fake_bucket.end() ? 0 : std::clamp(2 - it->second, 0, 2);
    }

    std::string draw_label(const std::string& true_label, Rng& rng) const {
        if (profile.class_confusion.empty()) return true_label;
        const auto& space = label_space(dataset.task);
        const int row = label_index(dataset.task, true_label);
        const auto& probabilities = profile.class_confusion[static_cast<std::size_t>(row)];
        double u = rng.uniform();
        for (std::size_t k = 0; k < probabilities.size(); ++k) {
            u -= probabilities[k];
            if (u < 0.0) return space[k];
        }
        return space.back();
    }

    BoundingBox jitter_box(const BoundingBox& box, const ImageRecord& image, Rng& rng) const {
        if (profile.localization_jitter <= 0.0) return box;
        double dx = rng.normal(0.0, profile.localization_jitter);
        double dy = rng.normal(0.0, profile.localization_jitter);
        dx = std::clamp(dx, -box.x_min, image.width - box.x_max);
        dy = std::clamp(dy, -box.y_min, image.height - box.y_max);
        return BoundingBox{box.x_min + dx, box.y_min + dy, box.x_max + dx, box.y_max + dy};
    }

    AnnotationRecord make_record(const std::string& image_id, int sequence,
                                 const BoundingBox& box, const std::string& label) const {
        AnnotationRecord record;
        record.id = fmt::format("{}-{}-{}-{:03}", profile.annotator_id, to_string(mode), image_id,
                                sequence);
        record.image_id = image_id;
        record.annotator_id = profile.annotator_id;
        record.mode = mode;
        record.provenance = Provenance::Human;
        record.box = box;
        record.label = label;
        return record;
    }
};

std::vector<const AnnotationRecord*> sorted_by(const StudyDataset& dataset,
                                               const std::string& image_id,
                                               std::string_view annotator) {
    std::vector<const AnnotationRecord*> out;
    for (const auto& record : dataset.annotations) {
        if (record.image_id == image_id && record.annotator_id == annotator) {
            out.push_back(&record);
        }
    }
    std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    return out;
}

}  // namespace

SimulationResult simulate_annotator(const StudyDataset& dataset, const AnnotatorProfile& profile,
                                    ModeKind mode, std::uint64_t seed,
                                    const SimulationContext& context) {
    profile.check(dataset.task);
    if (mode == ModeKind::Aided &&
        dataset.annotations_by(kProposalAnnotator).empty()) {
        throw MissingProposalsError("aided simulation needs 'proposal' annotations");
    }

    Session session{dataset, profile, context, mode};
    SimulationResult result;
    const auto& space = label_space(dataset.task);

    std::vector<const ImageRecord*> images;
    for (const auto& image : dataset.images) images.push_back(&image);
    std::sort(images.begin(), images.end(),
              [](const auto* a, const auto* b) { return a->image_id < b->image_id; });

    for (const ImageRecord* image : images) {
        Rng rng(mix_seed(seed, fmt::format("{}/{}", to_string(mode), image->image_id)));
        const auto ground_truth = sorted_by(dataset, image->image_id, kGroundTruthAnnotator);
        int sequence = 0;
        int work = 0;
        std::vector<AnnotationRecord> produced;

        if (mode == ModeKind::Unaided) {
            for (const auto* object : ground_truth) {
                if (!rng.bernoulli(profile.detection_prob[session.detection_rank(object->id)])) {
                    continue;
                }
                const std::string label = session.draw_label(object->label, rng);
                const BoundingBox box = session.jitter_box(object->box, *image, rng);
                produced.push_back(session.make_record(image->image_id, sequence++, box, label));
            }
            const int spurious = rng.poisson(profile.false_positive_rate);
            for (int s = 0; s < spurious; ++s) {
                const double r = context.point_radius;
                const double cx = r + rng.uniform() * std::max(image->width - 2.0 * r, 0.0);
                const double cy = r + rng.uniform() * std::max(image->height - 2.0 * r, 0.0);
                const std::string label = space[rng.uniform_index(space.size())];
                produced.push_back(session.make_record(image->image_id, sequence++,
                                                       box_from_point(cx, cy, r), label));
            }
            work = static_cast<int>(produced.size());
        } else {
            const auto proposals = sorted_by(dataset, image->image_id, kProposalAnnotator);
            std::vector<bool> claimed(ground_truth.size(), false);

            for (const auto* proposal : proposals) {
                if (rng.bernoulli(profile.acceptance_bias)) {
                    // Left unexamined: the proposal passes through as-is.
                    produced.push_back(session.make_record(image->image_id, sequence++,
                                                           proposal->box, proposal->label));
                    continue;
                }
                ++work;
                // Best ground-truth object the proposal covers (ties keep
                // the smallest id; the list is sorted).
                std::size_t best = ground_truth.size();
                double best_iou = 0.0;
                for (std::size_t g = 0; g < ground_truth.size(); ++g) {
                    const double overlap = iou(proposal->box, ground_truth[g]->box);
                    if (overlap >= context.match_threshold && overlap > best_iou) {
                        best = g;
                        best_iou = overlap;
                    }
                }
                if (best == ground_truth.size()) {
                    // A fake: rejected (dropped) when spotted, kept otherwise.
                    if (!rng.bernoulli(profile.detection_prob[session.fake_rank(proposal->id)])) {
                        produced.push_back(session.make_record(image->image_id, sequence++,
                                                               proposal->box, proposal->label));
                    }
                    continue;
                }
                if (claimed[best]) {
                    continue;  // duplicate of an already-corrected object
                }
                if (rng.bernoulli(
                        profile.detection_prob[session.detection_rank(ground_truth[best]->id)])) {
                    claimed[best] = true;
                    const std::string label = session.draw_label(ground_truth[best]->label, rng);
                    const BoundingBox box =
                        session.jitter_box(ground_truth[best]->box, *image, rng);
                    produced.push_back(
                        session.make_record(image->image_id, sequence++, box, label));
                }
            }

            // Objects the proposals missed (or that examination dropped).
            for (std::size_t g = 0; g < ground_truth.size(); ++g) {
                bool present = false;
                for (const auto& record : produced) {
                    if (iou(record.box, ground_truth[g]->box) >= context.match_threshold) {
                        present = true;
                        break;
                    }
                }
                if (present) continue;
                if (rng.bernoulli(profile.acceptance_bias)) continue;  // never looked
                ++work;
                if (rng.bernoulli(
                        profile.detection_prob[session.detection_rank(ground_truth[g]->id)])) {
                    const std::string label = session.draw_label(ground_truth[g]->label, rng);
                    const BoundingBox box = session.jitter_box(ground_truth[g]->box, *image, rng);
                    produced.push_back(
                        session.make_record(image->image_id, sequence++, box, label));
                }
            }
        }

        result.durations_by_image[image->image_id] =
            profile.seconds_per_image_base + profile.seconds_per_object * work;
        for (auto& record : produced) result.annotations.push_back(std::move(record));
    }
    return result;
}

}  // namespace annostudy
