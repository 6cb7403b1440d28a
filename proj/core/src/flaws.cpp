#include "annostudy/flaws.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "annostudy/errors.hpp"
#include "annostudy/matching.hpp"
#include "annostudy/rng.hpp"

namespace annostudy {

using nlohmann::json;

std::string to_string(FlawKind kind) {
    switch (kind) {
        case FlawKind::ClassFlip: return "class_flip";
        case FlawKind::Deletion: return "deletion";
        case FlawKind::GradeIncrement: return "grade_increment";
        case FlawKind::FalseAnnotation: return "false_annotation";
        case FlawKind::DuplicateAnnotation: return "duplicate_annotation";
        case FlawKind::FakeObject: return "fake_object";
        case FlawKind::RemovedObject: return "removed_object";
    }
    return "deletion";
}

FlawKind flaw_kind_from_string(const std::string& token) {
    if (token == "class_flip") return FlawKind::ClassFlip;
    if (token == "deletion") return FlawKind::Deletion;
    if (token == "grade_increment") return FlawKind::GradeIncrement;
    if (token == "false_annotation") return FlawKind::FalseAnnotation;
    if (token == "duplicate_annotation") return FlawKind::DuplicateAnnotation;
    if (token == "fake_object") return FlawKind::FakeObject;
    if (token == "removed_object") return FlawKind::RemovedObject;
    throw SchemaError("/kind", "unknown flaw kind '" + token + "'");
}

void DifficultyThresholds::check() const {
    const bool fake_ok = 0.0 < fake_p0_max && fake_p0_max < fake_p1_max && fake_p1_max < 1.0;
    const bool removed_ok =
        0.0 < removed_p0_max && removed_p0_max < removed_p1_max && removed_p1_max < 1.0;
    if (!fake_ok || !removed_ok) {
        throw ConfigError("difficulty thresholds must satisfy 0 < p0_max < p1_max < 1");
    }
}

int bucket(double score, const DifficultyThresholds& cuts, BucketKind which) {
    const double p0 = which == BucketKind::Fake ? cuts.fake_p0_max : cuts.removed_p0_max;
    const double p1 = which == BucketKind::Fake ? cuts.fake_p1_max : cuts.removed_p1_max;
    if (score <= p0) return 0;
    if (score <= p1) return 1;
    return 2;
}

std::string FlawPlan::to_json() const {
    json root;
    root["task"] = annostudy::to_string(task);
    root["seed"] = seed;
    root["flaws"] = json::array();
    for (const auto& flaw : flaws) {
        json entry;
        entry["kind"] = annostudy::to_string(flaw.kind);
        entry["image_id"] = flaw.image_id;
        if (!flaw.target_id.empty()) entry["target_id"] = flaw.target_id;
        if (flaw.synthetic_box) {
            entry["box"] = {flaw.synthetic_box->x_min, flaw.synthetic_box->y_min,
                            flaw.synthetic_box->x_max, flaw.synthetic_box->y_max};
        }
        if (flaw.difficulty_bucket >= 0) entry["difficulty_bucket"] = flaw.difficulty_bucket;
        if (!flaw.original_label.empty()) entry["original_label"] = flaw.original_label;
        if (!flaw.new_label.empty()) entry["new_label"] = flaw.new_label;
        root["flaws"].push_back(std::move(entry));
    }
    return root.dump(2) + "\n";
}

FlawPlan FlawPlan::from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid plan JSON: ") + e.what());
    }
    if (!root.is_object() || !root.contains("task") || !root.contains("seed") ||
        !root.contains("flaws")) {
        throw SchemaError("", "flaw plan needs task, seed, flaws");
    }
    FlawPlan plan;
    plan.task = task_from_string(root["task"].get<std::string>());
    plan.seed = root["seed"].get<std::uint64_t>();
    for (const auto& entry : root["flaws"]) {
        InjectedFlaw flaw;
        flaw.kind = flaw_kind_from_string(entry.at("kind").get<std::string>());
        flaw.image_id = entry.at("image_id").get<std::string>();
        flaw.target_id = entry.value("target_id", std::string{});
        if (entry.contains("box")) {
            const auto& b = entry["box"];
            flaw.synthetic_box =
                BoundingBox{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                            b.at(3).get<double>()};
        }
        flaw.difficulty_bucket = entry.value("difficulty_bucket", -1);
        flaw.original_label = entry.value("original_label", std::string{});
        flaw.new_label = entry.value("new_label", std::string{});
        plan.flaws.push_back(std::move(flaw));
    }
    return plan;
}

void FlawPlan::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << to_json();
}

FlawPlan FlawPlan::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plan file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string proposal_id_for(const std::string& ground_truth_id) {
    return "prop_" + ground_truth_id;
}

std::string proposal_id_for_flaw(std::size_t flaw_index) {
    return fmt::format("prop_flaw_{:04}", flaw_index);
}

StudyDataset apply_plan(const StudyDataset& ground_truth, const FlawPlan& plan) {
    if (plan.task != ground_truth.task) {
        throw DatasetMismatchError("plan task differs from dataset task");
    }
    std::unordered_map<std::string, const InjectedFlaw*> flaw_by_target;
    for (const auto& flaw : plan.flaws) {
        if (flaw.kind == FlawKind::GradeIncrement && plan.task != TaskKind::Eiph) {
            throw DatasetMismatchError("grade increments apply to the EIPH task only");
        }
        if ((flaw.kind == FlawKind::FakeObject || flaw.kind == FlawKind::RemovedObject) &&
            plan.task != TaskKind::Mitosis) {
            throw DatasetMismatchError("fake/removed objects apply to the mitosis task only");
        }
        if (flaw.target_id.empty() || flaw.kind == FlawKind::DuplicateAnnotation) continue;
        if (!flaw_by_target.emplace(flaw.target_id, &flaw).second) {
            throw DatasetMismatchError("two flaws target annotation '" + flaw.target_id + "'");
        }
    }

    StudyDataset out;
    out.task = ground_truth.task;
    out.images = ground_truth.images;
    out.annotations = ground_truth.annotations;

    for (const auto& record : ground_truth.annotations) {
        if (record.annotator_id != kGroundTruthAnnotator) continue;
        const auto it = flaw_by_target.find(record.id);
        const InjectedFlaw* flaw = it == flaw_by_target.end() ? nullptr : it->second;
        if (flaw != nullptr &&
            (flaw->kind == FlawKind::Deletion || flaw->kind == FlawKind::RemovedObject)) {
            continue;
        }
        AnnotationRecord proposal = record;
        proposal.id = proposal_id_for(record.id);
        proposal.annotator_id = std::string(kProposalAnnotator);
        proposal.provenance = Provenance::Proposal;
        if (flaw != nullptr) proposal.label = flaw->new_label;
        out.annotations.push_back(std::move(proposal));
    }

    for (std::size_t i = 0; i < plan.flaws.size(); ++i) {
        const InjectedFlaw& flaw = plan.flaws[i];
        if (!flaw.synthetic_box) continue;
        AnnotationRecord proposal;
        proposal.id = proposal_id_for_flaw(i);
        proposal.image_id = flaw.image_id;
        proposal.annotator_id = std::string(kProposalAnnotator);
        proposal.provenance = Provenance::Proposal;
        proposal.mode = ModeKind::Unaided;
        proposal.box = *flaw.synthetic_box;
        proposal.label = flaw.new_label;
        out.annotations.push_back(std::move(proposal));
    }
    return out;
}

namespace {

struct ImageCells {
    std::string image_id;
    std::vector<const AnnotationRecord*> cells;  // ground truth, sorted by id
};

/// Ground-truth cells grouped per image, in a canonical order that does not
/// depend on file ordering: images sorted by id, cells sorted by id.
std::vector<ImageCells> ground_truth_by_image(const StudyDataset& dataset) {
    std::map<std::string, std::vector<const AnnotationRecord*>> grouped;
    for (const auto& image : dataset.images) grouped[image.image_id];
    for (const auto& record : dataset.annotations) {
        if (record.annotator_id == kGroundTruthAnnotator) {
            grouped[record.image_id].push_back(&record);
        }
    }
    std::vector<ImageCells> out;
    for (auto& [image_id, cells] : grouped) {
        std::sort(cells.begin(), cells.end(),
                  [](const auto* a, const auto* b) { return a->id < b->id; });
        out.push_back({image_id, std::move(cells)});
    }
    return out;
}

void sort_plan(FlawPlan& plan) {
    std::stable_sort(plan.flaws.begin(), plan.flaws.end(),
                     [](const InjectedFlaw& a, const InjectedFlaw& b) {
                         if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
                         if (a.image_id != b.image_id) return a.image_id < b.image_id;
                         return a.target_id < b.target_id;
                     });
}

InjectionResult finish(const StudyDataset& ground_truth, FlawPlan plan) {
    sort_plan(plan);
    InjectionResult result;
    result.dataset = apply_plan(ground_truth, plan);
    result.plan = std::move(plan);
    return result;
}

/// Splits `total` across three buckets proportionally to `quotas`, using
/// largest-remainder rounding (ties to the lower bucket index).
std::array<int, 3> largest_remainder_split(int total, const std::array<int, 3>& quotas) {
    const double quota_sum = quotas[0] + quotas[1] + quotas[2];
    if (quota_sum <= 0.0) throw ConfigError("bucket quotas must sum to a positive value");
    std::array<int, 3> out{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int b = 0; b < 3; ++b) {
        const double exact = total * quotas[b] / quota_sum;
        out[b] = static_cast<int>(std::floor(exact));
        remainder[b] = exact - out[b];
        assigned += out[b];
    }
    while (assigned < total) {
        int best = 0;
        for (int b = 1; b < 3; ++b) {
            if (remainder[b] > remainder[best]) best = b;
        }
        ++out[best];
        remainder[best] = -1.0;
        ++assigned;
    }
    return out;
}

/// Caps targets at per-bucket availability, refilling the deficit into the
/// other buckets in index order as capacity allows.
std::array<int, 3> fit_to_availability(std::array<int, 3> targets,
                                       const std::array<int, 3>& available, const char* what) {
    int deficit = 0;
    for (int b = 0; b < 3; ++b) {
        if (targets[b] > available[b]) {
            deficit += targets[b] - available[b];
            targets[b] = available[b];
        }
    }
    for (int b = 0; b < 3 && deficit > 0; ++b) {
        const int room = available[b] - targets[b];
        const int take = std::min(room, deficit);
        targets[b] += take;
        deficit -= take;
    }
    if (deficit > 0) {
        throw InsufficientDataError(fmt::format(
            "{}: need {} more candidates than available across buckets", what, deficit));
    }
    return targets;
}

BoundingBox jittered_duplicate(const BoundingBox& cell, const ImageRecord& image, Rng& rng) {
    // Shift by at most 8% of each side; that keeps IoU >= 0.73.
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double dx = rng.uniform(-0.08, 0.08) * cell.width();
        const double dy = rng.uniform(-0.08, 0.08) * cell.height();
        BoundingBox duplicate{cell.x_min + dx, cell.y_min + dy, cell.x_max + dx, cell.y_max + dy};
        if (duplicate.x_min >= 0.0 && duplicate.y_min >= 0.0 && duplicate.x_max <= image.width &&
            duplicate.y_max <= image.height && iou(duplicate, cell) >= 0.7) {
            return duplicate;
        }
    }
    // A cell flush against the border: shift inward only.
    return cell;
}

BoundingBox background_box(const std::vector<const AnnotationRecord*>& cells,
                           const ImageRecord& image, double radius, Rng& rng) {
    const double usable_w = image.width - 2.0 * radius;
    const double usable_h = image.height - 2.0 * radius;
    if (usable_w <= 0.0 || usable_h <= 0.0) {
        throw InsufficientDataError("image '" + image.image_id +
                                    "' too small to place a background artifact");
    }
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double cx = radius + rng.uniform() * usable_w;
        const double cy = radius + rng.uniform() * usable_h;
        const BoundingBox candidate = box_from_point(cx, cy, radius);
        bool clear = true;
        for (const auto* cell : cells) {
            if (iou(candidate, cell->box) > 0.1) {
                clear = false;
                break;
            }
        }
        if (clear) return candidate;
    }
    throw InsufficientDataError("no background space for a false annotation on image '" +
                                image.image_id + "'");
}

}  // namespace

InjectionResult inject_asthma(const StudyDataset& ground_truth, std::uint64_t seed) {
    if (ground_truth.task != TaskKind::Asthma) {
        throw DatasetMismatchError("inject_asthma requires an asthma dataset");
    }
    if (ground_truth.images.size() < 10) {
        throw InsufficientDataError(fmt::format("need at least 10 images, got {}",
                                                ground_truth.images.size()));
    }
    Rng rng(mix_seed(seed, "inject/asthma"));

    auto by_image = ground_truth_by_image(ground_truth);
    std::erase_if(by_image, [](const ImageCells& entry) { return entry.cells.empty(); });
    if (by_image.size() < 10) {
        throw InsufficientDataError(
            fmt::format("need at least 10 images with cells, got {}", by_image.size()));
    }
    rng.shuffle(by_image);
    const std::vector<ImageCells> flip_images(by_image.begin(), by_image.begin() + 5);
    const std::vector<ImageCells> deletion_images(by_image.begin() + 5, by_image.begin() + 10);

    std::size_t flippable = 0;
    for (const auto& entry : flip_images) flippable += entry.cells.size();
    if (flippable < 15) {
        throw InsufficientDataError(fmt::format(
            "only {} flippable cells on the five flip images, need 15", flippable));
    }

    FlawPlan plan{TaskKind::Asthma, seed, {}};
    const auto& space = label_space(TaskKind::Asthma);

    // One flip per image first, so all five images host at least one, then
    // the remaining ten from the pooled rest.
    std::vector<const AnnotationRecord*> pool;
    std::vector<const AnnotationRecord*> chosen;
    for (const auto& entry : flip_images) {
        const auto pick = rng.uniform_index(entry.cells.size());
        chosen.push_back(entry.cells[pick]);
        for (const auto* cell : entry.cells) pool.push_back(cell);
    }
    std::erase_if(pool, [&](const AnnotationRecord* cell) {
        return std::find(chosen.begin(), chosen.end(), cell) != chosen.end();
    });
    for (const std::size_t index : rng.sample_indices(pool.size(), 15 - chosen.size())) {
        chosen.push_back(pool[index]);
    }
    std::sort(chosen.begin(), chosen.end(),
              [](const auto* a, const auto* b) { return a->id < b->id; });
    for (const auto* cell : chosen) {
        std::vector<std::string> alternatives;
        for (const auto& label : space) {
            if (label != cell->label) alternatives.push_back(label);
        }
        InjectedFlaw flaw;
        flaw.kind = FlawKind::ClassFlip;
        flaw.image_id = cell->image_id;
        flaw.target_id = cell->id;
        flaw.original_label = cell->label;
        flaw.new_label = alternatives[rng.uniform_index(alternatives.size())];
        plan.flaws.push_back(std::move(flaw));
    }

    for (const auto& entry : deletion_images) {
        const auto* cell = entry.cells[rng.uniform_index(entry.cells.size())];
        InjectedFlaw flaw;
        flaw.kind = FlawKind::Deletion;
        flaw.image_id = cell->image_id;
        flaw.target_id = cell->id;
        flaw.original_label = cell->label;
        plan.flaws.push_back(std::move(flaw));
    }

    return finish(ground_truth, std::move(plan));
}

InjectionResult inject_eiph(const StudyDataset& ground_truth, std::uint64_t seed) {
    if (ground_truth.task != TaskKind::Eiph) {
        throw DatasetMismatchError("inject_eiph requires an EIPH dataset");
    }
    if (ground_truth.images.size() < 15) {
        throw InsufficientDataError(fmt::format("need at least 15 images, got {}",
                                                ground_truth.images.size()));
    }
    Rng rng(mix_seed(seed, "inject/eiph"));

    auto by_image = ground_truth_by_image(ground_truth);
    std::erase_if(by_image, [](const ImageCells& entry) { return entry.cells.empty(); });
    if (by_image.size() < 15) {
        throw InsufficientDataError(
            fmt::format("need at least 15 images with cells, got {}", by_image.size()));
    }
    rng.shuffle(by_image);

    FlawPlan plan{TaskKind::Eiph, seed, {}};

    // Group A: one missing cell each.
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& entry = by_image[i];
        const auto* cell = entry.cells[rng.uniform_index(entry.cells.size())];
        InjectedFlaw flaw;
        flaw.kind = FlawKind::Deletion;
        flaw.image_id = entry.image_id;
        flaw.target_id = cell->id;
        flaw.original_label = cell->label;
        plan.flaws.push_back(std::move(flaw));
    }

    // Group B: every cell's grade incremented, clamped at 4.
    for (std::size_t i = 5; i < 10; ++i) {
        for (const auto* cell : by_image[i].cells) {
            const int grade = std::stoi(cell->label);
            InjectedFlaw flaw;
            flaw.kind = FlawKind::GradeIncrement;
            flaw.image_id = cell->image_id;
            flaw.target_id = cell->id;
            flaw.original_label = cell->label;
            flaw.new_label = std::to_string(std::min(grade + 1, 4));
            plan.flaws.push_back(std::move(flaw));
        }
    }

    // Group C: ten artifacts in total, two per image, kind drawn per artifact.
    const auto& space = label_space(TaskKind::Eiph);
    for (std::size_t i = 10; i < 15; ++i) {
        const auto& entry = by_image[i];
        const ImageRecord* image = ground_truth.find_image(entry.image_id);
        for (int artifact = 0; artifact < 2; ++artifact) {
            InjectedFlaw flaw;
            flaw.image_id = entry.image_id;
            if (rng.bernoulli(0.5)) {
                flaw.kind = FlawKind::FalseAnnotation;
                flaw.synthetic_box =
                    background_box(entry.cells, *image, kDefaultPointRadius, rng);
                flaw.new_label = space[rng.uniform_index(space.size())];
            } else {
                flaw.kind = FlawKind::DuplicateAnnotation;
                const auto* cell = entry.cells[rng.uniform_index(entry.cells.size())];
                flaw.target_id = cell->id;
                flaw.synthetic_box = jittered_duplicate(cell->box, *image, rng);
                flaw.original_label = cell->label;
                flaw.new_label = cell->label;
            }
            plan.flaws.push_back(std::move(flaw));
        }
    }

    return finish(ground_truth, std::move(plan));
}

InjectionResult inject_mitosis(const StudyDataset& ground_truth,
                               const std::map<std::string, double>& scores,
                               const std::vector<ScoredBox>& candidate_negatives,
                               std::uint64_t seed, const MitosisInjectionConfig& config) {
    if (ground_truth.task != TaskKind::Mitosis) {
        throw DatasetMismatchError("inject_mitosis requires a mitosis dataset");
    }
    config.thresholds.check();
    if (config.removal_fraction < 0.0 || config.removal_fraction > 1.0) {
        throw ConfigError("removal fraction outside [0, 1]");
    }
    Rng rng(mix_seed(seed, "inject/mitosis"));

    std::vector<const AnnotationRecord*> figures;
    for (const auto& record : ground_truth.annotations) {
        if (record.annotator_id == kGroundTruthAnnotator) figures.push_back(&record);
    }
    std::sort(figures.begin(), figures.end(),
              [](const auto* a, const auto* b) { return a->id < b->id; });
    for (const auto* figure : figures) {
        if (!scores.contains(figure->id)) {
            throw DatasetMismatchError("no model score for ground-truth figure '" + figure->id +
                                       "'");
        }
    }

    const int removed_total =
        static_cast<int>(std::llround(config.removal_fraction * figures.size()));
    FlawPlan plan{TaskKind::Mitosis, seed, {}};
    if (removed_total == 0) {
        return finish(ground_truth, std::move(plan));
    }

    // Removed figures, stratified over the removed-score buckets.
    std::array<std::vector<const AnnotationRecord*>, 3> removed_pool;
    for (const auto* figure : figures) {
        removed_pool[bucket(scores.at(figure->id), config.thresholds, BucketKind::Removed)]
            .push_back(figure);
    }
    std::array<int, 3> removed_available{};
    for (int b = 0; b < 3; ++b) removed_available[b] = static_cast<int>(removed_pool[b].size());
    const auto removed_targets =
        fit_to_availability(largest_remainder_split(removed_total, config.removed_quotas),
                            removed_available, "removed figures");
    for (int b = 0; b < 3; ++b) {
        for (const std::size_t index :
             rng.sample_indices(removed_pool[b].size(), removed_targets[b])) {
            const auto* figure = removed_pool[b][index];
            InjectedFlaw flaw;
            flaw.kind = FlawKind::RemovedObject;
            flaw.image_id = figure->image_id;
            flaw.target_id = figure->id;
            flaw.difficulty_bucket = b;
            flaw.original_label = figure->label;
            plan.flaws.push_back(std::move(flaw));
        }
    }

    // Same number of fakes, stratified over the fake-score buckets.
    std::array<std::vector<const ScoredBox*>, 3> fake_pool;
    for (const auto& candidate : candidate_negatives) {
        fake_pool[bucket(candidate.score, config.thresholds, BucketKind::Fake)].push_back(
            &candidate);
    }
    std::array<int, 3> fake_available{};
    for (int b = 0; b < 3; ++b) fake_available[b] = static_cast<int>(fake_pool[b].size());
    const auto fake_targets = fit_to_availability(
        largest_remainder_split(removed_total, config.fake_quotas), fake_available, "fake figures");

    std::vector<const ImageRecord*> images;
    for (const auto& image : ground_truth.images) images.push_back(&image);
    std::sort(images.begin(), images.end(),
              [](const auto* a, const auto* b) { return a->image_id < b->image_id; });

    for (int b = 0; b < 3; ++b) {
        for (const std::size_t index : rng.sample_indices(fake_pool[b].size(), fake_targets[b])) {
            const ScoredBox* candidate = fake_pool[b][index];
            std::vector<const ImageRecord*> fits;
            for (const auto* image : images) {
                if (candidate->box.x_min >= 0.0 && candidate->box.y_min >= 0.0 &&
                    candidate->box.x_max <= image->width &&
                    candidate->box.y_max <= image->height) {
                    fits.push_back(image);
                }
            }
            if (fits.empty()) {
                throw InsufficientDataError("fake candidate box fits no image in the dataset");
            }
            InjectedFlaw flaw;
            flaw.kind = FlawKind::FakeObject;
            flaw.image_id = fits[rng.uniform_index(fits.size())]->image_id;
            flaw.synthetic_box = candidate->box;
            flaw.difficulty_bucket = b;
            flaw.new_label = label_space(TaskKind::Mitosis).front();
            plan.flaws.push_back(std::move(flaw));
        }
    }

    return finish(ground_truth, std::move(plan));
}

RecoveryReport recovery_report(const FlawPlan& plan, const StudyDataset& ground_truth,
                               const std::vector<AnnotationRecord>& expert_annotations,
                               double threshold) {
    if (plan.task != ground_truth.task) {
        throw DatasetMismatchError("plan task differs from dataset task");
    }
    std::unordered_map<std::string, std::vector<const AnnotationRecord*>> expert_by_image;
    for (const auto& record : expert_annotations) {
        expert_by_image[record.image_id].push_back(&record);
    }

    RecoveryReport report;
    for (const auto& flaw : plan.flaws) {
        BoundingBox anchor;
        std::string original_label = flaw.original_label;
        if (!flaw.target_id.empty()) {
            const AnnotationRecord* target = ground_truth.find_annotation(flaw.target_id);
            if (target == nullptr || target->annotator_id != kGroundTruthAnnotator) {
                throw DatasetMismatchError("plan targets unknown ground-truth annotation '" +
                                           flaw.target_id + "'");
            }
            anchor = target->box;
        } else if (flaw.synthetic_box) {
            anchor = *flaw.synthetic_box;
        } else {
            throw DatasetMismatchError("flaw carries neither target_id nor box");
        }
        if (ground_truth.find_image(flaw.image_id) == nullptr) {
            throw DatasetMismatchError("plan references unknown image '" + flaw.image_id + "'");
        }

        std::size_t matches = 0;
        bool matched_with_original_label = false;
        if (const auto it = expert_by_image.find(flaw.image_id); it != expert_by_image.end()) {
            for (const auto* record : it->second) {
                if (iou(record->box, anchor) >= threshold) {
                    ++matches;
                    if (record->label == original_label) matched_with_original_label = true;
                }
            }
        }

        bool recovered = false;
        switch (flaw.kind) {
            case FlawKind::ClassFlip:
            case FlawKind::GradeIncrement:
                recovered = matched_with_original_label;
                break;
            case FlawKind::Deletion:
            case FlawKind::RemovedObject:
                recovered = matches > 0;
                break;
            case FlawKind::FalseAnnotation:
            case FlawKind::FakeObject:
                recovered = matches == 0;
                break;
            case FlawKind::DuplicateAnnotation:
                recovered = matches == 1;
                break;
        }

        auto& cell = report.per_kind[flaw.kind];
        ++cell.total;
        if (recovered) ++cell.recovered;
        if (flaw.difficulty_bucket >= 0) {
            auto& bucket_cell = report.per_kind_and_bucket[{flaw.kind, flaw.difficulty_bucket}];
            ++bucket_cell.total;
            if (recovered) ++bucket_cell.recovered;
        }
    }
    return report;
}

std::map<std::string, double> load_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scores CSV: " + path.string());
    std::map<std::string, double> scores;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string(), "empty scores CSV");
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw SchemaError(fmt::format("{}:{}", path.string(), line_number),
                              "expected id,score");
        }
        try {
            scores[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw SchemaError(fmt::format("{}:{}", path.string(), line_number),
                              "non-numeric score");
        }
    }
    return scores;
}

std::vector<ScoredBox> load_negatives_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open negatives CSV: " + path.string());
    std::vector<ScoredBox> negatives;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string(), "empty negatives CSV");
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<double> cells;
        try {
            while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw SchemaError(fmt::format("{}:{}", path.string(), line_number),
                              "non-numeric cell");
        }
        if (cells.size() != 5) {
            throw SchemaError(fmt::format("{}:{}", path.string(), line_number),
                              "expected x_min,y_min,x_max,y_max,score");
        }
        negatives.push_back({BoundingBox{cells[0], cells[1], cells[2], cells[3]}, cells[4]});
    }
    return negatives;
}

}  // namespace annostudy
