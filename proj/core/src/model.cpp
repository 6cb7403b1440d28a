#include "annostudy/model.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <set>
#include <unordered_map>

#include "annostudy/errors.hpp"

namespace annostudy {

bool BoundingBox::valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max;
}

BoundingBox box_from_point(double x, double y, double radius) {
    return BoundingBox{x - radius, y - radius, x + radius, y + radius};
}

const std::vector<std::string>& label_space(TaskKind task) {
    static const std::vector<std::string> asthma = {"eosinophil", "mast_cell", "neutrophil",
                                                    "macrophage", "lymphocyte"};
    static const std::vector<std::string> eiph = {"0", "1", "2", "3", "4"};
    static const std::vector<std::string> mitosis = {"mitotic_figure"};
    switch (task) {
        case TaskKind::Asthma: return asthma;
        case TaskKind::Eiph: return eiph;
        case TaskKind::Mitosis: return mitosis;
    }
    return mitosis;
}

bool label_in_space(TaskKind task, const std::string& label) {
    return label_index(task, label) >= 0;
}

int label_index(TaskKind task, const std::string& label) {
    const auto& space = label_space(task);
    const auto it = std::find(space.begin(), space.end(), label);
    return it == space.end() ? -1 : static_cast<int>(it - space.begin());
}

std::string to_string(TaskKind task) {
    switch (task) {
        case TaskKind::Asthma: return "asthma";
        case TaskKind::Eiph: return "eiph";
        case TaskKind::Mitosis: return "mitosis";
    }
    return "mitosis";
}

std::string to_string(ModeKind mode) {
    return mode == ModeKind::Unaided ? "unaided" : "aided";
}

std::string to_string(Provenance provenance) {
    switch (provenance) {
        case Provenance::Human: return "human";
        case Provenance::Proposal: return "proposal";
        case Provenance::GroundTruth: return "ground_truth";
    }
    return "human";
}

TaskKind task_from_string(const std::string& token) {
    if (token == "asthma") return TaskKind::Asthma;
    if (token == "eiph") return TaskKind::Eiph;
    if (token == "mitosis") return TaskKind::Mitosis;
    throw SchemaError("/task", "unknown task '" + token + "'");
}

ModeKind mode_from_string(const std::string& token) {
    if (token == "unaided") return ModeKind::Unaided;
    if (token == "aided") return ModeKind::Aided;
    throw SchemaError("/mode", "unknown mode '" + token + "'");
}

Provenance provenance_from_string(const std::string& token) {
    if (token == "human") return Provenance::Human;
    if (token == "proposal") return Provenance::Proposal;
    if (token == "ground_truth") return Provenance::GroundTruth;
    throw SchemaError("/provenance", "unknown provenance '" + token + "'");
}

const ImageRecord* StudyDataset::find_image(const std::string& image_id) const {
    for (const auto& image : images) {
        if (image.image_id == image_id) return &image;
    }
    return nullptr;
}

const AnnotationRecord* StudyDataset::find_annotation(const std::string& id) const {
    for (const auto& annotation : annotations) {
        if (annotation.id == id) return &annotation;
    }
    return nullptr;
}

std::vector<const AnnotationRecord*> StudyDataset::annotations_on_image(
    const std::string& image_id) const {
    std::vector<const AnnotationRecord*> out;
    for (const auto& annotation : annotations) {
        if (annotation.image_id == image_id) out.push_back(&annotation);
    }
    return out;
}

std::vector<const AnnotationRecord*> StudyDataset::annotations_by(
    std::string_view annotator_id) const {
    std::vector<const AnnotationRecord*> out;
    for (const auto& annotation : annotations) {
        if (annotation.annotator_id == annotator_id) out.push_back(&annotation);
    }
    return out;
}

std::vector<const AnnotationRecord*> StudyDataset::annotations_by(std::string_view annotator_id,
                                                                  ModeKind mode) const {
    std::vector<const AnnotationRecord*> out;
    for (const auto& annotation : annotations) {
        if (annotation.annotator_id == annotator_id && annotation.mode == mode)
            out.push_back(&annotation);
    }
    return out;
}

std::vector<std::string> StudyDataset::human_annotators() const {
    std::set<std::string> ids;
    for (const auto& annotation : annotations) {
        if (annotation.annotator_id != kGroundTruthAnnotator &&
            annotation.annotator_id != kProposalAnnotator) {
            ids.insert(annotation.annotator_id);
        }
    }
    return {ids.begin(), ids.end()};
}

std::vector<Violation> validate_dataset(const StudyDataset& dataset) {
    std::vector<Violation> violations;
    const auto add = [&](std::string id, std::string rule, std::string message) {
        violations.push_back({std::move(id), std::move(rule), std::move(message)});
    };

    std::unordered_map<std::string, const ImageRecord*> images_by_id;
    for (const auto& image : dataset.images) {
        if (!images_by_id.emplace(image.image_id, &image).second) {
            add(image.image_id, "unique-image-id", "duplicate image_id");
        }
        if (!(image.width > 0.0) || !(image.height > 0.0)) {
            add(image.image_id, "positive-image-size",
                fmt::format("width/height must be > 0, got {}x{}", image.width, image.height));
        }
        for (const auto& [annotator, seconds] : image.durations) {
            if (seconds < 0.0) {
                add(image.image_id, "nonnegative-duration",
                    fmt::format("duration for '{}' is negative", annotator));
            }
        }
    }

    std::set<std::string> annotation_ids;
    for (const auto& annotation : dataset.annotations) {
        if (!annotation_ids.insert(annotation.id).second) {
            add(annotation.id, "unique-annotation-id", "duplicate annotation id");
        }
        if (!annotation.box.valid()) {
            add(annotation.id, "valid-box",
                fmt::format("degenerate or non-finite box [{},{},{},{}]", annotation.box.x_min,
                            annotation.box.y_min, annotation.box.x_max, annotation.box.y_max));
        }
        const auto image_it = images_by_id.find(annotation.image_id);
        if (image_it == images_by_id.end()) {
            add(annotation.id, "image-exists",
                "annotation references unknown image_id '" + annotation.image_id + "'");
        } else if (annotation.box.valid()) {
            const ImageRecord& image = *image_it->second;
            if (annotation.box.x_min < 0.0 || annotation.box.y_min < 0.0 ||
                annotation.box.x_max > image.width || annotation.box.y_max > image.height) {
                add(annotation.id, "box-in-bounds",
                    fmt::format("box exceeds image bounds {}x{}", image.width, image.height));
            }
        }
        if (!label_in_space(dataset.task, annotation.label)) {
            add(annotation.id, "label-in-task-space",
                "label '" + annotation.label + "' not valid for task " + to_string(dataset.task));
        }
        const bool is_gt = annotation.annotator_id == kGroundTruthAnnotator;
        const bool is_proposal = annotation.annotator_id == kProposalAnnotator;
        if (is_gt != (annotation.provenance == Provenance::GroundTruth)) {
            add(annotation.id, "reserved-annotator-provenance",
                "annotator 'ground_truth' must pair with provenance ground_truth");
        }
        if (is_proposal != (annotation.provenance == Provenance::Proposal)) {
            add(annotation.id, "reserved-annotator-provenance",
                "annotator 'proposal' must pair with provenance proposal");
        }
    }
    return violations;
}

}  // namespace annostudy
