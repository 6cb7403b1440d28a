#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace annostudy {

/// Axis-aligned box in image pixel coordinates. Point-style annotations are
/// stored as square boxes of a task-configured radius around the click.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }

    bool valid() const;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

constexpr double kDefaultPointRadius = 25.0;

/// Square box of the given radius centered on a point annotation.
BoundingBox box_from_point(double x, double y, double radius = kDefaultPointRadius);

enum class TaskKind {
    Asthma,
    Eiph,
    Mitosis,
};

enum class ModeKind {
    Unaided,
    Aided,
};

enum class Provenance {
    Human,
    Proposal,
    GroundTruth,
};

/// Annotator ids reserved for the dataset's reference labels and for the
/// computer-generated (possibly flawed) labels.
inline constexpr std::string_view kGroundTruthAnnotator = "ground_truth";
inline constexpr std::string_view kProposalAnnotator = "proposal";

/// Class tokens valid for a task, in fixed enumeration order. The order is
/// also the deterministic tie-break for consensus labels.
const std::vector<std::string>& label_space(TaskKind task);
bool label_in_space(TaskKind task, const std::string& label);
/// Index of a label within its task's space, or -1.
int label_index(TaskKind task, const std::string& label);

std::string to_string(TaskKind task);
std::string to_string(ModeKind mode);
std::string to_string(Provenance provenance);
TaskKind task_from_string(const std::string& token);
ModeKind mode_from_string(const std::string& token);
Provenance provenance_from_string(const std::string& token);

/// One expert's (or the reference's, or the proposal generator's) box and
/// label on one image.
struct AnnotationRecord {
    std::string id;
    std::string image_id;
    std::string annotator_id;
    ModeKind mode = ModeKind::Unaided;
    BoundingBox box;
    std::string label;
    Provenance provenance = Provenance::Human;
};

struct ImageRecord {
    std::string image_id;
    TaskKind task = TaskKind::Asthma;
    double width = 0.0;
    double height = 0.0;
    std::string source_slide_id;
    /// seconds spent by an annotator on this image; absent means unrecorded
    /// and is excluded from timing means rather than treated as zero.
    std::map<std::string, double> durations;
};

/// Immutable after construction; safe to share across concurrent readers.
struct StudyDataset {
    TaskKind task = TaskKind::Asthma;
    std::vector<ImageRecord> images;
    std::vector<AnnotationRecord> annotations;

    const ImageRecord* find_image(const std::string& image_id) const;
    const AnnotationRecord* find_annotation(const std::string& id) const;

    std::vector<const AnnotationRecord*> annotations_on_image(const std::string& image_id) const;
    std::vector<const AnnotationRecord*> annotations_by(std::string_view annotator_id) const;
    std::vector<const AnnotationRecord*> annotations_by(std::string_view annotator_id,
                                                        ModeKind mode) const;
    /// Distinct human annotator ids (reserved ids excluded), sorted.
    std::vector<std::string> human_annotators() const;
};

/// One invariant violation found by validate_dataset; violations are data,
/// not faults.
struct Violation {
    std::string record_id;
    std::string rule;
    std::string message;
};

std::vector<Violation> validate_dataset(const StudyDataset& dataset);

}  // namespace annostudy
