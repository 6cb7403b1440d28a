#include "annostudy/dataset_io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "annostudy/errors.hpp"

namespace annostudy {

using nlohmann::json;

namespace {

void require_keys(const json& object, const std::string& location,
                  const std::set<std::string_view>& required,
                  const std::set<std::string_view>& optional = {}) {
    for (const auto& [key, value] : object.items()) {
        if (!required.contains(key) && !optional.contains(key)) {
            throw SchemaError(location + "/" + key, "unknown key");
        }
    }
    for (const auto& key : required) {
        if (!object.contains(key)) {
            throw SchemaError(location, "missing required key '" + std::string(key) + "'");
        }
    }
}

std::string get_string(const json& object, const std::string& location, const char* key) {
    const json& value = object.at(key);
    if (!value.is_string()) {
        throw SchemaError(location + "/" + key, "expected a string");
    }
    return value.get<std::string>();
}

double get_number(const json& object, const std::string& location, const char* key) {
    const json& value = object.at(key);
    if (!value.is_number()) {
        throw SchemaError(location + "/" + key, "expected a number");
    }
    return value.get<double>();
}

BoundingBox parse_box(const json& value, const std::string& location) {
    if (!value.is_array() || value.size() != 4) {
        throw SchemaError(location, "expected box as [x_min, y_min, x_max, y_max]");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (!value[i].is_number()) {
            throw SchemaError(location + "/" + std::to_string(i), "expected a number");
        }
    }
    return BoundingBox{value[0].get<double>(), value[1].get<double>(), value[2].get<double>(),
                       value[3].get<double>()};
}

StudyDataset parse_json(const json& root) {
    if (!root.is_object()) {
        throw SchemaError("", "top level must be an object");
    }
    require_keys(root, "", {"task", "images", "annotations"});

    StudyDataset dataset;
    dataset.task = task_from_string(get_string(root, "", "task"));

    const json& images = root.at("images");
    if (!images.is_array()) {
        throw SchemaError("/images", "expected an array");
    }
    dataset.images.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string location = "/images/" + std::to_string(i);
        const json& entry = images[i];
        if (!entry.is_object()) throw SchemaError(location, "expected an object");
        require_keys(entry, location, {"image_id", "width", "height", "source_slide_id"},
                     {"durations"});
        ImageRecord image;
        image.image_id = get_string(entry, location, "image_id");
        image.task = dataset.task;
        image.width = get_number(entry, location, "width");
        image.height = get_number(entry, location, "height");
        image.source_slide_id = get_string(entry, location, "source_slide_id");
        if (entry.contains("durations")) {
            const json& durations = entry.at("durations");
            if (!durations.is_object()) {
                throw SchemaError(location + "/durations", "expected an object");
            }
            for (const auto& [annotator, seconds] : durations.items()) {
                if (!seconds.is_number()) {
                    throw SchemaError(location + "/durations/" + annotator, "expected a number");
                }
                image.durations[annotator] = seconds.get<double>();
            }
        }
        dataset.images.push_back(std::move(image));
    }

    const json& annotations = root.at("annotations");
    if (!annotations.is_array()) {
        throw SchemaError("/annotations", "expected an array");
    }
    dataset.annotations.reserve(annotations.size());
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const std::string location = "/annotations/" + std::to_string(i);
        const json& entry = annotations[i];
        if (!entry.is_object()) throw SchemaError(location, "expected an object");
        require_keys(entry, location,
                     {"id", "image_id", "annotator_id", "mode", "box", "label", "provenance"});
        AnnotationRecord annotation;
        annotation.id = get_string(entry, location, "id");
        annotation.image_id = get_string(entry, location, "image_id");
        annotation.annotator_id = get_string(entry, location, "annotator_id");
        try {
            annotation.mode = mode_from_string(get_string(entry, location, "mode"));
            annotation.provenance =
                provenance_from_string(get_string(entry, location, "provenance"));
        } catch (const SchemaError& e) {
            throw SchemaError(location, e.what());
        }
        annotation.box = parse_box(entry.at("box"), location + "/box");
        annotation.label = get_string(entry, location, "label");
        dataset.annotations.push_back(std::move(annotation));
    }

    const auto violations = validate_dataset(dataset);
    if (!violations.empty()) {
        std::ostringstream message;
        message << violations.size() << " integrity violation(s); first: [" << violations[0].rule
                << "] " << violations[0].record_id << ": " << violations[0].message;
        throw IntegrityError(message.str());
    }
    return dataset;
}

}  // namespace

StudyDataset parse_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open dataset file: " + path.string());
    }
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_json(root);
}

StudyDataset parse_dataset_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_json(root);
}

std::string serialize_dataset(const StudyDataset& dataset) {
    json root;
    root["task"] = to_string(dataset.task);
    root["images"] = json::array();
    for (const auto& image : dataset.images) {
        json entry;
        entry["image_id"] = image.image_id;
        entry["width"] = image.width;
        entry["height"] = image.height;
        entry["source_slide_id"] = image.source_slide_id;
        entry["durations"] = json::object();
        for (const auto& [annotator, seconds] : image.durations) {
            entry["durations"][annotator] = seconds;
        }
        root["images"].push_back(std::move(entry));
    }
    root["annotations"] = json::array();
    for (const auto& annotation : dataset.annotations) {
        json entry;
        entry["id"] = annotation.id;
        entry["image_id"] = annotation.image_id;
        entry["annotator_id"] = annotation.annotator_id;
        entry["mode"] = to_string(annotation.mode);
        entry["box"] = {annotation.box.x_min, annotation.box.y_min, annotation.box.x_max,
                        annotation.box.y_max};
        entry["label"] = annotation.label;
        entry["provenance"] = to_string(annotation.provenance);
        root["annotations"].push_back(std::move(entry));
    }
    return root.dump(2) + "\n";
}

void write_dataset(const StudyDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << serialize_dataset(dataset);
    if (!out) {
        throw IoError("failed writing dataset to " + path.string());
    }
}

DatasetSummary summarize_dataset(const StudyDataset& dataset) {
    DatasetSummary summary;
    summary.image_count = dataset.images.size();
    summary.annotation_count = dataset.annotations.size();
    for (const auto& annotation : dataset.annotations) {
        ++summary.annotations_per_annotator[annotation.annotator_id];
    }
    return summary;
}

}  // namespace annostudy
