#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>

#include "annostudy/model.hpp"

namespace annostudy {

/// Parses a dataset file (UTF-8 JSON, schema in docs/dataset.schema.json).
///
/// Unknown keys are rejected. Throws IoError for unreadable files,
/// SchemaError (with a JSON-pointer-style location) for structural problems,
/// and IntegrityError when the content violates a dataset invariant, so
/// every dataset this returns passes validate_dataset with no violations.
StudyDataset parse_dataset(const std::filesystem::path& path);

/// Same as parse_dataset but from an in-memory JSON string.
StudyDataset parse_dataset_text(const std::string& text);

/// Canonical JSON serialization; parse(serialize(ds)) is structurally equal.
std::string serialize_dataset(const StudyDataset& dataset);

void write_dataset(const StudyDataset& dataset, const std::filesystem::path& path);

struct DatasetSummary {
    std::size_t image_count = 0;
    std::size_t annotation_count = 0;
    std::map<std::string, std::size_t> annotations_per_annotator;
};

DatasetSummary summarize_dataset(const StudyDataset& dataset);

}  // namespace annostudy
