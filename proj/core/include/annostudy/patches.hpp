#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace annostudy {

struct PatchDescriptor {
    std::string patch_id;
    std::string slide_id;
    std::string stain;
    std::map<std::string, int> class_counts;  // objects per class/grade

    int total_objects() const;
};

struct PatchSelectionConfig {
    int target_patch_count = 20;
    /// How many selected patches should contain each class before coverage
    /// is considered satisfied.
    int per_class_coverage_goal = 1;
    int min_patches_per_slide = 1;
    int target_total_objects = 300;
};

/// Greedy patch selection maximizing marginal class coverage under hard
/// constraints: at least min_patches_per_slide per slide, stain-group sizes
/// within 1 of each other, deterministic ties by patch id; among coverage
/// ties the pick keeps the running object total closest to the pro-rata
/// share of target_total_objects. Throws InfeasibleError naming the
/// violated constraint; a returned selection satisfies every hard
/// constraint.
std::vector<PatchDescriptor> select_patches(const std::vector<PatchDescriptor>& candidates,
                                            const PatchSelectionConfig& config);

std::vector<PatchDescriptor> load_patches_json(const std::filesystem::path& path);
PatchSelectionConfig patch_config_from_json_file(const std::filesystem::path& path);
std::string patches_to_json(const std::vector<PatchDescriptor>& patches);

}  // namespace annostudy
