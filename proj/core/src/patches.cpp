#include "annostudy/patches.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>

#include <json.hpp>

#include "annostudy/errors.hpp"

namespace annostudy {

using nlohmann::json;

int PatchDescriptor::total_objects() const {
    int total = 0;
    for (const auto& [label, count] : class_counts) total += count;
    return total;
}

namespace {

/// Can the stain counts still end within 1 of each other after `remaining`
/// more picks, given per-stain availability?
bool stain_balance_reachable(const std::map<std::string, int>& selected_per_stain,
                             const std::map<std::string, int>& available_per_stain,
                             int remaining) {
    if (selected_per_stain.size() <= 1 && available_per_stain.size() <= 1) return true;
    // Two stain groups at most (checked by the caller).
    std::vector<std::string> stains;
    for (const auto& [stain, count] : available_per_stain) stains.push_back(stain);
    for (const auto& [stain, count] : selected_per_stain) {
        if (std::find(stains.begin(), stains.end(), stain) == stains.end())
            stains.push_back(stain);
    }
    std::sort(stains.begin(), stains.end());
    const auto selected = [&](const std::string& s) {
        const auto it = selected_per_stain.find(s);
        return it == selected_per_stain.end() ? 0 : it->second;
    };
    const auto available = [&](const std::string& s) {
        const auto it = available_per_stain.find(s);
        return it == available_per_stain.end() ? 0 : it->second;
    };
    if (stains.size() == 1) {
        return available(stains[0]) >= remaining;
    }
    const int a0 = selected(stains[0]);
    const int a1 = selected(stains[1]);
    for (int x = 0; x <= remaining; ++x) {
        const int y = remaining - x;
        if (x <= available(stains[0]) && y <= available(stains[1]) &&
            std::abs((a0 + x) - (a1 + y)) <= 1) {
            return true;
        }
    }
    return false;
}

}  // namespace

std::vector<PatchDescriptor> select_patches(const std::vector<PatchDescriptor>& candidates,
                                            const PatchSelectionConfig& config) {
    if (config.target_patch_count <= 0) throw ConfigError("target_patch_count must be positive");
    if (config.min_patches_per_slide < 0) throw ConfigError("min_patches_per_slide must be >= 0");
    if (candidates.empty()) throw InfeasibleError("no candidate patches");

    std::vector<PatchDescriptor> pool = candidates;
    std::sort(pool.begin(), pool.end(),
              [](const PatchDescriptor& a, const PatchDescriptor& b) {
                  return a.patch_id < b.patch_id;
              });

    std::set<std::string> slides;
    std::set<std::string> stains;
    std::set<std::string> classes;
    for (const auto& patch : pool) {
        slides.insert(patch.slide_id);
        stains.insert(patch.stain);
        for (const auto& [label, count] : patch.class_counts) {
            if (count > 0) classes.insert(label);
        }
    }
    if (stains.size() > 2) {
        throw InfeasibleError("stain balance: more than two stain groups among candidates");
    }
    if (static_cast<int>(slides.size()) * config.min_patches_per_slide >
        config.target_patch_count) {
        throw InfeasibleError(fmt::format(
            "slide coverage: {} slides x min {} patches exceeds target_patch_count {}",
            slides.size(), config.min_patches_per_slide, config.target_patch_count));
    }

    std::vector<PatchDescriptor> selection;
    std::map<std::string, int> per_slide;
    std::map<std::string, int> per_stain;
    std::map<std::string, int> coverage;
    std::vector<bool> used(pool.size(), false);
    int running_objects = 0;

    for (int step = 0; step < config.target_patch_count; ++step) {
        const int remaining = config.target_patch_count - step;

        int slide_deficit = 0;
        for (const auto& slide : slides) {
            const auto it = per_slide.find(slide);
            const int have = it == per_slide.end() ? 0 : it->second;
            slide_deficit += std::max(0, config.min_patches_per_slide - have);
        }

        std::map<std::string, int> available_per_stain;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!used[i]) ++available_per_stain[pool[i].stain];
        }

        const double pace_target = config.target_total_objects *
                                   (static_cast<double>(step + 1) / config.target_patch_count);

        int best = -1;
        int best_gain = -1;
        double best_pace_error = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (used[i]) continue;
            const PatchDescriptor& patch = pool[i];

            const int have = per_slide.contains(patch.slide_id) ? per_slide[patch.slide_id] : 0;
            const bool fills_slide_deficit = have < config.min_patches_per_slide;
            // Spend the remaining slots on deficient slides when they are
            // exactly needed for feasibility.
            if (slide_deficit >= remaining && !fills_slide_deficit) continue;

            auto stain_after = per_stain;
            ++stain_after[patch.stain];
            auto avail_after = available_per_stain;
            --avail_after[patch.stain];
            if (!stain_balance_reachable(stain_after, avail_after, remaining - 1)) continue;

            int gain = 0;
            for (const auto& [label, count] : patch.class_counts) {
                if (count <= 0) continue;
                const auto it = coverage.find(label);
                const int have_cover = it == coverage.end() ? 0 : it->second;
                if (have_cover < config.per_class_coverage_goal) ++gain;
            }
            const double pace_error =
                std::fabs(running_objects + patch.total_objects() - pace_target);
            if (gain > best_gain ||
                (gain == best_gain && pace_error < best_pace_error - 1e-12)) {
                best = static_cast<int>(i);
                best_gain = gain;
                best_pace_error = pace_error;
            }
        }
        if (best < 0) {
            throw InfeasibleError(
                slide_deficit >= remaining
                    ? "slide coverage: not enough candidates on under-covered slides"
                    : "stain balance: no candidate keeps the stain groups within 1");
        }
        used[static_cast<std::size_t>(best)] = true;
        const PatchDescriptor& picked = pool[static_cast<std::size_t>(best)];
        selection.push_back(picked);
        ++per_slide[picked.slide_id];
        ++per_stain[picked.stain];
        running_objects += picked.total_objects();
        for (const auto& [label, count] : picked.class_counts) {
            if (count > 0) ++coverage[label];
        }
    }

    for (const auto& slide : slides) {
        if (per_slide[slide] < config.min_patches_per_slide) {
            throw InfeasibleError("slide coverage: slide '" + slide + "' below minimum");
        }
    }
    if (per_stain.size() == 2) {
        const int a = per_stain.begin()->second;
        const int b = std::next(per_stain.begin())->second;
        if (std::abs(a - b) > 1) {
            throw InfeasibleError("stain balance: selected stain groups differ by more than 1");
        }
    }
    return selection;
}

std::vector<PatchDescriptor> load_patches_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open patches file: " + path.string());
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_array()) throw SchemaError("", "expected an array of patch descriptors");
    std::vector<PatchDescriptor> patches;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& entry = root[i];
        const std::string location = "/" + std::to_string(i);
        if (!entry.is_object() || !entry.contains("patch_id") || !entry.contains("slide_id") ||
            !entry.contains("stain") || !entry.contains("class_counts")) {
            throw SchemaError(location,
                              "patch needs patch_id, slide_id, stain, class_counts");
        }
        PatchDescriptor patch;
        patch.patch_id = entry["patch_id"].get<std::string>();
        patch.slide_id = entry["slide_id"].get<std::string>();
        patch.stain = entry["stain"].get<std::string>();
        for (const auto& [label, count] : entry["class_counts"].items()) {
            if (!count.is_number_integer() || count.get<int>() < 0) {
                throw SchemaError(location + "/class_counts/" + label,
                                  "expected a nonnegative integer");
            }
            patch.class_counts[label] = count.get<int>();
        }
        patches.push_back(std::move(patch));
    }
    return patches;
}

PatchSelectionConfig patch_config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open patch config: " + path.string());
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    PatchSelectionConfig config;
    config.target_patch_count = root.value("target_patch_count", config.target_patch_count);
    config.per_class_coverage_goal =
        root.value("per_class_coverage_goal", config.per_class_coverage_goal);
    config.min_patches_per_slide =
        root.value("min_patches_per_slide", config.min_patches_per_slide);
    config.target_total_objects =
        root.value("target_total_objects", config.target_total_objects);
    return config;
}

std::string patches_to_json(const std::vector<PatchDescriptor>& patches) {
    json root = json::array();
    for (const auto& patch : patches) {
        json entry;
        entry["patch_id"] = patch.patch_id;
        entry["slide_id"] = patch.slide_id;
        entry["stain"] = patch.stain;
        entry["class_counts"] = json::object();
        for (const auto& [label, count] : patch.class_counts) {
            entry["class_counts"][label] = count;
        }
        root.push_back(std::move(entry));
    }
    return root.dump(2) + "\n";
}

}  // namespace annostudy
