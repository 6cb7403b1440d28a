#include "annostudy/matching.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "annostudy/errors.hpp"

namespace annostudy {

namespace {

void require_single_image(const std::vector<AnnotationRecord>& records, const char* who) {
    const std::string* image_id = nullptr;
    for (const auto& record : records) {
        if (image_id == nullptr) {
            image_id = &record.image_id;
        } else if (record.image_id != *image_id) {
            throw MixedImageError(std::string(who) + ": records span images '" + *image_id +
                                  "' and '" + record.image_id + "'");
        }
    }
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double intersection = ix * iy;
    const double uni = a.area() + b.area() - intersection;
    return uni <= 0.0 ? 0.0 : intersection / uni;
}

MatchResult match_sets(const std::vector<AnnotationRecord>& candidates,
                       const std::vector<AnnotationRecord>& references, double threshold) {
    require_single_image(candidates, "match_sets candidates");
    require_single_image(references, "match_sets references");
    if (!candidates.empty() && !references.empty() &&
        candidates.front().image_id != references.front().image_id) {
        throw MixedImageError("match_sets: candidates and references are on different images");
    }

    struct Edge {
        double iou;
        std::size_t candidate;
        std::size_t reference;
    };
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        for (std::size_t j = 0; j < references.size(); ++j) {
            const double overlap = iou(candidates[i].box, references[j].box);
            if (overlap >= threshold) edges.push_back({overlap, i, j});
        }
    }
    std::sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        const auto& ca = candidates[a.candidate].id;
        const auto& cb = candidates[b.candidate].id;
        if (ca != cb) return ca < cb;
        return references[a.reference].id < references[b.reference].id;
    });

    std::vector<bool> candidate_used(candidates.size(), false);
    std::vector<bool> reference_used(references.size(), false);
    MatchResult result;
    for (const auto& edge : edges) {
        if (candidate_used[edge.candidate] || reference_used[edge.reference]) continue;
        candidate_used[edge.candidate] = true;
        reference_used[edge.reference] = true;
        result.pairs.push_back(
            {candidates[edge.candidate].id, references[edge.reference].id, edge.iou});
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!candidate_used[i]) result.unmatched_annotations.push_back(candidates[i].id);
    }
    for (std::size_t j = 0; j < references.size(); ++j) {
        if (!reference_used[j]) result.unmatched_references.push_back(references[j].id);
    }
    return result;
}

std::vector<ConsensusCluster> cluster_consensus(const std::vector<AnnotationRecord>& annotations,
                                                double nms_iou, TaskKind task) {
    require_single_image(annotations, "cluster_consensus");

    const std::size_t n = annotations.size();
    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (iou(annotations[i].box, annotations[j].box) >= nms_iou) {
                neighbors[i].push_back(j);
                neighbors[j].push_back(i);
            }
        }
    }

    std::vector<bool> assigned(n, false);
    std::vector<ConsensusCluster> clusters;
    std::size_t remaining = n;
    while (remaining > 0) {
        // Seed at the annotation with the most unassigned overlapping peers,
        // ties by id.
        std::size_t seed = n;
        std::size_t best_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (assigned[i]) continue;
            std::size_t count = 0;
            for (const std::size_t j : neighbors[i]) {
                if (!assigned[j]) ++count;
            }
            if (seed == n || count > best_count ||
                (count == best_count && annotations[i].id < annotations[seed].id)) {
                seed = i;
                best_count = count;
            }
        }

        std::vector<std::size_t> members{seed};
        assigned[seed] = true;
        for (const std::size_t j : neighbors[seed]) {
            if (!assigned[j]) {
                assigned[j] = true;
                members.push_back(j);
            }
        }
        remaining -= members.size();

        ConsensusCluster cluster;
        std::vector<double> xs_min, ys_min, xs_max, ys_max;
        std::set<std::string> annotators;
        // One histogram count per distinct annotator; an annotator with
        // several members in the cluster contributes via their smallest
        // member id.
        std::map<std::string, const AnnotationRecord*> vote_of;
        for (const std::size_t index : members) {
            const AnnotationRecord& record = annotations[index];
            cluster.member_ids.push_back(record.id);
            xs_min.push_back(record.box.x_min);
            ys_min.push_back(record.box.y_min);
            xs_max.push_back(record.box.x_max);
            ys_max.push_back(record.box.y_max);
            annotators.insert(record.annotator_id);
            auto [it, inserted] = vote_of.emplace(record.annotator_id, &record);
            if (!inserted && record.id < it->second->id) it->second = &record;
        }
        std::sort(cluster.member_ids.begin(), cluster.member_ids.end());
        cluster.representative_box =
            BoundingBox{median(xs_min), median(ys_min), median(xs_max), median(ys_max)};
        cluster.votes = static_cast<int>(annotators.size());
        for (const auto& [annotator, record] : vote_of) {
            ++cluster.class_histogram[record->label];
        }

        int best_votes = -1;
        int best_rank = -1;
        for (const auto& [label, count] : cluster.class_histogram) {
            const int rank = label_index(task, label);
            if (count > best_votes || (count == best_votes && rank < best_rank)) {
                best_votes = count;
                best_rank = rank;
                cluster.consensus_label = label;
            }
        }
        clusters.push_back(std::move(cluster));
    }
    return clusters;
}

ConcordanceScore concordance(const std::string& expert, const StudyDataset& dataset, ModeKind mode,
                             double threshold) {
    const auto expert_records = dataset.annotations_by(expert, mode);
    if (expert_records.empty()) {
        throw MissingAnnotatorError("no annotations by '" + expert + "' in mode " +
                                    to_string(mode));
    }

    std::unordered_map<std::string, std::vector<AnnotationRecord>> expert_by_image;
    for (const auto* record : expert_records) expert_by_image[record->image_id].push_back(*record);
    std::unordered_map<std::string, std::vector<AnnotationRecord>> reference_by_image;
    for (const auto* record : dataset.annotations_by(kGroundTruthAnnotator)) {
        reference_by_image[record->image_id].push_back(*record);
    }

    ConcordanceScore score;
    double total = 0.0;
    for (const auto& image : dataset.images) {
        const auto expert_it = expert_by_image.find(image.image_id);
        const auto reference_it = reference_by_image.find(image.image_id);
        const auto& expert_set =
            expert_it == expert_by_image.end() ? std::vector<AnnotationRecord>{} : expert_it->second;
        const auto& reference_set = reference_it == reference_by_image.end()
                                        ? std::vector<AnnotationRecord>{}
                                        : reference_it->second;

        double value = 1.0;  // nothing to annotate and nothing annotated
        if (!expert_set.empty() || !reference_set.empty()) {
            const MatchResult matches = match_sets(expert_set, reference_set, threshold);
            std::unordered_map<std::string, const AnnotationRecord*> by_id;
            for (const auto& record : expert_set) by_id[record.id] = &record;
            for (const auto& record : reference_set) by_id[record.id] = &record;
            std::size_t correct = 0;
            for (const auto& pair : matches.pairs) {
                if (by_id[pair.annotation_id]->label == by_id[pair.reference_id]->label) ++correct;
            }
            const std::size_t union_size =
                expert_set.size() + reference_set.size() - matches.pairs.size();
            value = static_cast<double>(correct) / static_cast<double>(union_size);
        }
        score.per_image[image.image_id] = value;
        total += value;
    }
    score.mean = dataset.images.empty() ? 0.0 : total / static_cast<double>(dataset.images.size());
    return score;
}

}  // namespace annostudy
