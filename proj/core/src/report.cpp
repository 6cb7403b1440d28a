#include <fmt/format.h>
#include <fstream>

#include <json.hpp>

#include "annostudy/dataset_io.hpp"
#include "annostudy/errors.hpp"
#include "annostudy/study.hpp"

namespace annostudy {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

/// Shortest round-trip representation; keeps CSV cells re-derivable.
std::string cell(double value) { return fmt::format("{}", value); }

void write_stat_csv(const std::vector<ExpertModeStat>& rows,
                    const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "mode,annotator,n,mean,min,max,sigma\n";
    for (const auto& row : rows) {
        out << fmt::format("{},{},{},{},{},{},{}\n", to_string(row.mode), row.annotator,
                           row.stat.n, cell(row.stat.mean), cell(row.stat.min),
                           cell(row.stat.max), cell(row.stat.sigma));
    }
}

json stat_to_json(const SummaryStat& stat) {
    return json{{"mean", stat.mean}, {"min", stat.min},   {"max", stat.max},
                {"sigma", stat.sigma}, {"n", stat.n}};
}

json box_to_json(const BoundingBox& box) {
    return json::array({box.x_min, box.y_min, box.x_max, box.y_max});
}

json cluster_to_json(const ConsensusCluster& cluster) {
    json entry;
    entry["representative_box"] = box_to_json(cluster.representative_box);
    entry["votes"] = cluster.votes;
    entry["class_histogram"] = cluster.class_histogram;
    entry["member_ids"] = cluster.member_ids;
    entry["consensus_label"] = cluster.consensus_label;
    return entry;
}

}  // namespace

void write_report(const StudyReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);

    write_stat_csv(report.concordance, out_dir / "concordance.csv");
    write_stat_csv(report.timing, out_dir / "timing.csv");

    {
        auto out = open_out(out_dir / "recovery.csv");
        out << "mode,kind,bucket,total,recovered,rate\n";
        for (const auto& row : report.recovery) {
            out << fmt::format("{},{},{},{},{},{}\n", to_string(row.mode), to_string(row.kind),
                               row.bucket < 0 ? std::string{} : std::to_string(row.bucket),
                               row.cell.total, row.cell.recovered, cell(row.cell.rate()));
        }
    }
    {
        auto out = open_out(out_dir / "anova.csv");
        out << "metric,f,df_between,df_within,p\n";
        for (const auto& row : report.anova) {
            out << fmt::format("{},{},{},{},{}\n", row.metric, cell(row.result.f_statistic),
                               row.result.df_between, row.result.df_within,
                               cell(row.result.p_value));
        }
    }
    {
        auto out = open_out(out_dir / "grading.csv");
        out << "mode,image_id,reference_count,mean_expert_count,decision,direction\n";
        for (const auto& row : report.grading) {
            out << fmt::format("{},{},{},{},{},{}\n", to_string(row.mode), row.image_id,
                               row.reference_count, cell(row.mean_expert_count),
                               to_string(row.decision.decision),
                               to_string(row.decision.direction_vs_reference));
        }
    }
    {
        auto out = open_out(out_dir / "classifier.csv");
        out << "mode,training_set,experts,loss,repetition,best_accuracy\n";
        for (const auto& row : report.classifier) {
            for (std::size_t rep = 0; rep < row.best_per_repetition.size(); ++rep) {
                out << fmt::format("{},{},{},{},{},{}\n", to_string(row.mode), row.set_id,
                                   row.experts, to_string(row.loss), rep + 1,
                                   cell(row.best_per_repetition[rep]));
            }
            out << fmt::format("{},{},{},{},mean,{}\n", to_string(row.mode), row.set_id,
                               row.experts, to_string(row.loss), cell(row.mean_of_best));
        }
    }

    open_out(out_dir / "flaw_plan.json") << report.plan.to_json();

    {
        json consensus;
        for (const auto& [mode, per_image] : report.consensus) {
            json mode_entry = json::object();
            for (const auto& [image_id, clusters] : per_image) {
                json list = json::array();
                for (const auto& cluster : clusters) list.push_back(cluster_to_json(cluster));
                mode_entry[image_id] = std::move(list);
            }
            consensus[to_string(mode)] = std::move(mode_entry);
        }
        open_out(out_dir / "consensus.json") << consensus.dump(2) << "\n";
    }

    {
        json summary;
        summary["task"] = to_string(report.task);
        summary["seed"] = report.seed;
        summary["concordance"] = json::array();
        for (const auto& row : report.concordance) {
            summary["concordance"].push_back({{"mode", to_string(row.mode)},
                                              {"annotator", row.annotator},
                                              {"stat", stat_to_json(row.stat)}});
        }
        summary["timing"] = json::array();
        for (const auto& row : report.timing) {
            summary["timing"].push_back({{"mode", to_string(row.mode)},
                                         {"annotator", row.annotator},
                                         {"stat", stat_to_json(row.stat)}});
        }
        summary["recovery"] = json::array();
        for (const auto& row : report.recovery) {
            json entry{{"mode", to_string(row.mode)},
                       {"kind", to_string(row.kind)},
                       {"total", row.cell.total},
                       {"recovered", row.cell.recovered},
                       {"rate", row.cell.rate()}};
            if (row.bucket >= 0) entry["bucket"] = row.bucket;
            summary["recovery"].push_back(std::move(entry));
        }
        summary["anova"] = json::array();
        for (const auto& row : report.anova) {
            summary["anova"].push_back({{"metric", row.metric},
                                        {"f", row.result.f_statistic},
                                        {"df_between", row.result.df_between},
                                        {"df_within", row.result.df_within},
                                        {"p", row.result.p_value}});
        }
        summary["grading_tallies"] = json::array();
        for (const auto& tally : report.grading_tallies) {
            summary["grading_tallies"].push_back({{"mode", to_string(tally.mode)},
                                                  {"over", tally.over},
                                                  {"under", tally.under},
                                                  {"equal", tally.equal}});
        }
        summary["classifier"] = json::array();
        for (const auto& row : report.classifier) {
            summary["classifier"].push_back({{"mode", to_string(row.mode)},
                                             {"training_set", row.set_id},
                                             {"experts", row.experts},
                                             {"loss", to_string(row.loss)},
                                             {"best_per_repetition", row.best_per_repetition},
                                             {"mean_of_best", row.mean_of_best}});
        }
        open_out(out_dir / "summary.json") << summary.dump(2) << "\n";
    }

    write_dataset(report.unaided_dataset, out_dir / "dataset_unaided.json");
    write_dataset(report.aided_dataset, out_dir / "dataset_aided.json");
}

}  // namespace annostudy
