#pragma once

#include <string>
#include <vector>

#include "annostudy/model.hpp"

namespace annostudy {

struct SummaryStat {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double sigma = 0.0;  // population standard deviation (divisor n)
    std::size_t n = 0;

    /// Renders like the report lines, e.g. "μ=0.84 (min=0.82, max=0.86, σ=0.01)".
    std::string pretty(int precision = 2) const;
};

SummaryStat summarize(const std::vector<double>& values);

struct AnovaResult {
    double f_statistic = 0.0;
    int df_between = 0;
    int df_within = 0;
    double p_value = 1.0;
};

/// One-way ANOVA for two groups: F = MS_between / MS_within with df
/// (1, N-2); p from the F-distribution survival function (regularized
/// incomplete beta, continued fraction, abs tol 1e-10).
///
/// Degenerate within-variance cases are reported, not thrown: MS_within = 0
/// with equal means gives F = 0, p = 1; with differing means F = +inf, p = 0.
AnovaResult anova_oneway(const std::vector<double>& group_a, const std::vector<double>& group_b);

/// Regularized incomplete beta I_x(a, b); exposed for tests.
double regularized_incomplete_beta(double a, double b, double x);

enum class GradeDecision { Below, AtOrAbove };
enum class GradeDirection { Over, Under, Equal };

struct GradingDecision {
    int mitotic_count = 0;
    int threshold = 7;
    GradeDecision decision = GradeDecision::Below;
    GradeDirection direction_vs_reference = GradeDirection::Equal;
};

inline constexpr int kDefaultGradingThreshold = 7;

/// at_or_above iff count >= threshold (closed boundary); direction is the
/// sign of expert_count - reference_count.
GradingDecision grade_case(int expert_count, int reference_count,
                           int threshold = kDefaultGradingThreshold);

std::string to_string(GradeDecision decision);
std::string to_string(GradeDirection direction);

/// Summary of seconds per image for one annotator. Images without a
/// recorded duration are excluded, not counted as zero. Datasets are
/// materialized per mode by the study harness (the file schema keys
/// durations by annotator only); `mode` is carried through for labeling.
SummaryStat timing_summary(const StudyDataset& dataset, ModeKind mode,
                           const std::string& annotator);

}  // namespace annostudy
