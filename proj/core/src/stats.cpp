#include "annostudy/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "annostudy/errors.hpp"

namespace annostudy {

std::string SummaryStat::pretty(int precision) const {
    return fmt::format("μ={:.{}f} (min={:.{}f}, max={:.{}f}, σ={:.{}f})", mean, precision, min,
                       precision, max, precision, sigma, precision);
}

SummaryStat summarize(const std::vector<double>& values) {
    if (values.empty()) {
        throw EmptyInputError("summarize: empty input");
    }
    SummaryStat stat;
    stat.n = values.size();
    stat.min = values.front();
    stat.max = values.front();
    double sum = 0.0;
    for (const double v : values) {
        sum += v;
        stat.min = std::min(stat.min, v);
        stat.max = std::max(stat.max, v);
    }
    stat.mean = sum / static_cast<double>(stat.n);
    double ss = 0.0;
    for (const double v : values) {
        const double d = v - stat.mean;
        ss += d * d;
    }
    stat.sigma = std::sqrt(ss / static_cast<double>(stat.n));
    return stat;
}

namespace {

constexpr double kBetaTol = 1e-10;

// Lentz's continued fraction for the incomplete beta function.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 500;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kBetaTol) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(log_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return bt * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - bt * beta_continued_fraction(b, a, 1.0 - x) / b;
}

AnovaResult anova_oneway(const std::vector<double>& group_a, const std::vector<double>& group_b) {
    if (group_a.empty() || group_b.empty()) {
        throw EmptyInputError("anova_oneway: both groups must be nonempty");
    }
    const std::size_t na = group_a.size();
    const std::size_t nb = group_b.size();
    const std::size_t total = na + nb;
    if (total < 3) {
        throw EmptyInputError("anova_oneway: need at least 3 observations in total");
    }

    double sum_a = 0.0, sum_b = 0.0;
    for (const double v : group_a) sum_a += v;
    for (const double v : group_b) sum_b += v;
    const double mean_a = sum_a / static_cast<double>(na);
    const double mean_b = sum_b / static_cast<double>(nb);
    const double grand = (sum_a + sum_b) / static_cast<double>(total);

    const double ss_between = static_cast<double>(na) * (mean_a - grand) * (mean_a - grand) +
                              static_cast<double>(nb) * (mean_b - grand) * (mean_b - grand);
    double ss_within = 0.0;
    for (const double v : group_a) ss_within += (v - mean_a) * (v - mean_a);
    for (const double v : group_b) ss_within += (v - mean_b) * (v - mean_b);

    AnovaResult result;
    result.df_between = 1;
    result.df_within = static_cast<int>(total) - 2;
    const double ms_between = ss_between / result.df_between;
    const double ms_within = ss_within / result.df_within;

    if (ms_within == 0.0) {
        if (ms_between == 0.0) {
            result.f_statistic = 0.0;
            result.p_value = 1.0;
        } else {
            result.f_statistic = std::numeric_limits<double>::infinity();
            result.p_value = 0.0;
        }
        return result;
    }

    result.f_statistic = ms_between / ms_within;
    const double d1 = result.df_between;
    const double d2 = result.df_within;
    const double x = d2 / (d2 + d1 * result.f_statistic);
    result.p_value = regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, x);
    return result;
}

GradingDecision grade_case(int expert_count, int reference_count, int threshold) {
    GradingDecision decision;
    decision.mitotic_count = expert_count;
    decision.threshold = threshold;
    decision.decision =
        expert_count >= threshold ? GradeDecision::AtOrAbove : GradeDecision::Below;
    if (expert_count > reference_count) {
        decision.direction_vs_reference = GradeDirection::Over;
    } else if (expert_count < reference_count) {
        decision.direction_vs_reference = GradeDirection::Under;
    } else {
        decision.direction_vs_reference = GradeDirection::Equal;
    }
    return decision;
}

std::string to_string(GradeDecision decision) {
    return decision == GradeDecision::AtOrAbove ? "at_or_above" : "below";
}

std::string to_string(GradeDirection direction) {
    switch (direction) {
        case GradeDirection::Over: return "over";
        case GradeDirection::Under: return "under";
        case GradeDirection::Equal: return "equal";
    }
    return "equal";
}

SummaryStat timing_summary(const StudyDataset& dataset, ModeKind /*mode*/,
                           const std::string& annotator) {
    std::vector<double> seconds;
    for (const auto& image : dataset.images) {
        const auto it = image.durations.find(annotator);
        if (it != image.durations.end()) seconds.push_back(it->second);
    }
    if (seconds.empty()) {
        throw EmptyInputError("timing_summary: no recorded durations for '" + annotator + "'");
    }
    return summarize(seconds);
}

}  // namespace annostudy
