#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "sensefold/core.hpp"

namespace sensefold {

/// Probability per activity class; classes unseen in training carry 0.
using ClassDistribution = std::array<double, kNumActivities>;

/// Per-class F1 averaged with weights proportional to true-class support.
double weighted_f1(std::span<const ActivityClass> truth, std::span<const ActivityClass> predicted);

/// One-vs-rest AUROC per class present in `truth` (rank statistic, ties count 1/2),
/// averaged with weights proportional to true-class support. Requires >= 2 classes in truth.
double weighted_auroc(std::span<const ActivityClass> truth, std::span<const ClassDistribution> scores);

/// Binary AUROC of `scores` for `positive` labels via average ranks.
double binary_auroc(std::span<const double> scores, std::span<const std::uint8_t> positive);

struct AnovaResult {
    std::string feature;
    double f = 0;
    double p = 1;
};

/// One-way ANOVA between members (nonzero) and the rest, df = (1, n - 2).
AnovaResult anova_f(std::span<const double> values, std::span<const std::uint8_t> member);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);
/// Upper tail P(F > f) for the F distribution with (d1, d2) degrees of freedom.
double f_distribution_sf(double f, double d1, double d2);

}  // namespace sensefold
