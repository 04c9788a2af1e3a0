#include "sensefold/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sensefold {

double weighted_f1(std::span<const ActivityClass> truth, std::span<const ActivityClass> predicted) {
    if (truth.size() != predicted.size()) throw ConfigError("weighted_f1: label vectors differ in length");
    if (truth.empty()) throw ConfigError("weighted_f1: no labels");
    std::array<double, kNumActivities> tp{}, fp{}, fn{}, support{};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = index_of(truth[i]);
        const auto p = index_of(predicted[i]);
        support[t] += 1;
        if (t == p) {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn[t] += 1;
        }
    }
    double acc = 0;
    for (std::size_t c = 0; c < kNumActivities; ++c) {
        if (support[c] == 0) continue;
        const double denom = 2 * tp[c] + fp[c] + fn[c];
        const double f1 = denom > 0 ? 2 * tp[c] / denom : 0.0;
        acc += support[c] * f1;
    }
    return acc / static_cast<double>(truth.size());
}

double binary_auroc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0, n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (positive[order[k]]) {
                rank_sum += avg_rank;
                n_pos += 1;
            }
        i = j;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ConfigError("AUROC needs both positive and negative examples");
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double weighted_auroc(std::span<const ActivityClass> truth, std::span<const ClassDistribution> scores) {
    if (truth.size() != scores.size()) throw ConfigError("weighted_auroc: label and score vectors differ in length");
    std::array<std::size_t, kNumActivities> support{};
    for (auto t : truth) ++support[index_of(t)];
    const auto present = std::count_if(support.begin(), support.end(), [](std::size_t s) { return s > 0; });
    if (present < 2) throw ConfigError("weighted_auroc needs at least two classes in the ground truth");

    std::vector<double> s(truth.size());
    std::vector<std::uint8_t> pos(truth.size());
    double acc = 0;
    for (std::size_t c = 0; c < kNumActivities; ++c) {
        if (support[c] == 0) continue;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            s[i] = scores[i][c];
            pos[i] = index_of(truth[i]) == c ? 1 : 0;
        }
        acc += static_cast<double>(support[c]) * binary_auroc(s, pos);
    }
    return acc / static_cast<double>(truth.size());
}

AnovaResult anova_f(std::span<const double> values, std::span<const std::uint8_t> member) {
    if (values.size() != member.size()) throw ConfigError("anova_f: values and membership differ in length");
    double n1 = 0, n0 = 0, s1 = 0, s0 = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (member[i]) {
            n1 += 1;
            s1 += values[i];
        } else {
            n0 += 1;
            s0 += values[i];
        }
    }
    if (n1 == 0 || n0 == 0) throw ConfigError("anova_f: both groups must be non-empty");
    if (n1 + n0 < 3) throw ConfigError("anova_f: needs at least 3 observations");
    const double m1 = s1 / n1, m0 = s0 / n0, m = (s1 + s0) / (n1 + n0);
    double ssw = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - (member[i] ? m1 : m0);
        ssw += d * d;
    }
    const double ssb = n1 * (m1 - m) * (m1 - m) + n0 * (m0 - m) * (m0 - m);
    const double df2 = n1 + n0 - 2;
    AnovaResult r;
    if (ssw == 0) {
        if (ssb == 0) throw ConfigError("anova_f: zero variance with equal group means");
        r.f = std::numeric_limits<double>::infinity();
        r.p = 0;
        return r;
    }
    r.f = ssb / (ssw / df2);
    r.p = f_distribution_sf(r.f, 1.0, df2);
    return r;
}

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1) / (a + b + 2)) return front * beta_continued_fraction(a, b, x) / a;
    return 1 - front * beta_continued_fraction(b, a, 1 - x) / b;
}

double f_distribution_sf(double f, double d1, double d2) {
    if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
    if (f <= 0) return 1;
    if (std::isinf(f)) return 0;
    return regularized_incomplete_beta(d2 / 2, d1 / 2, d2 / (d2 + d1 * f));
}

}  // namespace sensefold
