#pragma once

// Small statistical oracles shared by the unit tests.

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace testing {

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

inline double chi_square_critical(double dof, double level) {
    return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), level));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(std::span<const double> xs) {
    MeanSe r;
    const auto n = static_cast<double>(xs.size());
    for (double x : xs) r.mean += x;
    r.mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (n - 1.0) / n);
    return r;
}

}  // namespace testing

namespace testing {

struct TwoSampleW1 {
    double w1 = 0.0;
    /// Scale of sqrt(1/m1 + 1/m2) * int |B(F(x))| dx for a Brownian bridge B
    /// under the null, with F the pooled empirical CDF.
    double se = 0.0;
};

/// W_1 between two empirical laws via the CDF-difference integral.
inline TwoSampleW1 two_sample_w1(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto m1 = static_cast<double>(a.size());
    const auto m2 = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double x = std::min(a.front(), b.front());
    TwoSampleW1 r;
    double bridge = 0.0;
    while (i < a.size() || j < b.size()) {
        double next;
        if (j == b.size() || (i < a.size() && a[i] <= b[j])) next = a[i];
        else next = b[j];
        const double fa = static_cast<double>(i) / m1;
        const double fb = static_cast<double>(j) / m2;
        const double f = (static_cast<double>(i + j)) / (m1 + m2);
        r.w1 += std::abs(fa - fb) * (next - x);
        bridge += std::sqrt(f * (1.0 - f)) * (next - x);
        x = next;
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
    }
    r.se = std::sqrt(1.0 / m1 + 1.0 / m2) * bridge;
    return r;
}

}  // namespace testing
