#pragma once

#include <cmath>
#include <span>

namespace kac {

/// Sample mean with its standard error.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

inline Estimate mean_se(std::span<const double> xs) {
    Estimate e;
    const auto n = static_cast<double>(xs.size());
    if (xs.empty()) return e;
    double sum = 0.0;
    for (double x : xs) sum += x;
    e.mean = sum / n;
    if (xs.size() < 2) return e;
    double ss = 0.0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.se = std::sqrt(ss / (n - 1.0) / n);
    return e;
}

/// Ratio a/b of two independent estimates with a delta-method standard error.
inline Estimate ratio(const Estimate& a, const Estimate& b) {
    const double r = a.mean / b.mean;
    const double rel = std::hypot(a.se / a.mean, b.se / b.mean);
    return {r, std::abs(r) * rel};
}

}  // namespace kac
