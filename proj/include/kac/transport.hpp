#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "kac/rng.hpp"

namespace kac {

/// Left-continuous generalised inverse CDF, u in (0, 1).
using QuantileFn = std::function<double(double)>;

/// Uniform measure on a finite list of atoms, with a cached ascending view.
/// Ties in the sorted view are ordered by original index.
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;
    explicit EmpiricalMeasure(std::vector<double> atoms);

    std::size_t size() const noexcept { return atoms_.size(); }
    bool empty() const noexcept { return atoms_.empty(); }
    std::span<const double> atoms() const noexcept { return atoms_; }
    std::span<const double> sorted() const noexcept { return sorted_; }
    /// order()[k] is the original index of the k-th smallest atom.
    std::span<const std::size_t> order() const noexcept { return order_; }

    double quantile(double u) const;
    QuantileFn quantile_fn() const;
    /// (1/k) sum |x|^p
    double abs_moment(double p) const noexcept;

private:
    std::vector<double> atoms_;
    std::vector<double> sorted_;
    std::vector<std::size_t> order_;
};

/// Quantile of sorted atoms: x_(ceil(k u)), clamped to the support.
double sorted_quantile(std::span<const double> sorted, double u) noexcept;

/// Normalised W_p^p between equal-size measures: (1/k) sum |x_(i) - y_(i)|^p.
/// Throws std::invalid_argument on size mismatch, k = 0 or p < 1.
double wasserstein_p(const EmpiricalMeasure& xs, const EmpiricalMeasure& ys, double p);

/// Same as wasserstein_p for inputs that are already ascending.
double wasserstein_sorted(std::span<const double> xs, std::span<const double> ys, double p);

/// Midpoint rule (1/m) sum_k |mu((k-1/2)/m) - nu((k-1/2)/m)|^p.
double wasserstein_quantile(const QuantileFn& mu, const QuantileFn& nu, double p, std::size_t m);

/// Exact W_p^p between the sorted sample x (size k) and a law described by
/// its partial moments over the k quantile cells: moments[i (p+1) + j] is
/// the integral of Q^j over [i/k, (i+1)/k]. p must be a positive even
/// integer. Negative rounding residue is clamped to 0.
double wasserstein_cells(std::span<const double> sorted, std::span<const double> moments, int p);

/// Unequal sizes: quantile route on a grid the size of the larger sample.
double wasserstein_unequal(const EmpiricalMeasure& xs, const EmpiricalMeasure& ys, double p);

/// Image of mu under v -> v^2.
EmpiricalMeasure squared_pushforward(const EmpiricalMeasure& mu);

/// Value of F^2 for the partner of squared rank `rank` (zero-based) among
/// `count` partners: flow_sq_quantile((rank + cell_offset) / count).
/// Throws std::domain_error if the quantile is negative or NaN.
double squared_map_value(std::size_t rank, std::size_t count, double cell_offset,
                         const QuantileFn& flow_sq_quantile);

struct SquaredCostMap {
    /// F for each partner, in the partners' original order.
    std::vector<double> values;
    /// (1/(N-1)) sum (x_k^2 - F_k^2)^2.
    double cost = 0.0;
};

/// Comonotone optimal map for the cost (x^2 - y^2)^2 between the partners
/// and the flow. Partners are ranked by their squares (stable ties); rank k
/// receives F^2 = flow_sq_quantile((k + cell_offset)/(N-1)). With the default
/// midpoint offset the cost equals the midpoint-rule W_2^2 between the
/// squared partners and the squared flow.
///
/// The sign of F comes from sign_source evaluated at the same u when
/// provided, otherwise it is a fair coin drawn from rng.
SquaredCostMap optimal_map_squared_cost(const EmpiricalMeasure& others,
                                        const QuantileFn& flow_sq_quantile,
                                        const QuantileFn& sign_source, RngStream& rng,
                                        double cell_offset = 0.5);

}  // namespace kac
