#include "kac/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kac {

namespace {

inline double abs_pow(double d, double p) {
    const double a = std::abs(d);
    if (p == 2.0) return a * a;
    if (p == 1.0) return a;
    if (p == 4.0) {
        const double a2 = a * a;
        return a2 * a2;
    }
    return std::pow(a, p);
}

void check_order(double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("Wasserstein order must be >= 1");
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms) : atoms_(std::move(atoms)) {
    order_.resize(atoms_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [this](std::size_t a, std::size_t b) { return atoms_[a] < atoms_[b]; });
    sorted_.reserve(atoms_.size());
    for (std::size_t idx : order_) sorted_.push_back(atoms_[idx]);
}

double sorted_quantile(std::span<const double> sorted, double u) noexcept {
    const std::size_t n = sorted.size();
    const double pos = std::ceil(static_cast<double>(n) * u);
    if (pos <= 1.0) return sorted.front();
    if (pos >= static_cast<double>(n)) return sorted.back();
    return sorted[static_cast<std::size_t>(pos) - 1];
}

double EmpiricalMeasure::quantile(double u) const {
    if (empty()) throw std::logic_error("quantile of an empty measure");
    return sorted_quantile(sorted_, u);
}

QuantileFn EmpiricalMeasure::quantile_fn() const {
    if (empty()) throw std::logic_error("quantile of an empty measure");
    auto data = std::make_shared<const std::vector<double>>(sorted_);
    return [data](double u) { return sorted_quantile(*data, u); };
}

double EmpiricalMeasure::abs_moment(double p) const noexcept {
    if (empty()) return 0.0;
    double sum = 0.0;
    for (double x : atoms_) sum += abs_pow(x, p);
    return sum / static_cast<double>(size());
}

double wasserstein_sorted(std::span<const double> xs, std::span<const double> ys, double p) {
    check_order(p);
    if (xs.size() != ys.size()) throw std::invalid_argument("wasserstein: atom counts differ");
    if (xs.empty()) throw std::invalid_argument("wasserstein: empty measures");
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) sum += abs_pow(xs[i] - ys[i], p);
    return sum / static_cast<double>(xs.size());
}

double wasserstein_p(const EmpiricalMeasure& xs, const EmpiricalMeasure& ys, double p) {
    return wasserstein_sorted(xs.sorted(), ys.sorted(), p);
}

double wasserstein_quantile(const QuantileFn& mu, const QuantileFn& nu, double p, std::size_t m) {
    check_order(p);
    if (m == 0) throw std::invalid_argument("wasserstein_quantile: grid size must be positive");
    double sum = 0.0;
    const double dm = static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double u = (static_cast<double>(k) + 0.5) / dm;
        sum += abs_pow(mu(u) - nu(u), p);
    }
    return sum / dm;
}

double wasserstein_cells(std::span<const double> sorted, std::span<const double> moments, int p) {
    if (p < 2 || p % 2 != 0) throw std::invalid_argument("wasserstein_cells: p must be a positive even integer");
    const auto width = static_cast<std::size_t>(p) + 1;
    if (sorted.empty() || moments.size() != sorted.size() * width)
        throw std::invalid_argument("wasserstein_cells: moment table does not match the sample");
    std::vector<double> binom(width, 1.0);
    for (std::size_t j = 1; j < width; ++j)
        binom[j] = binom[j - 1] * static_cast<double>(width - j) / static_cast<double>(j);
    double total = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        // int (x - Q)^p = sum_j C(p,j) (-1)^j x^(p-j) int Q^j
        const double x = sorted[i];
        double cell = 0.0;
        double xp = 1.0;
        for (std::size_t j = width; j-- > 0;) {
            const double sign = j % 2 ? -1.0 : 1.0;
            cell += sign * binom[j] * xp * moments[i * width + j];
            xp *= x;
        }
        total += cell;
    }
    return std::max(0.0, total);
}

double wasserstein_unequal(const EmpiricalMeasure& xs, const EmpiricalMeasure& ys, double p) {
    if (xs.empty() || ys.empty()) throw std::invalid_argument("wasserstein: empty measures");
    if (xs.size() == ys.size()) return wasserstein_p(xs, ys, p);
    return wasserstein_quantile(xs.quantile_fn(), ys.quantile_fn(), p,
                                std::max(xs.size(), ys.size()));
}

EmpiricalMeasure squared_pushforward(const EmpiricalMeasure& mu) {
    std::vector<double> sq;
    sq.reserve(mu.size());
    for (double x : mu.atoms()) sq.push_back(x * x);
    return EmpiricalMeasure(std::move(sq));
}

double squared_map_value(std::size_t rank, std::size_t count, double cell_offset,
                         const QuantileFn& flow_sq_quantile) {
    const double u = (static_cast<double>(rank) + cell_offset) / static_cast<double>(count);
    const double v = flow_sq_quantile(u);
    if (!(v >= 0.0))
        throw std::domain_error("contract violation: squared flow quantile is negative");
    return v;
}

SquaredCostMap optimal_map_squared_cost(const EmpiricalMeasure& others,
                                        const QuantileFn& flow_sq_quantile,
                                        const QuantileFn& sign_source, RngStream& rng,
                                        double cell_offset) {
    const std::size_t count = others.size();
    if (count == 0) throw std::invalid_argument("optimal_map_squared_cost: no partners");
    const EmpiricalMeasure squares = squared_pushforward(others);
    SquaredCostMap out;
    out.values.resize(count);
    double cost = 0.0;
    for (std::size_t rank = 0; rank < count; ++rank) {
        const std::size_t partner = squares.order()[rank];
        const double f2 = squared_map_value(rank, count, cell_offset, flow_sq_quantile);
        double sign = 1.0;
        if (sign_source) {
            const double u = (static_cast<double>(rank) + cell_offset) / static_cast<double>(count);
            sign = std::signbit(sign_source(u)) ? -1.0 : 1.0;
        } else {
            sign = rng.uniform_index(2) == 0 ? 1.0 : -1.0;
        }
        out.values[partner] = sign * std::sqrt(f2);
        const double d = squares.sorted()[rank] - f2;
        cost += d * d;
    }
    out.cost = cost / static_cast<double>(count);
    return out;
}

}  // namespace kac
