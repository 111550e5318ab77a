#include "kac/flow_model.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kac/distributions.hpp"
#include "kac/format.hpp"

namespace kac {

std::vector<double> ReferenceFlowConfig::uniform_times(double horizon, double spacing) {
    if (!(spacing > 0.0)) throw std::invalid_argument("snapshot spacing must be positive");
    std::vector<double> times;
    const auto steps = static_cast<std::size_t>(std::ceil(horizon / spacing - 1e-9));
    for (std::size_t k = 0; k <= steps; ++k) times.push_back(std::min(horizon, k * spacing));
    return times;
}

double FlowModel::horizon() const noexcept {
    if (kind_ == FlowKind::stationary_gaussian) return std::numeric_limits<double>::infinity();
    return times_.back();
}

FlowModel::Bracket FlowModel::bracket(double t) const {
    if (!(t >= 0.0) || t > horizon())
        throw std::out_of_range("flow queried at t=" + format_double(t) + " outside [0, " +
                                format_double(horizon()) + "]");
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t lo = static_cast<std::size_t>(it - times_.begin()) - 1;
    if (lo + 1 >= times_.size()) return {lo, 0.0};
    return {lo, (t - times_[lo]) / (times_[lo + 1] - times_[lo])};
}

double kth_smallest_by_square(std::span<const double> sorted, std::size_t k) {
    const std::size_t n = sorted.size();
    if (k >= n) throw std::out_of_range("kth_smallest_by_square: rank out of range");
    // Negatives, read backwards, and non-negatives are both ascending in |x|.
    const std::size_t n_neg =
        static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), 0.0) - sorted.begin());
    const std::size_t n_pos = n - n_neg;
    auto neg_abs = [&](std::size_t i) { return -sorted[n_neg - 1 - i]; };
    auto pos_abs = [&](std::size_t j) { return sorted[n_neg + j]; };

    // Take `a` items from the negatives and k + 1 - a from the non-negatives.
    const std::size_t want = k + 1;
    std::size_t lo = want > n_pos ? want - n_pos : 0;
    std::size_t hi = std::min(want, n_neg);
    while (true) {
        const std::size_t a = lo + (hi - lo) / 2;
        const std::size_t b = want - a;
        if (a < n_neg && b > 0 && pos_abs(b - 1) > neg_abs(a)) {
            lo = a + 1;
        } else if (a > 0 && b < n_pos && neg_abs(a - 1) > pos_abs(b)) {
            hi = a - 1;
        } else {
            if (a == 0) return pos_abs(b - 1);
            if (b == 0) return -neg_abs(a - 1);
            return neg_abs(a - 1) > pos_abs(b - 1) ? -neg_abs(a - 1) : pos_abs(b - 1);
        }
    }
}

namespace {

std::size_t rank_for(std::size_t n, double u) {
    const double pos = std::ceil(static_cast<double>(n) * u);
    if (pos <= 1.0) return 0;
    if (pos >= static_cast<double>(n)) return n - 1;
    return static_cast<std::size_t>(pos) - 1;
}

double squared_at(std::span<const double> sorted, double u) {
    const double x = kth_smallest_by_square(sorted, rank_for(sorted.size(), u));
    return x * x;
}

}  // namespace

double FlowModel::quantile(double t, double u) const {
    const Bracket b = bracket(t);
    if (kind_ == FlowKind::stationary_gaussian) return std::sqrt(energy_) * normal_quantile(u);
    const double lo = sorted_quantile(snapshots_[b.lo], u);
    if (b.weight == 0.0) return lo;
    return (1.0 - b.weight) * lo + b.weight * sorted_quantile(snapshots_[b.lo + 1], u);
}

double FlowModel::squared_quantile(double t, double u) const {
    const Bracket b = bracket(t);
    if (kind_ == FlowKind::stationary_gaussian) return energy_ * chi_square1_quantile(u);
    const double lo = squared_at(snapshots_[b.lo], u);
    if (b.weight == 0.0) return lo;
    return (1.0 - b.weight) * lo + b.weight * squared_at(snapshots_[b.lo + 1], u);
}

double FlowModel::signed_by_square(double t, double u) const {
    if (!has_sign_source()) throw std::logic_error("flow has no sign source");
    const Bracket b = bracket(t);
    const std::size_t k = b.weight <= 0.5 ? b.lo : b.lo + 1;
    const auto& snap = snapshots_[k];
    return kth_smallest_by_square(snap, rank_for(snap.size(), u));
}

double FlowModel::sample(double t, RngStream& rng) const {
    if (kind_ == FlowKind::stationary_gaussian) {
        bracket(t);
        return std::sqrt(energy_) * rng.normal();
    }
    return quantile(t, rng.uniform_open());
}

double FlowModel::moment(double t, double p) const {
    const Bracket b = bracket(t);
    if (kind_ == FlowKind::stationary_gaussian) {
        if (p == 2.0) return energy_;
        if (p == 4.0) return 3.0 * energy_ * energy_;
        return std::pow(2.0 * energy_, 0.5 * p) * boost::math::tgamma(0.5 * (p + 1.0)) /
               std::sqrt(std::numbers::pi);
    }
    const auto& lo = snapshots_[b.lo];
    double sum = 0.0;
    if (b.weight == 0.0) {
        for (double x : lo) sum += std::pow(std::abs(x), p);
    } else {
        const auto& hi = snapshots_[b.lo + 1];
        for (std::size_t k = 0; k < lo.size(); ++k)
            sum += std::pow(std::abs((1.0 - b.weight) * lo[k] + b.weight * hi[k]), p);
    }
    return sum / static_cast<double>(lo.size());
}

std::vector<double> FlowModel::cell_moments(double t, std::size_t cells, int max_power, bool squared) const {
    const Bracket b = bracket(t);
    if (kind_ == FlowKind::stationary_gaussian) return gaussian_cell_moments(std::sqrt(energy_), cells, max_power, squared);
    if (cells == 0 || max_power < 0) throw std::invalid_argument("cell_moments: bad arguments");
    auto values = [&](std::size_t k) {
        std::vector<double> v(snapshots_[k].begin(), snapshots_[k].end());
        if (squared) {
            for (double& x : v) x *= x;
            std::sort(v.begin(), v.end());
        }
        return v;
    };
    // The quantile is a step function on the n_ref grid; interpolation in
    // time keeps it one.
    std::vector<double> step = values(b.lo);
    if (b.weight != 0.0) {
        const auto hi = values(b.lo + 1);
        for (std::size_t m = 0; m < step.size(); ++m) step[m] = (1.0 - b.weight) * step[m] + b.weight * hi[m];
    }
    const std::size_t n_ref = step.size();
    const auto width = static_cast<std::size_t>(max_power) + 1;
    const double unit = 1.0 / (static_cast<double>(cells) * static_cast<double>(n_ref));
    std::vector<double> out(cells * width, 0.0);
    // Cell k is [k n_ref, (k+1) n_ref) and step m is [m cells, (m+1) cells) in units of unit.
    std::size_t m = 0;
    for (std::size_t k = 0; k < cells; ++k) {
        const std::uint64_t c_lo = static_cast<std::uint64_t>(k) * n_ref;
        const std::uint64_t c_hi = c_lo + n_ref;
        while (m < n_ref) {
            const std::uint64_t s_lo = static_cast<std::uint64_t>(m) * cells;
            const std::uint64_t s_hi = s_lo + cells;
            const std::uint64_t overlap = std::min(c_hi, s_hi) - std::max(c_lo, s_lo);
            const double w = static_cast<double>(overlap) * unit;
            double pw = 1.0;
            for (std::size_t j = 0; j < width; ++j, pw *= step[m]) out[k * width + j] += w * pw;
            if (s_hi > c_hi) break;
            ++m;
            if (s_hi == c_hi) break;
        }
    }
    return out;
}

QuantileFn FlowModel::quantile_fn(double t) const {
    bracket(t);
    return [this, t](double u) { return quantile(t, u); };
}

QuantileFn FlowModel::squared_quantile_fn(double t) const {
    bracket(t);
    return [this, t](double u) { return squared_quantile(t, u); };
}

QuantileFn FlowModel::sign_source_fn(double t) const {
    if (!has_sign_source()) return {};
    bracket(t);
    return [this, t](double u) { return signed_by_square(t, u); };
}

FlowModel stationary_gaussian(double energy) {
    if (!(energy > 0.0)) throw std::invalid_argument("stationary_gaussian: energy must be positive");
    FlowModel f;
    f.kind_ = FlowKind::stationary_gaussian;
    f.energy_ = energy;
    f.symmetric_ = true;
    return f;
}

FlowModel reference_flow_from_snapshots(std::vector<double> times,
                                        std::vector<std::vector<double>> atoms) {
    if (times.empty() || times.size() != atoms.size())
        throw std::invalid_argument("reference flow: need one snapshot per time");
    if (times.front() != 0.0) throw std::invalid_argument("reference flow: snapshots must start at t=0");
    if (!std::is_sorted(times.begin(), times.end()) ||
        std::adjacent_find(times.begin(), times.end()) != times.end())
        throw std::invalid_argument("reference flow: snapshot times must be strictly ascending");
    const std::size_t n = atoms.front().size();
    if (n == 0) throw std::invalid_argument("reference flow: empty snapshot");
    for (auto& snap : atoms) {
        if (snap.size() != n) throw std::invalid_argument("reference flow: snapshot sizes differ");
        std::sort(snap.begin(), snap.end());
    }
    FlowModel f;
    f.kind_ = FlowKind::empirical_reference;
    f.energy_ = mean_energy(atoms.front());
    // Symmetry is not asserted for sampled flows; they carry their own signs.
    f.symmetric_ = false;
    f.times_ = std::move(times);
    f.snapshots_ = std::move(atoms);
    return f;
}

FlowModel build_reference_flow(const std::function<double(RngStream&)>& f0_sampler,
                               const ReferenceFlowConfig& config) {
    if (config.n_ref < 1000) throw std::invalid_argument("reference flow: n_ref must be >= 1000");
    if (config.snapshot_times.empty() || config.snapshot_times.front() != 0.0)
        throw std::invalid_argument("reference flow: snapshot times must start at 0");
    RngStream init_rng(config.seed, derive_stream_id(config.stream_id, 0));
    std::vector<double> v(config.n_ref);
    for (double& x : v) x = f0_sampler(init_rng);
    SystemState state(std::move(v));
    EventStream events(config.n_ref, RngStream(config.seed, derive_stream_id(config.stream_id, 1)));
    std::vector<std::vector<double>> snaps;
    snaps.reserve(config.snapshot_times.size());
    for (double t : config.snapshot_times) {
        advance(state, t, Parametrization::polar, events);
        snaps.push_back(state.velocities);
    }
    return reference_flow_from_snapshots(config.snapshot_times, std::move(snaps));
}

void save_flow(std::ostream& out, const FlowModel& flow) {
    if (flow.kind() != FlowKind::empirical_reference)
        throw std::invalid_argument("save_flow: only reference flows have snapshots");
    for (std::size_t k = 0; k < flow.snapshot_times().size(); ++k) {
        const auto snap = flow.snapshot(k);
        out << "t=" << format_double(flow.snapshot_times()[k]) << " n=" << snap.size() << '\n';
        for (double x : snap) out << format_double(x) << '\n';
    }
}

FlowModel load_flow(std::istream& in) {
    std::vector<double> times;
    std::vector<std::vector<double>> snaps;
    std::string line;
    std::size_t remaining = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (remaining == 0) {
            if (line.rfind("t=", 0) != 0) throw std::runtime_error("load_flow: expected header, got '" + line + "'");
            const auto space = line.find(" n=");
            if (space == std::string::npos) throw std::runtime_error("load_flow: malformed header '" + line + "'");
            times.push_back(parse_double(std::string_view(line).substr(2, space - 2)));
            remaining = static_cast<std::size_t>(std::stoull(line.substr(space + 3)));
            snaps.emplace_back();
            snaps.back().reserve(remaining);
            if (remaining == 0) throw std::runtime_error("load_flow: empty snapshot");
        } else {
            snaps.back().push_back(parse_double(line));
            --remaining;
        }
    }
    if (remaining != 0) throw std::runtime_error("load_flow: truncated snapshot");
    return reference_flow_from_snapshots(std::move(times), std::move(snaps));
}

}  // namespace kac
