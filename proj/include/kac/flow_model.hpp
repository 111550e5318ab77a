#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "kac/kac_system.hpp"
#include "kac/rng.hpp"
#include "kac/transport.hpp"

namespace kac {

enum class FlowKind { stationary_gaussian, empirical_reference };

struct ReferenceFlowConfig {
    std::size_t n_ref = 100'000;
    /// Ascending, starting at 0.
    std::vector<double> snapshot_times;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    /// 0, spacing, 2 spacing, ... up to and including horizon.
    static std::vector<double> uniform_times(double horizon, double spacing = 0.25);
};

/// Queryable one-particle flow f_t.
///
/// The stationary Gaussian kind is exact for all t >= 0. The reference kind
/// holds sorted signed snapshots of a large polar Kac system; between
/// snapshots the quantile function is interpolated linearly at fixed u.
/// A built model is immutable and may be shared across threads.
class FlowModel {
public:
    FlowKind kind() const noexcept { return kind_; }
    double energy() const noexcept { return energy_; }
    bool symmetric() const noexcept { return symmetric_; }
    /// Largest supported query time (infinity for the Gaussian kind).
    double horizon() const noexcept;

    /// All queries throw std::out_of_range for t outside [0, horizon()].
    double quantile(double t, double u) const;
    double squared_quantile(double t, double u) const;
    /// Signed atom sitting at squared quantile u; only for reference flows.
    double signed_by_square(double t, double u) const;
    bool has_sign_source() const noexcept { return kind_ == FlowKind::empirical_reference; }
    double sample(double t, RngStream& rng) const;
    /// E|V|^p under f_t.
    double moment(double t, double p) const;

    /// Integrals of Q^j over [k/cells, (k+1)/cells], j = 0..max_power, for
    /// the quantile (or squared quantile) at time t. Row-major, exact for
    /// both flow kinds.
    std::vector<double> cell_moments(double t, std::size_t cells, int max_power, bool squared) const;

    QuantileFn quantile_fn(double t) const;
    QuantileFn squared_quantile_fn(double t) const;
    /// Empty for flows without a sign source.
    QuantileFn sign_source_fn(double t) const;

    std::span<const double> snapshot_times() const noexcept { return times_; }
    std::span<const double> snapshot(std::size_t k) const { return snapshots_.at(k); }
    std::size_t n_ref() const noexcept { return snapshots_.empty() ? 0 : snapshots_.front().size(); }

    friend FlowModel stationary_gaussian(double energy);
    friend FlowModel reference_flow_from_snapshots(std::vector<double> times,
                                                   std::vector<std::vector<double>> atoms);

private:
    FlowModel() = default;

    struct Bracket {
        std::size_t lo;
        double weight;  // of snapshot lo + 1
    };
    Bracket bracket(double t) const;

    FlowKind kind_ = FlowKind::stationary_gaussian;
    double energy_ = 0.0;
    bool symmetric_ = true;
    std::vector<double> times_;
    std::vector<std::vector<double>> snapshots_;  // sorted signed atoms
};

/// Exact stationary flow: f_t = N(0, energy) for all t.
/// Throws std::invalid_argument when energy <= 0.
FlowModel stationary_gaussian(double energy);

/// Builds a reference flow from sorted or unsorted snapshots (sorted here).
FlowModel reference_flow_from_snapshots(std::vector<double> times,
                                        std::vector<std::vector<double>> atoms);

/// Runs one polar-parametrisation Kac system of size n_ref started from
/// i.i.d. f0 draws and keeps sorted snapshots at config.snapshot_times.
FlowModel build_reference_flow(const std::function<double(RngStream&)>& f0_sampler,
                               const ReferenceFlowConfig& config);

/// k-th smallest |x| (k zero-based) of an ascending signed array, returned
/// with its sign.
double kth_smallest_by_square(std::span<const double> sorted, std::size_t k);

/// Snapshot persistence: per snapshot a header "t=<time> n=<n>" followed by
/// one signed atom per line. Round trips are bit-exact.
void save_flow(std::ostream& out, const FlowModel& flow);
FlowModel load_flow(std::istream& in);

}  // namespace kac
