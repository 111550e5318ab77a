#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "kac/event_stream.hpp"
#include "kac/rng.hpp"

namespace kac {

enum class Parametrization { rotation, polar };

Parametrization parse_parametrization(std::string_view name);
std::string_view to_string(Parametrization p) noexcept;

/// Velocities of the particle system plus the cached mean energy
/// E_N = (1/N) sum v_i^2.
struct SystemState {
    std::vector<double> velocities;
    double time = 0.0;
    double energy = 0.0;
    std::uint64_t events = 0;

    SystemState() = default;
    explicit SystemState(std::vector<double> v, double t = 0.0);

    std::size_t size() const noexcept { return velocities.size(); }
    void refresh_energy() noexcept;
};

/// Mean of squares, computed from scratch.
double mean_energy(std::span<const double> v) noexcept;

/// Rotation of the pair by theta: (v cos - v* sin, v* cos + v sin).
std::pair<double, double> collide_rotation(double v, double v_star, double theta) noexcept;

/// Polar rule: sqrt(v^2 + v*^2) (cos theta, sin theta). (0, 0) maps to (0, 0).
std::pair<double, double> collide_polar(double v, double v_star, double theta) noexcept;

/// Applies one event to the state in place (no time bookkeeping).
void apply_event(SystemState& state, const CollisionEvent& event, Parametrization param) noexcept;

/// Consumes every pending event with time <= horizon and sets
/// state.time = horizon. Returns the number of events applied.
/// Throws std::invalid_argument if horizon < state.time or the stream and
/// state disagree on N.
std::size_t advance(SystemState& state, double horizon, Parametrization param, EventStream& events);

/// Uniform sample on {x in R^n : (1/n) sum x_i^2 = mean_energy}, obtained by
/// normalising a standard Gaussian vector.
std::vector<double> sample_kac_sphere(std::size_t n, double mean_energy, RngStream& rng);

/// Snapshot text format: one velocity per line, round-trip decimal.
void write_snapshot(std::ostream& out, std::span<const double> velocities);
std::vector<double> read_snapshot(std::istream& in);

}  // namespace kac
