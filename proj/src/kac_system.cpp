#include "kac/kac_system.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kac/format.hpp"

namespace kac {

namespace {
// Energy is refreshed from scratch at this event cadence.
constexpr std::uint64_t kEnergyRefreshEvents = 1'000'000;
}  // namespace

Parametrization parse_parametrization(std::string_view name) {
    if (name == "rotation") return Parametrization::rotation;
    if (name == "polar") return Parametrization::polar;
    throw std::invalid_argument("unknown parametrization '" + std::string(name) + "'");
}

std::string_view to_string(Parametrization p) noexcept {
    return p == Parametrization::rotation ? "rotation" : "polar";
}

SystemState::SystemState(std::vector<double> v, double t) : velocities(std::move(v)), time(t) {
    refresh_energy();
}

void SystemState::refresh_energy() noexcept { energy = mean_energy(velocities); }

double mean_energy(std::span<const double> v) noexcept {
    if (v.empty()) return 0.0;
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return sum / static_cast<double>(v.size());
}

std::pair<double, double> collide_rotation(double v, double v_star, double theta) noexcept {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {v * c - v_star * s, v_star * c + v * s};
}

std::pair<double, double> collide_polar(double v, double v_star, double theta) noexcept {
    const double r = std::hypot(v, v_star);
    return {r * std::cos(theta), r * std::sin(theta)};
}

void apply_event(SystemState& state, const CollisionEvent& e, Parametrization param) noexcept {
    double& vi = state.velocities[e.first];
    double& vj = state.velocities[e.second];
    const double before = vi * vi + vj * vj;
    std::pair<double, double> out;
    if (param == Parametrization::rotation) {
        out = collide_rotation(vi, vj, e.theta);
    } else {
        const double r = std::hypot(vi, vj);
        out = {r * participant_cosine(e, e.first), r * participant_cosine(e, e.second)};
    }
    vi = out.first;
    vj = out.second;
    ++state.events;
    if (state.events % kEnergyRefreshEvents == 0) {
        state.refresh_energy();
    } else {
        state.energy += (vi * vi + vj * vj - before) / static_cast<double>(state.size());
    }
}

std::size_t advance(SystemState& state, double horizon, Parametrization param, EventStream& events) {
    if (horizon < state.time) throw std::invalid_argument("advance: horizon precedes current time");
    if (events.n_particles() != state.size())
        throw std::invalid_argument("advance: event stream built for a different N");
    std::size_t count = 0;
    while (events.peek_time() <= horizon) {
        apply_event(state, events.pop(), param);
        ++count;
    }
    state.time = horizon;
    return count;
}

std::vector<double> sample_kac_sphere(std::size_t n, double mean_energy_target, RngStream& rng) {
    if (!(mean_energy_target > 0.0))
        throw std::invalid_argument("sample_kac_sphere: mean energy must be positive");
    if (n == 0) throw std::invalid_argument("sample_kac_sphere: n must be positive");
    if (n == 1) return {std::copysign(std::sqrt(mean_energy_target), rng.normal())};
    std::vector<double> x(n);
    double norm2 = 0.0;
    while (norm2 == 0.0) {
        norm2 = 0.0;
        for (double& xi : x) {
            xi = rng.normal();
            norm2 += xi * xi;
        }
    }
    const double scale = std::sqrt(static_cast<double>(n) * mean_energy_target / norm2);
    for (double& xi : x) xi *= scale;
    return x;
}

void write_snapshot(std::ostream& out, std::span<const double> velocities) {
    for (double v : velocities) out << format_double(v) << '\n';
}

std::vector<double> read_snapshot(std::istream& in) {
    std::vector<double> v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        v.push_back(parse_double(line));
    }
    return v;
}

}  // namespace kac
