#include "kac/event_stream.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kac {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

CollisionEvent sample_event(std::size_t n_particles, RngStream& rng) {
    if (n_particles < 2) throw std::invalid_argument("sample_event: need at least 2 particles");
    CollisionEvent e;
    e.dt = rng.exponential(0.5 * static_cast<double>(n_particles));
    e.first = rng.uniform_index(n_particles);
    e.second = rng.uniform_index(n_particles - 1);
    if (e.second >= e.first) ++e.second;
    e.theta = kTwoPi * rng.uniform();
    if (e.theta >= kTwoPi) e.theta = 0.0;
    e.first_offset = rng.uniform_open();
    e.second_offset = rng.uniform_open();
    return e;
}

std::optional<double> angle_for_particle(const CollisionEvent& event, std::size_t k) noexcept {
    if (k == event.first) return event.theta;
    if (k == event.second) {
        double a = event.theta - 0.5 * std::numbers::pi;
        if (a < 0.0) a += kTwoPi;
        if (a >= kTwoPi) a = 0.0;
        return a;
    }
    return std::nullopt;
}

double participant_cosine(const CollisionEvent& event, std::size_t k) noexcept {
    return k == event.first ? std::cos(event.theta) : std::sin(event.theta);
}

EventStream::EventStream(std::size_t n_particles, RngStream rng, double start_time)
    : n_(n_particles), rng_(rng) {
    next_ = sample_event(n_, rng_);
    next_time_ = start_time + next_.dt;
}

CollisionEvent EventStream::pop() {
    CollisionEvent out = next_;
    next_ = sample_event(n_, rng_);
    next_time_ += next_.dt;
    return out;
}

}  // namespace kac
