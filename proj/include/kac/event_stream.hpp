#pragma once

#include <cstddef>
#include <optional>

#include "kac/rng.hpp"

namespace kac {

/// One atom of the collision Poisson measure.
///
/// Particle indices are zero-based. `first` is the particle whose angle is
/// theta and `second` the one whose angle is theta - pi/2. The offsets are
/// the fractional parts of the continuous partner coordinates: the partner
/// of `first` sits at `second + second_offset` and vice versa. They select a
/// point inside the partner's quantile cell when the nonlinear processes
/// draw from the optimal map.
struct CollisionEvent {
    double dt = 0.0;
    std::size_t first = 0;
    std::size_t second = 1;
    double theta = 0.0;
    double first_offset = 0.5;
    double second_offset = 0.5;

    bool operator==(const CollisionEvent&) const = default;
};

/// Draws one event for an N-particle system: dt ~ Exp(N/2), (first, second)
/// uniform over the N(N-1) ordered pairs and theta uniform on [0, 2pi).
/// Throws std::invalid_argument when n_particles < 2.
CollisionEvent sample_event(std::size_t n_particles, RngStream& rng);

/// Angle carried by particle k's own point measure: theta for the first
/// index, theta - pi/2 (mod 2pi) for the second, nothing otherwise.
std::optional<double> angle_for_particle(const CollisionEvent& event, std::size_t k) noexcept;

/// cos of the participant's angle, computed as cos(theta) or sin(theta)
/// directly so that every system driven by the same event sees bit-identical
/// factors. Precondition: k is first or second.
double participant_cosine(const CollisionEvent& event, std::size_t k) noexcept;

/// Time-ordered event source for one replica. Keeps the pending event so
/// that advancing in several steps replays exactly the same path as one
/// long advance.
class EventStream {
public:
    EventStream(std::size_t n_particles, RngStream rng, double start_time = 0.0);

    std::size_t n_particles() const noexcept { return n_; }

    /// Absolute time of the next event.
    double peek_time() const noexcept { return next_time_; }
    const CollisionEvent& peek() const noexcept { return next_; }

    /// Returns the pending event and draws the one after it.
    CollisionEvent pop();

private:
    std::size_t n_;
    RngStream rng_;
    CollisionEvent next_;
    double next_time_;
};

}  // namespace kac
