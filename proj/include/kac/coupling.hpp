#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "kac/event_stream.hpp"
#include "kac/flow_model.hpp"
#include "kac/kac_system.hpp"
#include "kac/rng.hpp"
#include "kac/stats.hpp"

namespace kac {

/// Values kept sorted by (square, index) so that the rank of a partner among
/// the leave-one-out squares is a binary search away. Updates shift only the
/// stretch between the old and new position.
class SquaredRanks {
public:
    SquaredRanks() = default;
    explicit SquaredRanks(std::span<const double> values);

    /// Zero-based rank of `partner` among all entries except `excluded`.
    std::size_t rank_excluding(std::size_t partner, std::size_t excluded) const;
    void update(std::size_t index, double value);
    double square(std::size_t index) const { return squares_[index]; }

private:
    using Key = std::pair<double, std::size_t>;
    std::size_t position(std::size_t index) const;

    std::vector<Key> sorted_;
    std::vector<double> squares_;
};

/// The N nonlinear processes U driven by the collision stream. Each jump of
/// U_k draws F^2 from the comonotone map between the leave-one-out squares
/// of U and f_t^(2), at the partner's squared rank and cell offset.
class NonlinearProcesses {
public:
    NonlinearProcesses(std::vector<double> u0, std::shared_ptr<const FlowModel> flow);

    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    const FlowModel& flow() const noexcept { return *flow_; }

    /// F^2 used by particle k when its partner sits at `partner + offset`,
    /// from the current (pre-jump) values and the flow at time t.
    double map_value_squared(std::size_t k, std::size_t partner, double offset, double t) const;

    struct JumpFactors {
        double first = 0.0;   // F^2 for event.first
        double second = 0.0;  // F^2 for event.second
    };
    /// F^2 for both participants, computed before anything moves.
    JumpFactors factors(const CollisionEvent& event, double t) const;
    /// U_k <- sqrt(U_k^2 + F^2) cos(angle_k) for both participants.
    JumpFactors apply(const CollisionEvent& event, double t);
    void set(std::size_t k, double value);

private:
    std::vector<double> values_;
    SquaredRanks ranks_;
    std::shared_ptr<const FlowModel> flow_;
};

/// Particle system V and nonlinear processes U sharing one collision stream.
struct CoupledState {
    SystemState v;
    NonlinearProcesses u;
    double time = 0.0;
    /// First jump time of each particle (infinity until it jumps).
    std::vector<double> first_jump;

    CoupledState(std::vector<double> v0, std::vector<double> u0, std::shared_ptr<const FlowModel> flow);
};

/// Applies one collision at absolute time t: V through the polar rule and
/// U through the optimal-map jumps, both with the participant's angle.
void step_coupled(CoupledState& state, const CollisionEvent& event, double t);

/// Per-replica observation of a coupled run.
struct CoupledObservation {
    double t = 0.0;
    double h = 0.0;           // (1/N) sum (V_i^2 - U_i^2)^2
    double cov_pair = 0.0;    // average over i != j of (U_i^2 - E)(U_j^2 - E)
    double energy_gap2 = 0.0; // (E_N - E)^2
    std::size_t jumped = 0;   // particles with tau_i <= t
    std::size_t agree = 0;    // of those, sign(V_i) == sign(U_i)
};

struct CoupledRecord {
    std::vector<CoupledObservation> observations;
    std::vector<double> first_jump_times;
};

/// Evolves one coupled replica up to the last observation time, recording
/// diagnostics at each time in `observe` (ascending, >= 0).
CoupledRecord run_coupled(std::vector<double> v0, std::vector<double> u0,
                          std::shared_ptr<const FlowModel> flow, std::span<const double> observe,
                          RngStream rng);

/// Observation grid 0, spacing, ..., horizon.
std::vector<double> observation_grid(double horizon, double spacing = 0.5);

/// Ensemble summary across replicas.
struct CouplingDiagnostics {
    std::vector<double> t;
    std::vector<double> h_mean;
    std::vector<double> h_se;
    std::vector<double> cov_u2;
    std::vector<double> cov_se;
    std::vector<double> sign_agreement;
    std::vector<double> b_n;
    std::vector<double> first_jump_times;
};

CouplingDiagnostics summarize(std::span<const CoupledRecord> records);

/// Columns: t, h_mean, h_se, cov_u2, cov_se, sign_agreement, b_n.
void write_csv(std::ostream& out, const CouplingDiagnostics& diag);

/// Nonlinear processes U plus n decoupled copies U~ built from the same
/// stream: U~_i skips the atoms where it is the second index and its partner
/// is among the first n, and receives compensating jumps from an independent
/// source at rate (n-1)/(2(N-1)) per tracked particle.
class DecoupledSystem {
public:
    DecoupledSystem(std::vector<double> u0, std::size_t n_tracked,
                    std::shared_ptr<const FlowModel> flow, RngStream aux_rng);

    std::size_t n_tracked() const noexcept { return n_; }
    const NonlinearProcesses& u() const noexcept { return u_; }
    std::span<const double> u_tilde() const noexcept { return u_tilde_; }
    double time() const noexcept { return time_; }

    /// Jumps of U_i (i < n) and the subset shared with U~_i.
    std::span<const std::uint64_t> u_jumps() const noexcept { return u_jumps_; }
    std::span<const std::uint64_t> shared_jumps() const noexcept { return shared_jumps_; }

    double compensation_rate() const noexcept { return aux_rate_; }
    double next_compensation_time() const noexcept { return next_aux_; }

    /// One atom of the main stream at absolute time t.
    void step(const CollisionEvent& event, double t);
    /// The pending compensation jump (draws the next one afterwards).
    void step_compensation();
    /// Interleaves main and compensation events up to horizon.
    void advance(double horizon, EventStream& events);

private:
    void schedule_compensation();

    std::size_t n_;
    NonlinearProcesses u_;
    std::vector<double> u_tilde_;
    RngStream aux_rng_;
    double aux_rate_ = 0.0;
    double next_aux_ = 0.0;
    double time_ = 0.0;
    std::vector<std::uint64_t> u_jumps_;
    std::vector<std::uint64_t> shared_jumps_;
};

/// Operation-level alias for DecoupledSystem::step.
void step_decoupled(DecoupledSystem& state, const CollisionEvent& event, double t);

/// cov(U_1^2, U_2^2) at time t across replicas, U_0 i.i.d. from the flow.
/// Each replica contributes the average of (U_i^2 - E)(U_j^2 - E) over all
/// pairs i != j. Throws std::invalid_argument when replicas < 100.
Estimate estimate_cov_u2(std::size_t n_particles, std::shared_ptr<const FlowModel> flow, double t,
                         std::size_t replicas, const RngStream& base);

struct DecouplingGap {
    Estimate gap;              // E (U_i^2 - U~_i^2)^2 averaged over i < n
    Estimate shared_fraction;  // shared jumps / jumps of U_i, i < n
    double expected_shared = 1.0;  // 1 - (n-1)/(2(N-1))
};

DecouplingGap estimate_decoupling_gap(std::size_t n, std::size_t n_particles,
                                      std::shared_ptr<const FlowModel> flow, double t,
                                      std::size_t replicas, const RngStream& base);

}  // namespace kac
