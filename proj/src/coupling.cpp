#include "kac/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "kac/format.hpp"
#include "kac/parallel.hpp"

namespace kac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream tags keep the sub-streams of one replica apart.
enum StreamTag : std::uint64_t {
    kTagCoupledEvents = 0xC0,
    kTagCovInit = 0xC1,
    kTagCovEvents = 0xC2,
    kTagGapInit = 0xD1,
    kTagGapEvents = 0xD2,
    kTagGapAux = 0xD3,
};

}  // namespace

// ---------------------------------------------------------------------------
// SquaredRanks

SquaredRanks::SquaredRanks(std::span<const double> values) {
    squares_.reserve(values.size());
    sorted_.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        squares_.push_back(values[i] * values[i]);
        sorted_.emplace_back(squares_.back(), i);
    }
    std::sort(sorted_.begin(), sorted_.end());
}

std::size_t SquaredRanks::position(std::size_t index) const {
    const Key key{squares_[index], index};
    return static_cast<std::size_t>(std::lower_bound(sorted_.begin(), sorted_.end(), key) - sorted_.begin());
}

std::size_t SquaredRanks::rank_excluding(std::size_t partner, std::size_t excluded) const {
    const std::size_t pos = position(partner);
    const Key p{squares_[partner], partner};
    const Key e{squares_[excluded], excluded};
    return e < p ? pos - 1 : pos;
}

void SquaredRanks::update(std::size_t index, double value) {
    const std::size_t old_pos = position(index);
    const Key key{value * value, index};
    const auto begin = sorted_.begin();
    if (key < sorted_[old_pos]) {
        const auto dest = std::lower_bound(begin, begin + static_cast<std::ptrdiff_t>(old_pos), key);
        std::rotate(dest, begin + static_cast<std::ptrdiff_t>(old_pos),
                    begin + static_cast<std::ptrdiff_t>(old_pos) + 1);
        *dest = key;
    } else {
        const auto dest = std::lower_bound(begin + static_cast<std::ptrdiff_t>(old_pos) + 1, sorted_.end(), key);
        std::rotate(begin + static_cast<std::ptrdiff_t>(old_pos), begin + static_cast<std::ptrdiff_t>(old_pos) + 1,
                    dest);
        *(dest - 1) = key;
    }
    squares_[index] = key.first;
}

// ---------------------------------------------------------------------------
// NonlinearProcesses

NonlinearProcesses::NonlinearProcesses(std::vector<double> u0, std::shared_ptr<const FlowModel> flow)
    : values_(std::move(u0)), ranks_(values_), flow_(std::move(flow)) {
    if (!flow_) throw std::invalid_argument("NonlinearProcesses: flow is required");
    if (values_.size() < 2) throw std::invalid_argument("NonlinearProcesses: need at least 2 processes");
}

double NonlinearProcesses::map_value_squared(std::size_t k, std::size_t partner, double offset,
                                             double t) const {
    const std::size_t count = values_.size() - 1;
    const std::size_t rank = ranks_.rank_excluding(partner, k);
    const double u = (static_cast<double>(rank) + offset) / static_cast<double>(count);
    const double f2 = flow_->squared_quantile(t, u);
    if (!(f2 >= 0.0)) throw std::domain_error("contract violation: squared flow quantile is negative");
    return f2;
}

NonlinearProcesses::JumpFactors NonlinearProcesses::factors(const CollisionEvent& e, double t) const {
    return {map_value_squared(e.first, e.second, e.second_offset, t),
            map_value_squared(e.second, e.first, e.first_offset, t)};
}

NonlinearProcesses::JumpFactors NonlinearProcesses::apply(const CollisionEvent& e, double t) {
    const JumpFactors f = factors(e, t);
    const double ui = values_[e.first];
    const double uj = values_[e.second];
    set(e.first, std::sqrt(ui * ui + f.first) * participant_cosine(e, e.first));
    set(e.second, std::sqrt(uj * uj + f.second) * participant_cosine(e, e.second));
    return f;
}

void NonlinearProcesses::set(std::size_t k, double value) {
    values_[k] = value;
    ranks_.update(k, value);
}

// ---------------------------------------------------------------------------
// Coupled V / U

CoupledState::CoupledState(std::vector<double> v0, std::vector<double> u0,
                           std::shared_ptr<const FlowModel> flow)
    : v(std::move(v0)), u(std::move(u0), std::move(flow)), first_jump(v.size(), kInf) {
    if (v.size() != u.size()) throw std::invalid_argument("CoupledState: V and U sizes differ");
}

void step_coupled(CoupledState& state, const CollisionEvent& event, double t) {
    state.u.apply(event, t);
    apply_event(state.v, event, Parametrization::polar);
    for (std::size_t k : {event.first, event.second})
        if (state.first_jump[k] == kInf) state.first_jump[k] = t;
    state.time = t;
    state.v.time = t;
}

std::vector<double> observation_grid(double horizon, double spacing) {
    return ReferenceFlowConfig::uniform_times(horizon, spacing);
}

namespace {

CoupledObservation observe_state(const CoupledState& s, double t, double energy) {
    CoupledObservation o;
    o.t = t;
    const std::size_t n = s.v.size();
    const auto v = std::span<const double>(s.v.velocities);
    const auto u = s.u.values();
    double h = 0.0, sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = v[i] * v[i] - u[i] * u[i];
        h += d * d;
        const double c = u[i] * u[i] - energy;
        sum += c;
        sum_sq += c * c;
        if (s.first_jump[i] <= t) {
            ++o.jumped;
            if (std::signbit(v[i]) == std::signbit(u[i])) ++o.agree;
        }
    }
    const auto dn = static_cast<double>(n);
    o.h = h / dn;
    o.cov_pair = (sum * sum - sum_sq) / (dn * (dn - 1.0));
    const double gap = mean_energy(v) - energy;
    o.energy_gap2 = gap * gap;
    return o;
}

}  // namespace

CoupledRecord run_coupled(std::vector<double> v0, std::vector<double> u0,
                          std::shared_ptr<const FlowModel> flow, std::span<const double> observe,
                          RngStream rng) {
    if (observe.empty()) throw std::invalid_argument("run_coupled: empty observation grid");
    if (!std::is_sorted(observe.begin(), observe.end()) || observe.front() < 0.0)
        throw std::invalid_argument("run_coupled: observation times must be ascending and >= 0");
    if (observe.back() > flow->horizon())
        throw std::out_of_range("run_coupled: flow does not cover the observation horizon");
    const double energy = flow->energy();
    CoupledState state(std::move(v0), std::move(u0), std::move(flow));
    EventStream events(state.v.size(), rng);
    CoupledRecord record;
    record.observations.reserve(observe.size());
    for (double t_obs : observe) {
        while (events.peek_time() <= t_obs) {
            const double t = events.peek_time();
            step_coupled(state, events.pop(), t);
        }
        state.time = t_obs;
        state.v.time = t_obs;
        record.observations.push_back(observe_state(state, t_obs, energy));
    }
    for (double tau : state.first_jump)
        if (tau != kInf) record.first_jump_times.push_back(tau);
    return record;
}

CouplingDiagnostics summarize(std::span<const CoupledRecord> records) {
    CouplingDiagnostics d;
    if (records.empty()) return d;
    const std::size_t n_obs = records.front().observations.size();
    std::vector<double> h(records.size()), cov(records.size());
    for (std::size_t k = 0; k < n_obs; ++k) {
        std::size_t jumped = 0, agree = 0;
        double b = 0.0;
        for (std::size_t r = 0; r < records.size(); ++r) {
            const auto& o = records[r].observations.at(k);
            h[r] = o.h;
            cov[r] = o.cov_pair;
            jumped += o.jumped;
            agree += o.agree;
            b += o.energy_gap2;
        }
        const Estimate he = mean_se(h);
        const Estimate ce = mean_se(cov);
        d.t.push_back(records.front().observations[k].t);
        d.h_mean.push_back(he.mean);
        d.h_se.push_back(he.se);
        d.cov_u2.push_back(ce.mean);
        d.cov_se.push_back(ce.se);
        d.sign_agreement.push_back(jumped == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(jumped));
        d.b_n.push_back(b / static_cast<double>(records.size()));
    }
    for (const auto& r : records)
        d.first_jump_times.insert(d.first_jump_times.end(), r.first_jump_times.begin(), r.first_jump_times.end());
    return d;
}

void write_csv(std::ostream& out, const CouplingDiagnostics& d) {
    out << "t,h_mean,h_se,cov_u2,cov_se,sign_agreement,b_n\n";
    for (std::size_t k = 0; k < d.t.size(); ++k) {
        out << format_double(d.t[k]) << ',' << format_double(d.h_mean[k]) << ',' << format_double(d.h_se[k])
            << ',' << format_double(d.cov_u2[k]) << ',' << format_double(d.cov_se[k]) << ','
            << format_double(d.sign_agreement[k]) << ',' << format_double(d.b_n[k]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Decoupled U~

DecoupledSystem::DecoupledSystem(std::vector<double> u0, std::size_t n_tracked,
                                 std::shared_ptr<const FlowModel> flow, RngStream aux_rng)
    : n_(n_tracked),
      u_(u0, std::move(flow)),
      u_tilde_(u0.begin(), u0.begin() + static_cast<std::ptrdiff_t>(std::min(n_tracked, u0.size()))),
      aux_rng_(aux_rng),
      u_jumps_(n_tracked, 0),
      shared_jumps_(n_tracked, 0) {
    if (n_ == 0 || n_ > u_.size()) throw std::invalid_argument("DecoupledSystem: need 1 <= n <= N");
    const auto dn = static_cast<double>(n_);
    aux_rate_ = dn * (dn - 1.0) / (2.0 * static_cast<double>(u_.size() - 1));
    next_aux_ = 0.0;
    schedule_compensation();
}

void DecoupledSystem::schedule_compensation() {
    next_aux_ = aux_rate_ > 0.0 ? next_aux_ + aux_rng_.exponential(aux_rate_) : kInf;
}

void DecoupledSystem::step(const CollisionEvent& e, double t) {
    const auto f = u_.factors(e, t);
    if (e.first < n_) {
        double& x = u_tilde_[e.first];
        x = std::sqrt(x * x + f.first) * participant_cosine(e, e.first);
        ++u_jumps_[e.first];
        ++shared_jumps_[e.first];
    }
    if (e.second < n_) {
        ++u_jumps_[e.second];
        // Atoms whose first index is also tracked are withheld from U~.
        if (e.first >= n_) {
            double& x = u_tilde_[e.second];
            x = std::sqrt(x * x + f.second) * participant_cosine(e, e.second);
            ++shared_jumps_[e.second];
        }
    }
    const double ui = u_.values()[e.first];
    const double uj = u_.values()[e.second];
    u_.set(e.first, std::sqrt(ui * ui + f.first) * participant_cosine(e, e.first));
    u_.set(e.second, std::sqrt(uj * uj + f.second) * participant_cosine(e, e.second));
    time_ = t;
}

void DecoupledSystem::step_compensation() {
    const double t = next_aux_;
    const std::size_t k = aux_rng_.uniform_index(n_);
    std::size_t partner = aux_rng_.uniform_index(n_ - 1);
    if (partner >= k) ++partner;
    const double offset = aux_rng_.uniform_open();
    const double theta = 2.0 * std::numbers::pi * aux_rng_.uniform();
    const double f2 = u_.map_value_squared(k, partner, offset, t);
    double& x = u_tilde_[k];
    x = std::sqrt(x * x + f2) * std::cos(theta);
    time_ = t;
    schedule_compensation();
}

void DecoupledSystem::advance(double horizon, EventStream& events) {
    if (horizon < time_) throw std::invalid_argument("DecoupledSystem::advance: horizon precedes current time");
    while (true) {
        const double t_main = events.peek_time();
        const double t_aux = next_aux_;
        if (std::min(t_main, t_aux) > horizon) break;
        if (t_aux < t_main) {
            step_compensation();
        } else {
            step(events.pop(), t_main);
        }
    }
    time_ = horizon;
}

void step_decoupled(DecoupledSystem& state, const CollisionEvent& event, double t) { state.step(event, t); }

// ---------------------------------------------------------------------------
// Ensemble estimators

Estimate estimate_cov_u2(std::size_t n_particles, std::shared_ptr<const FlowModel> flow, double t,
                         std::size_t replicas, const RngStream& base) {
    if (replicas < 100) throw std::invalid_argument("estimate_cov_u2: need at least 100 replicas");
    if (n_particles < 2) throw std::invalid_argument("estimate_cov_u2: need at least 2 particles");
    const double energy = flow->energy();
    std::vector<double> per_replica(replicas);
    parallel_for(replicas, [&](std::size_t r) {
        RngStream init(base.seed(), derive_stream_id(base.stream_id(), kTagCovInit, r));
        std::vector<double> u0(n_particles);
        for (double& x : u0) x = flow->sample(0.0, init);
        NonlinearProcesses u(std::move(u0), flow);
        EventStream events(n_particles, RngStream(base.seed(), derive_stream_id(base.stream_id(), kTagCovEvents, r)));
        while (events.peek_time() <= t) {
            const double te = events.peek_time();
            u.apply(events.pop(), te);
        }
        double sum = 0.0, sum_sq = 0.0;
        for (double x : u.values()) {
            const double c = x * x - energy;
            sum += c;
            sum_sq += c * c;
        }
        const auto dn = static_cast<double>(n_particles);
        per_replica[r] = (sum * sum - sum_sq) / (dn * (dn - 1.0));
    });
    return mean_se(per_replica);
}

DecouplingGap estimate_decoupling_gap(std::size_t n, std::size_t n_particles,
                                      std::shared_ptr<const FlowModel> flow, double t,
                                      std::size_t replicas, const RngStream& base) {
    if (n == 0 || n > n_particles) throw std::invalid_argument("estimate_decoupling_gap: need 1 <= n <= N");
    if (replicas < 2) throw std::invalid_argument("estimate_decoupling_gap: need at least 2 replicas");
    std::vector<double> gaps(replicas), shared(replicas), jumps(replicas);
    parallel_for(replicas, [&](std::size_t r) {
        RngStream init(base.seed(), derive_stream_id(base.stream_id(), kTagGapInit, r));
        std::vector<double> u0(n_particles);
        for (double& x : u0) x = flow->sample(0.0, init);
        DecoupledSystem sys(std::move(u0), n, flow,
                            RngStream(base.seed(), derive_stream_id(base.stream_id(), kTagGapAux, r)));
        EventStream events(n_particles, RngStream(base.seed(), derive_stream_id(base.stream_id(), kTagGapEvents, r)));
        sys.advance(t, events);
        double g = 0.0;
        std::uint64_t s = 0, j = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = sys.u().values()[i];
            const double b = sys.u_tilde()[i];
            const double d = a * a - b * b;
            g += d * d;
            s += sys.shared_jumps()[i];
            j += sys.u_jumps()[i];
        }
        gaps[r] = g / static_cast<double>(n);
        shared[r] = static_cast<double>(s);
        jumps[r] = static_cast<double>(j);
    });
    DecouplingGap out;
    out.gap = mean_se(gaps);
    double s_tot = 0.0, j_tot = 0.0;
    for (std::size_t r = 0; r < replicas; ++r) {
        s_tot += shared[r];
        j_tot += jumps[r];
    }
    const double frac = j_tot > 0.0 ? s_tot / j_tot : 1.0;
    double resid = 0.0;
    for (std::size_t r = 0; r < replicas; ++r) {
        const double d = shared[r] - frac * jumps[r];
        resid += d * d;
    }
    const auto m = static_cast<double>(replicas);
    const double j_bar = j_tot / m;
    out.shared_fraction = {frac, j_bar > 0.0 ? std::sqrt(resid / (m - 1.0) / m) / j_bar : 0.0};
    out.expected_shared =
        1.0 - (static_cast<double>(n) - 1.0) / (2.0 * (static_cast<double>(n_particles) - 1.0));
    return out;
}

}  // namespace kac
