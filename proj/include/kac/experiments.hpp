#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kac/distributions.hpp"
#include "kac/kac_system.hpp"
#include "json.hpp"

namespace kac {

enum class Experiment { chaos_rate, chaos_rate_w4, covariance, decoupling, gap_decay, equilibrium, iid_rate };

Experiment parse_experiment(std::string_view name);
std::string_view to_string(Experiment e) noexcept;

/// Raised for invalid experiment configurations (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class InitMode { iid, kac_sphere };

struct ExperimentConfig {
    Experiment experiment = Experiment::chaos_rate;
    std::vector<std::size_t> n_list;
    std::vector<double> t_grid;
    std::size_t replicas = 200;
    double p_init = 12.0;
    InitialLaw f0 = InitialLaw::gaussian(1.0);
    std::uint64_t seed = 42;
    std::size_t n_ref = 500'000;
    Parametrization param = Parametrization::polar;
    /// chaos-rate only: "w2sq" compares squared pushforwards, "w2" the raw velocities.
    std::string metric = "w2sq";
    /// decoupling: numbers of tracked processes.
    std::vector<std::size_t> n_tracked;
    /// iid-rate: Wasserstein order q.
    double q = 2.0;
    /// Initial condition of the particle system V (equilibrium, gap-decay).
    InitMode init = InitMode::iid;
    double snapshot_spacing = 0.25;
    std::string output;
    bool json = false;
    bool check = false;

    /// Throws ConfigError.
    void validate() const;
};

/// Scenario defaults for each experiment.
ExperimentConfig default_config(Experiment e);

/// Applies a JSON object whose keys mirror the CLI flags ("n", "t",
/// "replicas", "f0", "p-init", "seed", "n-ref", "param", "out", "json",
/// "metric", "n-tracked", "q", "init", "check", "snapshot-spacing").
void apply_json(ExperimentConfig& config, const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_lo = 0.0;
    double slope_hi = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

/// Ordinary least squares of ys on xs with a 95% Student-t slope interval.
/// Needs >= 2 points; with exactly 2 the interval is unbounded.
RateFit fit_linear(std::span<const double> xs, std::span<const double> ys);
/// fit_linear on (log x, log y). Throws std::invalid_argument for < 2
/// points or non-positive values.
RateFit fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

struct TheoreticalRates {
    double gamma = 0.0;
    double gamma_tilde = 0.0;
    double lambda_n = 0.0;
};

/// gamma = min(1/3, (p-4)/(2p-4)); gamma~ = (p-4)/(2p) for p < 8 and
/// (p-4)/(3p-8) for p > 8; lambda_N = (N+2)/(4(N-1)).
/// Throws std::invalid_argument for p <= 4, p == 8 or n < 2.
TheoreticalRates theoretical_rates(double p, std::size_t n);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void write_csv(std::ostream& out) const;
    std::optional<std::size_t> column(std::string_view name) const;
};

struct ExperimentResult {
    Table table;
    /// Fits, warnings and derived quantities; mirrored into the JSON output.
    nlohmann::json summary = nlohmann::json::object();
    bool check_passed = true;
    std::vector<std::string> check_messages;

    nlohmann::json to_json(const ExperimentConfig& config) const;
};

ExperimentResult chaos_rate_experiment(const ExperimentConfig& config);
ExperimentResult covariance_experiment(const ExperimentConfig& config);
ExperimentResult decoupling_experiment(const ExperimentConfig& config);
ExperimentResult gap_decay_experiment(const ExperimentConfig& config);
ExperimentResult equilibrium_experiment(const ExperimentConfig& config);
ExperimentResult iid_rate_experiment(const ExperimentConfig& config);

/// Validates the configuration and dispatches on config.experiment.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct DecayFit {
    bool fitted = false;
    std::string warning;
    double plateau = 0.0;
    double plateau_se = 0.0;
    double rate = 0.0;
    double rate_lo = 0.0;
    double rate_hi = 0.0;
    std::size_t window_points = 0;
};

/// Early-window exponential fit of h_t - plateau. The plateau is the mean
/// over the last quarter of the grid; the window keeps t <= t_max/2 where
/// h_t - plateau exceeds three standard errors.
DecayFit fit_gap_decay(std::span<const double> t, std::span<const double> h_mean,
                       std::span<const double> h_se);

}  // namespace kac
