#include "kac/experiments.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <set>

#include "kac/coupling.hpp"
#include "kac/flow_model.hpp"
#include "kac/format.hpp"
#include "kac/parallel.hpp"
#include "kac/stats.hpp"
#include "kac/transport.hpp"

namespace kac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Reference flows must be this many times larger than the biggest test system.
constexpr std::size_t kReferenceBudget = 100;

struct ExperimentName {
    Experiment e;
    std::string_view name;
};

constexpr ExperimentName kExperimentNames[] = {
    {Experiment::chaos_rate, "chaos-rate"},   {Experiment::chaos_rate_w4, "chaos-rate-w4"},
    {Experiment::covariance, "covariance"},   {Experiment::decoupling, "decoupling"},
    {Experiment::gap_decay, "gap-decay"},     {Experiment::equilibrium, "equilibrium"},
    {Experiment::iid_rate, "iid-rate"},
};

std::string describe(double x) { return format_double(x); }

std::vector<double> as_doubles(std::span<const std::size_t> xs) {
    return {xs.begin(), xs.end()};
}

std::vector<double> sorted_unique_with_zero(std::span<const double> ts) {
    std::set<double> s(ts.begin(), ts.end());
    s.insert(0.0);
    return {s.begin(), s.end()};
}

std::shared_ptr<const FlowModel> make_flow(const ExperimentConfig& c, std::vector<double> snapshot_times,
                                           std::size_t largest_system, std::uint64_t tag) {
    if (c.f0.kind() == InitialLaw::Kind::gaussian)
        return std::make_shared<const FlowModel>(stationary_gaussian(c.f0.energy()));
    const std::size_t needed = std::max<std::size_t>(1000, kReferenceBudget * largest_system);
    if (c.n_ref < needed)
        throw ConfigError("reference flow budget violated: n_ref=" + std::to_string(c.n_ref) +
                          " but the largest system has N=" + std::to_string(largest_system) +
                          "; the reference must have at least " + std::to_string(needed) +
                          " particles so that its error stays an order below the measured one");
    ReferenceFlowConfig rc;
    rc.n_ref = c.n_ref;
    rc.snapshot_times = std::move(snapshot_times);
    rc.seed = c.seed;
    rc.stream_id = derive_stream_id(0xF10, tag);
    const InitialLaw law = c.f0;
    return std::make_shared<const FlowModel>(
        build_reference_flow([law](RngStream& rng) { return law.sample(rng); }, rc));
}

nlohmann::json fit_to_json(const RateFit& f) {
    return {{"slope", f.slope},
            {"intercept", f.intercept},
            {"slope_ci", {f.slope_lo, f.slope_hi}},
            {"r_squared", f.r_squared},
            {"points", f.points}};
}

nlohmann::json rates_json(double p, std::span<const std::size_t> n_list) {
    nlohmann::json j;
    j["p"] = p;
    try {
        const auto r = theoretical_rates(p, 2);
        j["gamma"] = r.gamma;
        j["gamma_tilde"] = r.gamma_tilde;
        nlohmann::json lam = nlohmann::json::object();
        for (std::size_t n : n_list)
            if (n >= 2) lam[std::to_string(n)] = theoretical_rates(p, n).lambda_n;
        j["lambda_n"] = lam;
    } catch (const std::invalid_argument& e) {
        j["error"] = e.what();
    }
    return j;
}

void fail(ExperimentResult& r, std::string msg) {
    r.check_passed = false;
    r.check_messages.push_back("FAIL " + std::move(msg));
}

void pass(ExperimentResult& r, std::string msg) { r.check_messages.push_back("ok   " + std::move(msg)); }

void check_se_sanity(ExperimentResult& r, const ExperimentConfig& c, std::string_view mean_col,
                     std::string_view se_col) {
    if (c.replicas < 100) return;
    const auto m = r.table.column(mean_col);
    const auto s = r.table.column(se_col);
    for (const auto& row : r.table.rows) {
        if (row[*s] > row[*m]) {
            fail(r, std::string(se_col) + " exceeds " + std::string(mean_col) + " in a row");
            return;
        }
    }
    pass(r, std::string(se_col) + " <= " + std::string(mean_col) + " on every row");
}

std::vector<double> initial_velocities(const ExperimentConfig& c, std::size_t n, RngStream& rng) {
    if (c.init == InitMode::kac_sphere) return sample_kac_sphere(n, c.f0.energy(), rng);
    std::vector<double> v(n);
    for (double& x : v) x = c.f0.sample(rng);
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

Experiment parse_experiment(std::string_view name) {
    for (const auto& [e, n] : kExperimentNames)
        if (n == name) return e;
    throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::string_view to_string(Experiment e) noexcept {
    for (const auto& [x, n] : kExperimentNames)
        if (x == e) return n;
    return "?";
}

ExperimentConfig default_config(Experiment e) {
    ExperimentConfig c;
    c.experiment = e;
    c.n_list = {64, 128, 256, 512, 1024, 2048, 4096};
    c.t_grid = {0, 1, 2, 5, 10, 20, 50};
    switch (e) {
        case Experiment::chaos_rate:
        case Experiment::chaos_rate_w4: break;
        case Experiment::covariance:
            c.n_list = {50, 100};
            c.t_grid = {0, 5};
            c.replicas = 5000;
            break;
        case Experiment::decoupling:
            c.n_list = {1000};
            c.n_tracked = {1, 10, 100};
            c.t_grid = {0, 5};
            c.replicas = 2000;
            break;
        case Experiment::gap_decay:
            c.n_list = {64, 100, 512};
            c.t_grid = observation_grid(30.0, 0.5);
            c.replicas = 400;
            c.init = InitMode::kac_sphere;
            break;
        case Experiment::equilibrium:
            c.n_list = {1024};
            c.t_grid = {0, 0.5, 1, 1.5, 2, 3, 4, 6, 8, 12, 16, 20};
            c.replicas = 100;
            c.f0 = InitialLaw::uniform(-std::sqrt(3.0), std::sqrt(3.0));
            break;
        case Experiment::iid_rate:
            c.n_list = {100, 1000, 10000};
            c.t_grid = {0};
            c.f0 = InitialLaw::uniform(0.0, 1.0);
            break;
    }
    return c;
}

void ExperimentConfig::validate() const {
    if (replicas < 2) throw ConfigError("replicas must be >= 2");
    if (n_list.empty()) throw ConfigError("--n must list at least one system size");
    if (std::adjacent_find(n_list.begin(), n_list.end(), std::greater_equal<>()) != n_list.end())
        throw ConfigError("--n must be strictly ascending");
    if (t_grid.empty()) throw ConfigError("--t must list at least one time");
    if (t_grid.front() < 0.0 || std::adjacent_find(t_grid.begin(), t_grid.end(), std::greater_equal<>()) != t_grid.end())
        throw ConfigError("--t must be non-negative and strictly ascending");
    if (!(snapshot_spacing > 0.0)) throw ConfigError("snapshot spacing must be positive");
    const bool needs_pairs = experiment != Experiment::iid_rate;
    if (needs_pairs && n_list.front() < 2) throw ConfigError("particle systems need N >= 2");
    if (!needs_pairs && n_list.front() < 1) throw ConfigError("sample sizes must be >= 1");
    if (metric != "w2sq" && metric != "w2") throw ConfigError("--metric must be w2sq or w2");
    switch (experiment) {
        case Experiment::covariance:
            if (replicas < 100) throw ConfigError("covariance needs at least 100 replicas");
            break;
        case Experiment::decoupling:
            if (n_tracked.empty()) throw ConfigError("decoupling needs --n-tracked");
            for (std::size_t n : n_tracked)
                if (n < 1 || n > n_list.front())
                    throw ConfigError("--n-tracked values must lie in [1, min N]");
            break;
        case Experiment::iid_rate:
            if (!(q >= 2.0) || q != std::floor(q) || std::fmod(q, 2.0) != 0.0)
                throw ConfigError("--q must be a positive even integer");
            break;
        default: break;
    }
}

void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "experiment") c.experiment = parse_experiment(value.get<std::string>());
            else if (key == "n") c.n_list = value.get<std::vector<std::size_t>>();
            else if (key == "t") c.t_grid = value.get<std::vector<double>>();
            else if (key == "replicas") c.replicas = value.get<std::size_t>();
            else if (key == "f0") c.f0 = InitialLaw::parse(value.get<std::string>());
            else if (key == "p-init") c.p_init = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "n-ref") c.n_ref = value.get<std::size_t>();
            else if (key == "param") c.param = parse_parametrization(value.get<std::string>());
            else if (key == "out") c.output = value.get<std::string>();
            else if (key == "json") c.json = value.get<bool>();
            else if (key == "check") c.check = value.get<bool>();
            else if (key == "metric") c.metric = value.get<std::string>();
            else if (key == "n-tracked") c.n_tracked = value.get<std::vector<std::size_t>>();
            else if (key == "q") c.q = value.get<double>();
            else if (key == "init") {
                const auto s = value.get<std::string>();
                if (s == "iid") c.init = InitMode::iid;
                else if (s == "kac-sphere") c.init = InitMode::kac_sphere;
                else throw ConfigError("init must be iid or kac-sphere");
            } else if (key == "snapshot-spacing") c.snapshot_spacing = value.get<double>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["experiment"] = std::string(to_string(c.experiment));
    j["n"] = c.n_list;
    j["t"] = c.t_grid;
    j["replicas"] = c.replicas;
    j["f0"] = c.f0.to_string();
    j["p-init"] = c.p_init;
    j["seed"] = c.seed;
    j["n-ref"] = c.n_ref;
    j["param"] = std::string(to_string(c.param));
    j["metric"] = c.metric;
    j["n-tracked"] = c.n_tracked;
    j["q"] = c.q;
    j["init"] = c.init == InitMode::iid ? "iid" : "kac-sphere";
    j["snapshot-spacing"] = c.snapshot_spacing;
    return j;
}

// ---------------------------------------------------------------------------
// Fits and closed-form rates

RateFit fit_linear(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("fit: x and y sizes differ");
    const std::size_t n = xs.size();
    if (n < 2) throw std::invalid_argument("fit: need at least 2 points");
    const auto dn = static_cast<double>(n);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= dn;
    my /= dn;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit: x values are all equal");
    RateFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (f.intercept + f.slope * xs[i]);
        ss_res += r * r;
    }
    f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    if (n == 2) {
        f.slope_lo = -kInf;
        f.slope_hi = kInf;
        return f;
    }
    const double se = std::sqrt(ss_res / (dn - 2.0) / sxx);
    const boost::math::students_t dist(dn - 2.0);
    const double tq = boost::math::quantile(dist, 0.975);
    f.slope_lo = f.slope - tq * se;
    f.slope_hi = f.slope + tq * se;
    return f;
}

RateFit fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() < 2 || ys.size() < 2) throw std::invalid_argument("fit_loglog_slope: need at least 2 points");
    std::vector<double> lx, ly;
    for (double x : xs) {
        if (!(x > 0.0)) throw std::invalid_argument("fit_loglog_slope: x values must be positive");
        lx.push_back(std::log(x));
    }
    for (double y : ys) {
        if (!(y > 0.0)) throw std::invalid_argument("fit_loglog_slope: y values must be positive");
        ly.push_back(std::log(y));
    }
    return fit_linear(lx, ly);
}

TheoreticalRates theoretical_rates(double p, std::size_t n) {
    if (!(p > 4.0)) throw std::invalid_argument("theoretical_rates: need p > 4");
    if (p == 8.0) throw std::invalid_argument("theoretical_rates: p = 8 is excluded");
    if (n < 2) throw std::invalid_argument("theoretical_rates: need N >= 2");
    TheoreticalRates r;
    r.gamma = std::min(1.0 / 3.0, (p - 4.0) / (2.0 * p - 4.0));
    r.gamma_tilde = p < 8.0 ? (p - 4.0) / (2.0 * p) : (p - 4.0) / (3.0 * p - 8.0);
    const auto dn = static_cast<double>(n);
    r.lambda_n = 0.25 * (dn + 2.0) / (dn - 1.0);
    return r;
}

// ---------------------------------------------------------------------------
// Output

void Table::write_csv(std::ostream& out) const {
    for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << columns[k];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_double(row[k]);
        out << '\n';
    }
}

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t k = 0; k < columns.size(); ++k)
        if (columns[k] == name) return k;
    return std::nullopt;
}

nlohmann::json ExperimentResult::to_json(const ExperimentConfig& config) const {
    nlohmann::json j;
    j["experiment"] = std::string(kac::to_string(config.experiment));
    j["config"] = kac::to_json(config);
    j["columns"] = table.columns;
    j["rows"] = table.rows;
    j["summary"] = summary;
    j["theoretical_rates"] = rates_json(config.p_init, config.n_list);
    j["check"] = {{"passed", check_passed}, {"messages", check_messages}};
    return j;
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentResult chaos_rate_experiment(const ExperimentConfig& c) {
    const bool w4 = c.experiment == Experiment::chaos_rate_w4;
    const bool squared = !w4 && c.metric == "w2sq";
    const int order = w4 ? 4 : 2;
    const std::size_t n_max = c.n_list.back();
    const auto times = sorted_unique_with_zero(c.t_grid);
    const auto flow = make_flow(c, times, n_max, 1);

    ExperimentResult res;
    res.table.columns = {"N", "t", "error_mean", "error_se"};
    const std::size_t nt = c.t_grid.size();
    std::vector<std::vector<Estimate>> est(c.n_list.size(), std::vector<Estimate>(nt));

    for (std::size_t a = 0; a < c.n_list.size(); ++a) {
        const std::size_t n = c.n_list[a];
        std::vector<std::vector<double>> cells(nt);
        for (std::size_t ti = 0; ti < nt; ++ti) cells[ti] = flow->cell_moments(c.t_grid[ti], n, order, squared);
        std::vector<double> errors(c.replicas * nt);
        parallel_for(c.replicas, [&](std::size_t r) {
            RngStream init(c.seed, derive_stream_id(0xA1, n, r));
            std::vector<double> v(n);
            for (double& x : v) x = c.f0.sample(init);
            SystemState state(std::move(v));
            EventStream events(n, RngStream(c.seed, derive_stream_id(0xA2, n, r)));
            std::vector<double> work(n);
            for (std::size_t ti = 0; ti < nt; ++ti) {
                advance(state, c.t_grid[ti], c.param, events);
                for (std::size_t k = 0; k < n; ++k) {
                    const double x = state.velocities[k];
                    work[k] = squared ? x * x : x;
                }
                std::sort(work.begin(), work.end());
                errors[r * nt + ti] = wasserstein_cells(work, cells[ti], order);
            }
        });
        std::vector<double> column(c.replicas);
        for (std::size_t ti = 0; ti < nt; ++ti) {
            for (std::size_t r = 0; r < c.replicas; ++r) column[r] = errors[r * nt + ti];
            est[a][ti] = mean_se(column);
            res.table.rows.push_back({static_cast<double>(n), c.t_grid[ti], est[a][ti].mean, est[a][ti].se});
        }
    }

    res.summary["metric"] = w4 ? "W4^4(V, f_t)" : (squared ? "W2^2(V^(2), f_t^(2))" : "W2^2(V, f_t)");
    const double threshold = w4 ? -0.25 : -0.30;
    nlohmann::json fits = nlohmann::json::array();
    if (c.n_list.size() < 2) {
        res.summary["fit_warning"] = "a single system size cannot be fitted";
        fail(res, "slope check needs at least two system sizes");
    } else {
        const auto xs = as_doubles(c.n_list);
        for (std::size_t ti = 0; ti < nt; ++ti) {
            std::vector<double> ys;
            for (std::size_t a = 0; a < c.n_list.size(); ++a) ys.push_back(est[a][ti].mean);
            if (std::any_of(ys.begin(), ys.end(), [](double y) { return !(y > 0.0); })) continue;
            const RateFit f = fit_loglog_slope(xs, ys);
            auto jf = fit_to_json(f);
            jf["t"] = c.t_grid[ti];
            fits.push_back(jf);
            const std::string tag = "t=" + describe(c.t_grid[ti]) + " slope " + describe(f.slope) + " CI [" +
                                    describe(f.slope_lo) + ", " + describe(f.slope_hi) + "]";
            if (f.slope <= threshold && f.slope_hi < 0.0) pass(res, tag);
            else fail(res, tag + " (need slope <= " + describe(threshold) + " and CI below 0)");
        }
    }
    res.summary["fits"] = fits;

    const auto t5 = std::find(c.t_grid.begin(), c.t_grid.end(), 5.0);
    const auto t50 = std::find(c.t_grid.begin(), c.t_grid.end(), 50.0);
    if (t5 != c.t_grid.end() && t50 != c.t_grid.end()) {
        const auto i5 = static_cast<std::size_t>(t5 - c.t_grid.begin());
        const auto i50 = static_cast<std::size_t>(t50 - c.t_grid.begin());
        for (std::size_t a = 0; a < c.n_list.size(); ++a) {
            const std::string tag = "N=" + std::to_string(c.n_list[a]) + " error(50)/error(5) = " +
                                    describe(est[a][i50].mean / est[a][i5].mean);
            if (est[a][i50].mean <= 2.0 * est[a][i5].mean) pass(res, tag);
            else fail(res, tag + " (need <= 2)");
        }
    }
    check_se_sanity(res, c, "error_mean", "error_se");
    return res;
}

ExperimentResult covariance_experiment(const ExperimentConfig& c) {
    const double t_max = c.t_grid.back();
    const auto flow = make_flow(c, ReferenceFlowConfig::uniform_times(t_max, c.snapshot_spacing),
                                c.n_list.back(), 2);
    ExperimentResult res;
    res.table.columns = {"N", "t", "cov_u2", "cov_se"};
    std::vector<std::vector<Estimate>> est(c.n_list.size());
    for (std::size_t a = 0; a < c.n_list.size(); ++a) {
        const std::size_t n = c.n_list[a];
        for (double t : c.t_grid) {
            const Estimate e = estimate_cov_u2(n, flow, t, c.replicas, RngStream(c.seed, derive_stream_id(0xB1, n)));
            est[a].push_back(e);
            res.table.rows.push_back({static_cast<double>(n), t, e.mean, e.se});
        }
    }
    for (std::size_t ti = 0; ti < c.t_grid.size(); ++ti) {
        const double t = c.t_grid[ti];
        if (t == 0.0) {
            for (std::size_t a = 0; a < c.n_list.size(); ++a) {
                const Estimate& e = est[a][ti];
                const std::string tag = "N=" + std::to_string(c.n_list[a]) + " t=0 cov " + describe(e.mean) +
                                        " (se " + describe(e.se) + ")";
                if (std::abs(e.mean) <= 3.0 * e.se) pass(res, tag);
                else fail(res, tag + " not within 3 se of 0");
            }
        } else if (c.n_list.size() >= 2) {
            const Estimate lo{std::abs(est.front()[ti].mean), est.front()[ti].se};
            const Estimate hi{std::abs(est.back()[ti].mean), est.back()[ti].se};
            const Estimate r = ratio(lo, hi);
            const double expected = static_cast<double>(c.n_list.back()) / static_cast<double>(c.n_list.front());
            res.summary["ratios"].push_back({{"t", t}, {"ratio", r.mean}, {"se", r.se}, {"expected", expected}});
            const std::string tag = "t=" + describe(t) + " |cov| ratio " + describe(r.mean) + " +- " +
                                    describe(1.96 * r.se) + " vs " + describe(expected);
            if (std::abs(r.mean - expected) <= 1.96 * r.se) pass(res, tag);
            else fail(res, tag);
        }
    }
    return res;
}

ExperimentResult decoupling_experiment(const ExperimentConfig& c) {
    const double t_max = c.t_grid.back();
    const auto flow = make_flow(c, ReferenceFlowConfig::uniform_times(t_max, c.snapshot_spacing),
                                c.n_list.back(), 3);
    ExperimentResult res;
    res.table.columns = {"N",         "n",         "t",        "gap_mean", "gap_se", "shared_fraction",
                         "shared_se", "expected_shared"};
    for (std::size_t n_particles : c.n_list) {
        for (double t : c.t_grid) {
            std::vector<DecouplingGap> per_n;
            for (std::size_t n : c.n_tracked) {
                const auto g = estimate_decoupling_gap(n, n_particles, flow, t, c.replicas,
                                                       RngStream(c.seed, derive_stream_id(0xC1, n_particles, n)));
                per_n.push_back(g);
                res.table.rows.push_back({static_cast<double>(n_particles), static_cast<double>(n), t, g.gap.mean,
                                          g.gap.se, g.shared_fraction.mean, g.shared_fraction.se, g.expected_shared});
                const std::string tag = "N=" + std::to_string(n_particles) + " n=" + std::to_string(n) +
                                        " t=" + describe(t);
                if (n == 1 || t == 0.0) {
                    if (g.gap.mean == 0.0) pass(res, tag + " gap exactly 0");
                    else fail(res, tag + " gap " + describe(g.gap.mean) + " should be exactly 0");
                } else if (std::abs(g.shared_fraction.mean - g.expected_shared) > 1.96 * g.shared_fraction.se + 1e-12) {
                    fail(res, tag + " shared fraction " + describe(g.shared_fraction.mean) + " vs " +
                                  describe(g.expected_shared));
                } else {
                    pass(res, tag + " shared fraction " + describe(g.shared_fraction.mean));
                }
            }
            if (t == 0.0) continue;
            // Ratio between the largest and the smallest tracked count above 1.
            std::size_t lo = c.n_tracked.size(), hi = c.n_tracked.size();
            for (std::size_t k = 0; k < c.n_tracked.size(); ++k) {
                if (c.n_tracked[k] < 2) continue;
                if (lo == c.n_tracked.size() || c.n_tracked[k] < c.n_tracked[lo]) lo = k;
                if (hi == c.n_tracked.size() || c.n_tracked[k] > c.n_tracked[hi]) hi = k;
            }
            if (lo == c.n_tracked.size() || lo == hi) continue;
            const Estimate r = ratio(per_n[hi].gap, per_n[lo].gap);
            const double expected = static_cast<double>(c.n_tracked[hi]) / static_cast<double>(c.n_tracked[lo]);
            res.summary["ratios"].push_back({{"N", n_particles},
                                             {"t", t},
                                             {"ratio", r.mean},
                                             {"se", r.se},
                                             {"expected_n_over_N", expected},
                                             {"expected_n_minus_1",
                                              (static_cast<double>(c.n_tracked[hi]) - 1.0) /
                                                  (static_cast<double>(c.n_tracked[lo]) - 1.0)}});
            const std::string tag = "N=" + std::to_string(n_particles) + " t=" + describe(t) + " gap ratio " +
                                    describe(r.mean) + " +- " + describe(1.96 * r.se) + " vs " + describe(expected);
            if (std::abs(r.mean - expected) <= 1.96 * r.se) pass(res, tag);
            else fail(res, tag);
        }
    }
    return res;
}

DecayFit fit_gap_decay(std::span<const double> t, std::span<const double> h_mean, std::span<const double> h_se) {
    DecayFit fit;
    const std::size_t n = t.size();
    if (n < 4) {
        fit.warning = "observation grid too short for a decay fit";
        return fit;
    }
    const std::size_t tail = std::max<std::size_t>(1, n / 4);
    double ss = 0.0;
    for (std::size_t k = n - tail; k < n; ++k) {
        fit.plateau += h_mean[k];
        ss += h_se[k] * h_se[k];
    }
    fit.plateau /= static_cast<double>(tail);
    fit.plateau_se = std::sqrt(ss) / static_cast<double>(tail);
    if (fit.plateau >= h_mean[0]) {
        fit.warning = "degenerate decay: plateau >= h_0";
        return fit;
    }
    std::vector<double> xs, ys;
    const double t_half = 0.5 * t.back();
    for (std::size_t k = 0; k < n && t[k] <= t_half; ++k) {
        const double excess = h_mean[k] - fit.plateau;
        if (!(excess > 3.0 * std::hypot(h_se[k], fit.plateau_se))) break;
        xs.push_back(t[k]);
        ys.push_back(std::log(excess));
    }
    fit.window_points = xs.size();
    if (xs.size() < 3) {
        fit.warning = "fewer than 3 points above the plateau in the early window";
        return fit;
    }
    const RateFit f = fit_linear(xs, ys);
    fit.fitted = true;
    fit.rate = -f.slope;
    fit.rate_lo = -f.slope_hi;
    fit.rate_hi = -f.slope_lo;
    return fit;
}

ExperimentResult gap_decay_experiment(const ExperimentConfig& c) {
    const double t_max = c.t_grid.back();
    const auto flow = make_flow(c, ReferenceFlowConfig::uniform_times(t_max, c.snapshot_spacing),
                                c.n_list.back(), 4);
    ExperimentResult res;
    res.table.columns = {"N", "t", "h_mean", "h_se"};
    std::vector<DecayFit> fits;
    for (std::size_t n : c.n_list) {
        std::vector<CoupledRecord> records(c.replicas);
        parallel_for(c.replicas, [&](std::size_t r) {
            RngStream init_v(c.seed, derive_stream_id(0xD1, n, r));
            RngStream init_u(c.seed, derive_stream_id(0xD2, n, r));
            auto v0 = initial_velocities(c, n, init_v);
            std::vector<double> u0(n);
            for (double& x : u0) x = flow->sample(0.0, init_u);
            records[r] = run_coupled(std::move(v0), std::move(u0), flow, c.t_grid,
                                     RngStream(c.seed, derive_stream_id(0xD3, n, r)));
        });
        const CouplingDiagnostics d = summarize(records);
        for (std::size_t k = 0; k < d.t.size(); ++k)
            res.table.rows.push_back({static_cast<double>(n), d.t[k], d.h_mean[k], d.h_se[k]});
        const DecayFit fit = fit_gap_decay(d.t, d.h_mean, d.h_se);
        fits.push_back(fit);
        const double lambda = 0.25 * (static_cast<double>(n) + 2.0) / (static_cast<double>(n) - 1.0);
        nlohmann::json jf = {{"N", n},
                             {"lambda_n", lambda},
                             {"plateau", fit.plateau},
                             {"plateau_se", fit.plateau_se},
                             {"h0", d.h_mean.front()},
                             {"sign_agreement_min", *std::min_element(d.sign_agreement.begin(), d.sign_agreement.end())}};
        if (fit.fitted) {
            jf["decay_rate"] = fit.rate;
            jf["decay_rate_ci"] = {fit.rate_lo, fit.rate_hi};
            jf["window_points"] = fit.window_points;
            const std::string tag = "N=" + std::to_string(n) + " decay rate " + describe(fit.rate) + " vs lambda_N " +
                                    describe(lambda);
            if (fit.rate >= 0.5 * lambda && fit.rate <= 2.0 * lambda) pass(res, tag);
            else fail(res, tag + " outside [0.5, 2] lambda_N");
        } else {
            jf["warning"] = fit.warning;
            res.check_messages.push_back("warn N=" + std::to_string(n) + " " + fit.warning);
        }
        res.summary["fits"].push_back(jf);
    }
    for (std::size_t a = 1; a < fits.size(); ++a) {
        const double bound = fits[a - 1].plateau + 1.96 * std::hypot(fits[a - 1].plateau_se, fits[a].plateau_se);
        const std::string tag = "plateau N=" + std::to_string(c.n_list[a]) + " " + describe(fits[a].plateau) +
                                " vs N=" + std::to_string(c.n_list[a - 1]) + " " + describe(fits[a - 1].plateau);
        if (fits[a].plateau <= bound) pass(res, tag);
        else fail(res, tag);
    }
    return res;
}

ExperimentResult equilibrium_experiment(const ExperimentConfig& c) {
    std::shared_ptr<const FlowModel> flow;
    if (c.f0.kind() != InitialLaw::Kind::gaussian) {
        if (c.n_ref < 1000) throw ConfigError("n_ref must be >= 1000");
        ReferenceFlowConfig rc;
        rc.n_ref = c.n_ref;
        rc.snapshot_times = sorted_unique_with_zero(c.t_grid);
        rc.seed = c.seed;
        rc.stream_id = derive_stream_id(0xF10, 5);
        const InitialLaw law = c.f0;
        flow = std::make_shared<const FlowModel>(
            build_reference_flow([law](RngStream& rng) { return law.sample(rng); }, rc));
    }
    ExperimentResult res;
    res.table.columns = {"N", "t", "w2_to_equilibrium", "se", "flow_to_equilibrium"};
    const double energy = c.f0.energy();
    const std::size_t nt = c.t_grid.size();
    std::vector<double> flow_gap(nt, 0.0);
    if (flow) {
        const double sigma = std::sqrt(flow->energy());
        for (std::size_t ti = 0; ti < nt; ++ti) {
            const double t = c.t_grid[ti];
            flow_gap[ti] = wasserstein_quantile(flow->quantile_fn(t), [sigma](double u) { return sigma * normal_quantile(u); },
                                                2.0, flow->n_ref());
        }
    }
    (void)energy;
    for (std::size_t n : c.n_list) {
        std::vector<double> w(c.replicas * nt);
        parallel_for(c.replicas, [&](std::size_t r) {
            RngStream init(c.seed, derive_stream_id(0xE1, n, r));
            SystemState state(initial_velocities(c, n, init));
            EventStream events(n, RngStream(c.seed, derive_stream_id(0xE2, n, r)));
            RngStream sphere_rng(c.seed, derive_stream_id(0xE3, n, r));
            std::vector<double> work(n);
            for (std::size_t ti = 0; ti < nt; ++ti) {
                advance(state, c.t_grid[ti], c.param, events);
                work = state.velocities;
                std::sort(work.begin(), work.end());
                auto sphere = sample_kac_sphere(n, mean_energy(state.velocities), sphere_rng);
                std::sort(sphere.begin(), sphere.end());
                w[r * nt + ti] = wasserstein_sorted(work, sphere, 2.0);
            }
        });
        std::vector<Estimate> curve(nt);
        std::vector<double> column(c.replicas);
        for (std::size_t ti = 0; ti < nt; ++ti) {
            for (std::size_t r = 0; r < c.replicas; ++r) column[r] = w[r * nt + ti];
            curve[ti] = mean_se(column);
            res.table.rows.push_back({static_cast<double>(n), c.t_grid[ti], curve[ti].mean, curve[ti].se, flow_gap[ti]});
        }
        // Floor: mean of the last quarter of the grid.
        const std::size_t tail = std::max<std::size_t>(1, nt / 4);
        double floor = 0.0;
        for (std::size_t k = nt - tail; k < nt; ++k) floor += curve[k].mean;
        floor /= static_cast<double>(tail);
        std::vector<double> ts, logs;
        for (std::size_t k = 0; k < nt && curve[k].mean > 2.0 * floor; ++k) {
            ts.push_back(c.t_grid[k]);
            logs.push_back(std::log(curve[k].mean));
        }
        nlohmann::json jf = {{"N", n}, {"floor", floor}, {"pre_floor_points", ts.size()},
                             {"floor_bound", 1.0 / std::sqrt(static_cast<double>(n))}};
        bool decreasing = true;
        for (std::size_t k = 1; k < logs.size(); ++k) decreasing = decreasing && logs[k] < logs[k - 1];
        if (ts.size() >= 3) {
            const RateFit f = fit_linear(ts, logs);
            jf["log_slope"] = f.slope;
            jf["log_slope_ci"] = {f.slope_lo, f.slope_hi};
            jf["r_squared"] = f.r_squared;
        }
        res.summary["curves"].push_back(jf);
        const std::string tag = "N=" + std::to_string(n) + " " + std::to_string(ts.size()) +
                                " points above floor " + describe(floor);
        if (decreasing) pass(res, tag + " decrease monotonically");
        else fail(res, tag + " are not monotonically decreasing");
        if (floor <= 1.0 / std::sqrt(static_cast<double>(n))) pass(res, "floor below N^-1/2");
        else fail(res, "floor " + describe(floor) + " above N^-1/2");
    }
    return res;
}

ExperimentResult iid_rate_experiment(const ExperimentConfig& c) {
    ExperimentResult res;
    res.table.columns = {"N", "error_mean", "error_se"};
    std::vector<double> means;
    for (std::size_t n : c.n_list) {
        const auto cells = c.f0.cell_moments(n, static_cast<int>(c.q));
        std::vector<double> errors(c.replicas);
        parallel_for(c.replicas, [&](std::size_t r) {
            RngStream rng(c.seed, derive_stream_id(0xF1, n, r));
            std::vector<double> x(n);
            for (double& v : x) v = c.f0.sample(rng);
            std::sort(x.begin(), x.end());
            errors[r] = wasserstein_cells(x, cells, static_cast<int>(c.q));
        });
        const Estimate e = mean_se(errors);
        means.push_back(e.mean);
        res.table.rows.push_back({static_cast<double>(n), e.mean, e.se});
    }
    // Moment order r available to the bound: p_init for heavy tails, unbounded otherwise.
    const double r_moment = c.f0.kind() == InitialLaw::Kind::student_like ? c.p_init : kInf;
    const double eta = std::min(0.5, 1.0 - c.q / r_moment);
    res.summary["eta"] = eta;
    if (c.n_list.size() >= 2 && std::all_of(means.begin(), means.end(), [](double m) { return m > 0.0; })) {
        const RateFit f = fit_loglog_slope(as_doubles(c.n_list), means);
        res.summary["fit"] = fit_to_json(f);
        const std::string tag = "slope " + describe(f.slope) + " vs -eta " + describe(-eta);
        if (f.slope <= -eta) pass(res, tag);
        else fail(res, tag);
    } else {
        res.summary["fit_warning"] = "need two or more sizes with positive error for a fit";
        fail(res, "no slope fitted");
    }
    check_se_sanity(res, c, "error_mean", "error_se");
    return res;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    switch (config.experiment) {
        case Experiment::chaos_rate:
        case Experiment::chaos_rate_w4: return chaos_rate_experiment(config);
        case Experiment::covariance: return covariance_experiment(config);
        case Experiment::decoupling: return decoupling_experiment(config);
        case Experiment::gap_decay: return gap_decay_experiment(config);
        case Experiment::equilibrium: return equilibrium_experiment(config);
        case Experiment::iid_rate: return iid_rate_experiment(config);
    }
    throw ConfigError("unhandled experiment");
}

}  // namespace kac
