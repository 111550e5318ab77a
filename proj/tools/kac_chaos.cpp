// kac-chaos: propagation-of-chaos experiments for Kac's 1D particle system.
//
//   kac-chaos <experiment> [--n ...] [--t ...] [--config file.json] ...
//
// Exit codes: 0 success, 2 configuration error, 3 failed --check.

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kac/experiments.hpp"
#include "kac/parallel.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kCheckFailed = 3;

struct Flags {
    std::string experiment;
    std::string config_path;
    std::vector<std::size_t> n_list;
    std::vector<double> t_grid;
    std::optional<std::size_t> replicas;
    std::optional<std::string> f0;
    std::optional<double> p_init;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_ref;
    std::optional<std::string> param;
    std::optional<std::string> out;
    std::optional<std::string> metric;
    std::vector<std::size_t> n_tracked;
    std::optional<double> q;
    std::optional<std::string> init;
    std::optional<double> snapshot_spacing;
    bool json = false;
    bool check = false;
    unsigned threads = 0;
};

kac::ExperimentConfig build_config(const Flags& f) {
    nlohmann::json file = nlohmann::json::object();
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw kac::ConfigError("cannot open config file " + f.config_path);
        try {
            file = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw kac::ConfigError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!file.is_object()) throw kac::ConfigError("config file must hold a JSON object");
    }

    std::string name = f.experiment;
    if (name.empty()) {
        if (!file.contains("experiment")) throw kac::ConfigError("no experiment given");
        name = file["experiment"].get<std::string>();
    }
    // Flags override the file, which overrides the scenario defaults.
    file["experiment"] = name;
    kac::ExperimentConfig c = kac::default_config(kac::parse_experiment(name));
    kac::apply_json(c, file);

    nlohmann::json over = nlohmann::json::object();
    if (!f.n_list.empty()) over["n"] = f.n_list;
    if (!f.t_grid.empty()) over["t"] = f.t_grid;
    if (f.replicas) over["replicas"] = *f.replicas;
    if (f.f0) over["f0"] = *f.f0;
    if (f.p_init) over["p-init"] = *f.p_init;
    if (f.seed) over["seed"] = *f.seed;
    if (f.n_ref) over["n-ref"] = *f.n_ref;
    if (f.param) over["param"] = *f.param;
    if (f.out) over["out"] = *f.out;
    if (f.metric) over["metric"] = *f.metric;
    if (!f.n_tracked.empty()) over["n-tracked"] = f.n_tracked;
    if (f.q) over["q"] = *f.q;
    if (f.init) over["init"] = *f.init;
    if (f.snapshot_spacing) over["snapshot-spacing"] = *f.snapshot_spacing;
    if (f.json) over["json"] = true;
    if (f.check) over["check"] = true;
    kac::apply_json(c, over);
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Propagation-of-chaos experiments for Kac's 1D particle system", "kac-chaos"};
    Flags f;
    app.add_option("experiment", f.experiment,
                   "chaos-rate | chaos-rate-w4 | covariance | decoupling | gap-decay | equilibrium | iid-rate");
    app.add_option("--config", f.config_path, "JSON file with the same keys as the flags");
    app.add_option("--n", f.n_list, "system sizes, comma separated")->delimiter(',');
    app.add_option("--t", f.t_grid, "observation times, comma separated")->delimiter(',');
    app.add_option("--replicas", f.replicas, "independent replicas per point");
    app.add_option("--f0", f.f0, "initial law: gaussian:<E> | uniform:<a>,<b> | student-like:<p>");
    app.add_option("--p-init", f.p_init, "moment order for the reported theoretical rates");
    app.add_option("--seed", f.seed, "master seed");
    app.add_option("--n-ref", f.n_ref, "particles in the reference flow");
    app.add_option("--param", f.param, "rotation | polar");
    app.add_option("--out", f.out, "CSV output path");
    app.add_option("--metric", f.metric, "chaos-rate metric: w2sq | w2");
    app.add_option("--n-tracked", f.n_tracked, "decoupling: tracked counts, comma separated")->delimiter(',');
    app.add_option("--q", f.q, "iid-rate: Wasserstein order");
    app.add_option("--init", f.init, "initial condition of V: iid | kac-sphere");
    app.add_option("--snapshot-spacing", f.snapshot_spacing, "reference flow snapshot spacing");
    app.add_option("--threads", f.threads, "worker threads (0 = hardware)");
    app.add_flag("--json", f.json, "print JSON to stdout");
    app.add_flag("--check", f.check, "evaluate the acceptance checks; exit 3 on failure");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    kac::ExperimentConfig config;
    try {
        config = build_config(f);
    } catch (const std::exception& e) {
        std::cerr << "kac-chaos: configuration error: " << e.what() << '\n';
        return kConfigError;
    }
    if (f.threads > 0) kac::replica_threads() = f.threads;

    kac::ExperimentResult result;
    try {
        result = kac::run_experiment(config);
    } catch (const kac::ConfigError& e) {
        std::cerr << "kac-chaos: configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "kac-chaos: configuration error: " << e.what() << '\n';
        return kConfigError;
    }

    if (!config.output.empty()) {
        std::ofstream out(config.output);
        if (!out) {
            std::cerr << "kac-chaos: cannot write " << config.output << '\n';
            return kConfigError;
        }
        result.table.write_csv(out);
    }
    if (config.json) std::cout << result.to_json(config).dump(2) << '\n';
    else if (config.output.empty()) result.table.write_csv(std::cout);

    if (config.check) {
        for (const auto& m : result.check_messages) std::cerr << m << '\n';
        if (!result.check_passed) return kCheckFailed;
    }
    return 0;
}
