// Python module kac_chaos._core.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kac/experiments.hpp"
#include "kac/kac_system.hpp"
#include "kac/transport.hpp"

namespace py = pybind11;

namespace {

// JSON in, JSON out; the Python side converts with the json module.
std::string run_json(const std::string& config_json) {
    const auto j = nlohmann::json::parse(config_json);
    if (!j.contains("experiment")) throw kac::ConfigError("config needs an \"experiment\" key");
    auto c = kac::default_config(kac::parse_experiment(j["experiment"].get<std::string>()));
    kac::apply_json(c, j);
    c.validate();
    py::gil_scoped_release release;
    return kac::run_experiment(c).to_json(c).dump();
}

std::string default_config_json(const std::string& name) {
    return kac::to_json(kac::default_config(kac::parse_experiment(name))).dump();
}

std::vector<double> simulate(std::vector<double> v0, double t, const std::string& param, std::uint64_t seed,
                             std::uint64_t stream) {
    kac::SystemState s(std::move(v0));
    kac::EventStream events(s.size(), kac::RngStream(seed, stream));
    kac::advance(s, t, kac::parse_parametrization(param), events);
    return s.velocities;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Kac's 1D particle system and propagation-of-chaos experiments";
    py::register_exception<kac::ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("run_experiment_json", &run_json, py::arg("config_json"));
    m.def("default_config_json", &default_config_json, py::arg("experiment"));
    m.def("simulate", &simulate, py::arg("v0"), py::arg("t"), py::arg("param") = "polar", py::arg("seed") = 42,
          py::arg("stream") = 0, "Velocities of the N-particle system at time t.");
    m.def("sample_kac_sphere", [](std::size_t n, double energy, std::uint64_t seed) {
        kac::RngStream rng(seed, 0);
        return kac::sample_kac_sphere(n, energy, rng);
    }, py::arg("n"), py::arg("mean_energy") = 1.0, py::arg("seed") = 42);
    m.def("mean_energy", [](const std::vector<double>& v) { return kac::mean_energy(v); });
    m.def("wasserstein", [](const std::vector<double>& x, const std::vector<double>& y, double p) {
        return kac::wasserstein_p(kac::EmpiricalMeasure(x), kac::EmpiricalMeasure(y), p);
    }, py::arg("x"), py::arg("y"), py::arg("p") = 2.0, "W_p^p between two equal-size empirical measures.");
    m.def("theoretical_rates", [](double p, std::size_t n) {
        const auto r = kac::theoretical_rates(p, n);
        py::dict d;
        d["gamma"] = r.gamma;
        d["gamma_tilde"] = r.gamma_tilde;
        d["lambda_n"] = r.lambda_n;
        return d;
    }, py::arg("p"), py::arg("n"));
}
