#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "kac/distributions.hpp"
#include "kac/kac_system.hpp"
#include "support.hpp"

using namespace kac;

TEST_CASE("rotation rule") {
    auto [a, b] = collide_rotation(1.0, 0.0, std::numbers::pi / 2);
    CHECK(a == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(b == doctest::Approx(1.0));
    auto [c, d] = collide_rotation(1.5, -2.0, 0.0);
    CHECK(c == 1.5);
    CHECK(d == -2.0);
    for (double th : {0.1, 1.0, 2.5, 4.0, 6.2}) {
        auto [x, y] = collide_rotation(3.0, 4.0, th);
        CHECK(std::abs(x * x + y * y - 25.0) < 1e-12);
    }
}

TEST_CASE("polar rule") {
    auto [a, b] = collide_polar(3.0, 4.0, 0.0);
    CHECK(a == 5.0);
    CHECK(b == 0.0);
    auto [c, d] = collide_polar(0.0, 0.0, 1.234);
    CHECK(c == 0.0);
    CHECK(d == 0.0);
    auto [x, y] = collide_polar(-1.0, 2.0, 2.0);
    CHECK(x == doctest::Approx(std::sqrt(5.0) * std::cos(2.0)));
    CHECK(y == doctest::Approx(std::sqrt(5.0) * std::sin(2.0)));
}

TEST_CASE("one collision from (1,0): both rules give the same first marginal") {
    RngStream r1(1, 0), r2(1, 1);
    std::vector<double> rot(100000), pol(100000);
    for (std::size_t k = 0; k < rot.size(); ++k) {
        rot[k] = collide_rotation(1.0, 0.0, 2 * std::numbers::pi * r1.uniform()).first;
        pol[k] = collide_polar(1.0, 0.0, 2 * std::numbers::pi * r2.uniform()).first;
    }
    CHECK(testing::two_sample_w1(rot, pol).w1 <= 0.01);
}

TEST_CASE("advance conserves energy and consumes Poisson(N T / 2) events") {
    for (auto param : {Parametrization::rotation, Parametrization::polar}) {
        RngStream init(2, 0);
        std::vector<double> v(1000);
        for (double& x : v) x = init.normal();
        SystemState s(v);
        const double e0 = mean_energy(v);
        EventStream events(v.size(), RngStream(2, 1));
        advance(s, 200.0, param, events);
        CHECK(s.events > 90000);
        CHECK(std::abs(mean_energy(s.velocities) - e0) / e0 <= 1e-9);
        CHECK(std::abs(s.energy - e0) / e0 <= 1e-9);
    }
    std::vector<double> counts(1000);
    for (std::size_t r = 0; r < counts.size(); ++r) {
        SystemState s(std::vector<double>(100, 1.0));
        EventStream events(100, RngStream(3, r));
        counts[r] = static_cast<double>(advance(s, 10.0, Parametrization::polar, events));
    }
    const auto m = testing::mean_se(counts);
    CHECK(std::abs(m.mean - 500.0) < 3 * m.se);
}

TEST_CASE("advance to the current time is a no-op; going back throws") {
    SystemState s(std::vector<double>{1.0, -2.0, 0.5});
    EventStream events(3, RngStream(4, 0));
    advance(s, 1.0, Parametrization::rotation, events);
    const auto before = s.velocities;
    const auto n = advance(s, 1.0, Parametrization::rotation, events);
    CHECK(n == 0);
    CHECK(s.velocities == before);
    CHECK_THROWS_AS(advance(s, 0.5, Parametrization::rotation, events), std::invalid_argument);
    EventStream wrong(4, RngStream(4, 0));
    CHECK_THROWS(advance(s, 2.0, Parametrization::rotation, wrong));
}

TEST_CASE("split horizons replay the single run bit for bit") {
    std::vector<double> v{0.3, -1.2, 2.0, 0.7, -0.1, 1.1};
    SystemState a(v), b(v);
    EventStream ea(v.size(), RngStream(5, 0)), eb(v.size(), RngStream(5, 0));
    advance(a, 7.0, Parametrization::polar, ea);
    for (double t : {0.5, 1.0, 3.3, 7.0}) advance(b, t, Parametrization::polar, eb);
    CHECK(a.velocities == b.velocities);
    CHECK(a.events == b.events);
}

TEST_CASE("Kac sphere samples") {
    RngStream rng(6, 0);
    for (int k = 0; k < 100; ++k) {
        const auto x = sample_kac_sphere(1, 1.0, rng);
        REQUIRE(std::abs(x[0]) == 1.0);
        const auto y = sample_kac_sphere(17, 2.5, rng);
        REQUIRE(std::abs(mean_energy(y) - 2.5) <= 1e-12 * 2.5);
    }
    // Archimedes: one coordinate of the 2-sphere of radius sqrt(3) is uniform.
    std::vector<double> first(100000);
    for (double& x : first) x = sample_kac_sphere(3, 1.0, rng)[0];
    const double r = std::sqrt(3.0);
    const double d = testing::ks_statistic(first, [r](double x) { return (x + r) / (2 * r); });
    CHECK(d < testing::ks_critical_1pct(first.size()));
    CHECK_THROWS(sample_kac_sphere(0, 1.0, rng));
    CHECK_THROWS(sample_kac_sphere(3, 0.0, rng));
}

TEST_CASE("parametrizations agree in law for N=10 at t=1") {
    const std::size_t reps = 20000;
    std::vector<double> rot(reps), pol(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        RngStream init(7, r);
        std::vector<double> v(10);
        for (double& x : v) x = init.normal();
        SystemState a(v), b(v);
        EventStream ea(10, RngStream(8, r)), eb(10, RngStream(9, r));
        advance(a, 1.0, Parametrization::rotation, ea);
        advance(b, 1.0, Parametrization::polar, eb);
        rot[r] = a.velocities[0];
        pol[r] = b.velocities[0];
    }
    const auto w = testing::two_sample_w1(rot, pol);
    CHECK(w.w1 <= 3 * w.se);
}

TEST_CASE("Kac sphere start is stationary") {
    const std::size_t reps = 20000;
    std::vector<double> t0(reps), t10(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        RngStream init(10, r);
        SystemState s(sample_kac_sphere(8, 1.0, init));
        t0[r] = s.velocities[0];
        EventStream events(8, RngStream(11, r));
        advance(s, 10.0, Parametrization::polar, events);
        t10[r] = s.velocities[0];
    }
    const auto w = testing::two_sample_w1(t0, t10);
    CHECK(w.w1 <= 3 * w.se);
}

TEST_CASE("fourth moment stays bounded for an initial law with finite 8th moment") {
    const auto law = InitialLaw::student_like(10.0);
    RngStream init(12, 0);
    std::vector<double> v(20000);
    for (double& x : v) x = law.sample(init);
    SystemState s(v);
    EventStream events(v.size(), RngStream(12, 1));
    auto m4 = [&] {
        double acc = 0.0;
        for (double x : s.velocities) acc += x * x * x * x;
        return acc / static_cast<double>(s.size());
    };
    const double e = mean_energy(v);
    const double bound = std::max(m4(), 3 * e * e) * 1.1;
    for (double t = 5.0; t <= 50.0; t += 5.0) {
        advance(s, t, Parametrization::polar, events);
        CHECK(m4() <= bound);
    }
}

TEST_CASE("snapshots round-trip exactly") {
    std::vector<double> v{0.1, -1e-300, 3.141592653589793, -2.718281828459045e10, 0.0};
    std::stringstream ss;
    write_snapshot(ss, v);
    CHECK(read_snapshot(ss) == v);
}

TEST_CASE("parametrization names") {
    CHECK(parse_parametrization("rotation") == Parametrization::rotation);
    CHECK(parse_parametrization("polar") == Parametrization::polar);
    CHECK(to_string(Parametrization::polar) == "polar");
    CHECK_THROWS(parse_parametrization("spin"));
}
