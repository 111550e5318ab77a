#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "kac/distributions.hpp"
#include "support.hpp"

using namespace kac;

TEST_CASE("normal quantile inverts the normal CDF") {
    for (double u : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1 - 1e-9}) {
        const double z = normal_quantile(u);
        CHECK(testing::normal_cdf(z) == doctest::Approx(u).epsilon(1e-12));
        CHECK(normal_quantile(1 - u) == doctest::Approx(-z).epsilon(1e-6));
    }
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK_THROWS_AS(normal_quantile(0.0), std::domain_error);
    CHECK_THROWS_AS(normal_quantile(1.0), std::domain_error);
}

TEST_CASE("chi-square(1) quantile is the square of the half-normal quantile") {
    for (double u : {0.0, 1e-8, 0.1, 0.5, 0.9, 0.999999}) {
        const double z = u == 0.0 ? 0.0 : normal_quantile(0.5 + 0.5 * u);
        CHECK(chi_square1_quantile(u) == doctest::Approx(z * z).epsilon(1e-10));
    }
    CHECK_THROWS(chi_square1_quantile(1.0));
}

TEST_CASE("initial laws parse and print") {
    CHECK(InitialLaw::parse("gaussian:1.5").energy() == doctest::Approx(1.5));
    CHECK(InitialLaw::parse("uniform").energy() == doctest::Approx(1.0));
    CHECK(InitialLaw::parse("uniform:0,1").to_string() == "uniform:0,1");
    CHECK(InitialLaw::parse("student-like:12").to_string() == "student-like:12");
    CHECK(InitialLaw::parse("uniform:0,1").symmetric() == false);
    CHECK(InitialLaw::parse("student-like:12").symmetric());
    CHECK_THROWS(InitialLaw::parse("cauchy"));
    CHECK_THROWS(InitialLaw::parse("uniform:1"));
    CHECK_THROWS(InitialLaw::parse("gaussian:-1"));
    CHECK_THROWS(InitialLaw::parse("uniform:2,1"));
}

TEST_CASE("closed-form moments agree with sampling") {
    for (const auto* text : {"gaussian:2", "uniform:-1,3", "student-like:10"}) {
        const auto law = InitialLaw::parse(text);
        RngStream rng(1, 0);
        std::vector<double> x2(400000), x3(400000);
        for (std::size_t k = 0; k < x2.size(); ++k) {
            const double x = law.sample(rng);
            x2[k] = x * x;
            x3[k] = std::pow(std::abs(x), 3.0);
        }
        const auto m2 = testing::mean_se(x2);
        const auto m3 = testing::mean_se(x3);
        CHECK(std::abs(m2.mean - law.abs_moment(2.0)) < 4 * m2.se);
        CHECK(std::abs(m3.mean - law.abs_moment(3.0)) < 4 * m3.se);
    }
    CHECK(InitialLaw::gaussian(1.0).abs_moment(4.0) == doctest::Approx(3.0));
}

TEST_CASE("quantile is the inverse of sampling") {
    for (const auto* text : {"gaussian:1", "uniform:-1,3", "student-like:6"}) {
        const auto law = InitialLaw::parse(text);
        RngStream rng(2, 0);
        std::vector<double> u(50000);
        for (double& x : u) {
            const double v = law.sample(rng);
            // Position of v in the quantile function by bisection.
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                (law.quantile(mid) < v ? lo : hi) = mid;
            }
            x = lo;
        }
        CHECK(testing::ks_statistic(u, [](double t) { return t; }) < testing::ks_critical_1pct(u.size()));
    }
}

TEST_CASE("cell moments sum to the full moments") {
    const auto g = InitialLaw::gaussian(2.0);
    const auto gm = g.cell_moments(64, 4);
    double m0 = 0, m2 = 0, m4 = 0;
    for (std::size_t k = 0; k < 64; ++k) {
        m0 += gm[k * 5];
        m2 += gm[k * 5 + 2];
        m4 += gm[k * 5 + 4];
    }
    CHECK(m0 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(m2 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m4 == doctest::Approx(12.0).epsilon(1e-12));

    const auto sq = gaussian_cell_moments(std::sqrt(2.0), 33, 2, true);
    double s1 = 0, s2 = 0;
    for (std::size_t k = 0; k < 33; ++k) {
        s1 += sq[k * 3 + 1];
        s2 += sq[k * 3 + 2];
    }
    CHECK(s1 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s2 == doctest::Approx(12.0).epsilon(1e-12));

    const auto t = InitialLaw::student_like(9.0);
    const auto tm = t.cell_moments(7, 2);
    double t2 = 0;
    for (std::size_t k = 0; k < 7; ++k) t2 += tm[k * 3 + 2];
    CHECK(t2 == doctest::Approx(t.abs_moment(2.0)).epsilon(1e-9));
}

TEST_CASE("cell moments agree with direct quadrature of the quantile") {
    for (const auto* text : {"gaussian:1", "uniform:0,1", "student-like:7"}) {
        const auto law = InitialLaw::parse(text);
        const std::size_t cells = 10;
        const auto m = law.cell_moments(cells, 3);
        for (std::size_t k = 1; k + 1 < cells; ++k) {
            for (int j = 0; j <= 3; ++j) {
                auto f = [&](double u) { return std::pow(law.quantile(u), j); };
                const double direct = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                    f, static_cast<double>(k) / cells, static_cast<double>(k + 1) / cells, 10, 1e-14);
                CHECK(m[k * 4 + static_cast<std::size_t>(j)] == doctest::Approx(direct).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("squared Gaussian cell moments agree with direct quadrature") {
    const auto m = gaussian_cell_moments(1.5, 8, 2, true);
    for (std::size_t k = 0; k + 1 < 8; ++k) {
        for (int j = 0; j <= 2; ++j) {
            auto f = [&](double u) { return std::pow(2.25 * chi_square1_quantile(u), j); };
            const double direct = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                f, k / 8.0, (k + 1) / 8.0, 10, 1e-14);
            CHECK(m[k * 3 + static_cast<std::size_t>(j)] == doctest::Approx(direct).epsilon(1e-9));
        }
    }
}
