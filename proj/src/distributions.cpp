#include "kac/distributions.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "kac/format.hpp"

namespace kac {

double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("normal_quantile: u outside (0, 1)");
    if (u < 0.5) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - u));
}

double chi_square1_quantile(double u) {
    if (!(u >= 0.0 && u < 1.0)) throw std::domain_error("chi_square1_quantile: u outside [0, 1)");
    if (u == 0.0) return 0.0;
    const double z = u <= 0.5 ? boost::math::erf_inv(u) : boost::math::erfc_inv(1.0 - u);
    return 2.0 * z * z;
}

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

// z^j phi(z), vanishing at infinity.
double tail_term(double z, int j) {
    if (std::isinf(z)) return 0.0;
    return std::pow(z, j) * kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

}  // namespace

std::vector<double> gaussian_cell_moments(double sigma, std::size_t cells, int max_power, bool squared) {
    if (cells == 0 || max_power < 0) throw std::invalid_argument("gaussian_cell_moments: bad arguments");
    const auto width = static_cast<std::size_t>(max_power) + 1;
    const int top = squared ? 2 * max_power : max_power;
    const auto n = static_cast<double>(cells);
    constexpr double inf = std::numeric_limits<double>::infinity();
    // Standard-normal abscissa of the k-th cell boundary.
    auto boundary = [&](std::size_t k) {
        if (squared) {
            if (k == 0) return 0.0;
            if (k == cells) return inf;
            const double u = static_cast<double>(k) / n;
            return std::numbers::sqrt2 * (u <= 0.5 ? boost::math::erf_inv(u)
                                                   : boost::math::erfc_inv(static_cast<double>(cells - k) / n));
        }
        if (k == 0) return -inf;
        if (k == cells) return inf;
        if (2 * k <= cells) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * static_cast<double>(k) / n);
        return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * static_cast<double>(cells - k) / n);
    };
    std::vector<double> out(cells * width);
    std::vector<double> I(static_cast<std::size_t>(top) + 1);
    double za = boundary(0);
    for (std::size_t k = 0; k < cells; ++k) {
        const double zb = boundary(k + 1);
        // I_j = int_za^zb z^j phi(z) dz by the usual two-step recursion.
        I[0] = squared ? 0.5 / n : 1.0 / n;
        if (top >= 1) I[1] = tail_term(za, 0) - tail_term(zb, 0);
        for (int j = 2; j <= top; ++j)
            I[static_cast<std::size_t>(j)] = (j - 1) * I[static_cast<std::size_t>(j - 2)] +
                                             tail_term(za, j - 1) - tail_term(zb, j - 1);
        for (int j = 0; j <= max_power; ++j) {
            const auto idx = k * width + static_cast<std::size_t>(j);
            if (squared) out[idx] = 2.0 * std::pow(sigma, 2 * j) * I[static_cast<std::size_t>(2 * j)];
            else out[idx] = std::pow(sigma, j) * I[static_cast<std::size_t>(j)];
        }
        za = zb;
    }
    return out;
}

InitialLaw InitialLaw::gaussian(double energy) {
    if (!(energy > 0.0)) throw std::invalid_argument("gaussian f0: energy must be positive");
    return {Kind::gaussian, energy, 0.0};
}

InitialLaw InitialLaw::uniform(double a, double b) {
    if (!(a < b)) throw std::invalid_argument("uniform f0: need a < b");
    return {Kind::uniform, a, b};
}

InitialLaw InitialLaw::student_like(double tail_index, double cutoff) {
    if (!(tail_index > 0.0)) throw std::invalid_argument("student-like f0: tail index must be positive");
    if (!(cutoff > 0.0)) throw std::invalid_argument("student-like f0: cutoff must be positive");
    return {Kind::student_like, tail_index, cutoff};
}

InitialLaw InitialLaw::parse(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    const std::string_view args = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
    if (name == "gaussian") return gaussian(args.empty() ? 1.0 : parse_double(args));
    if (name == "uniform") {
        if (args.empty()) return uniform(-std::sqrt(3.0), std::sqrt(3.0));
        const auto comma = args.find(',');
        if (comma == std::string_view::npos)
            throw std::invalid_argument("uniform f0 expects 'uniform:<a>,<b>'");
        return uniform(parse_double(args.substr(0, comma)), parse_double(args.substr(comma + 1)));
    }
    if (name == "student-like") {
        if (args.empty()) throw std::invalid_argument("student-like f0 expects 'student-like:<p>'");
        return student_like(parse_double(args));
    }
    throw std::invalid_argument("unknown f0 '" + std::string(text) + "'");
}

std::string InitialLaw::to_string() const {
    switch (kind_) {
        case Kind::gaussian: return "gaussian:" + format_double(a_);
        case Kind::uniform: return "uniform:" + format_double(a_) + "," + format_double(b_);
        case Kind::student_like: return "student-like:" + format_double(a_);
    }
    return {};
}

bool InitialLaw::symmetric() const noexcept {
    return kind_ != Kind::uniform || a_ == -b_;
}

double InitialLaw::abs_quantile_student(double u) const {
    // |X| has density p (1+x)^-(p+1) / Z on [0, L], Z = 1 - (1+L)^-p.
    const double z = 1.0 - std::pow(1.0 + b_, -a_);
    return std::pow(1.0 - u * z, -1.0 / a_) - 1.0;
}

double InitialLaw::sample(RngStream& rng) const {
    switch (kind_) {
        case Kind::gaussian: return std::sqrt(a_) * rng.normal();
        case Kind::uniform: return a_ + (b_ - a_) * rng.uniform();
        case Kind::student_like: {
            const double magnitude = abs_quantile_student(rng.uniform());
            return rng.uniform_index(2) == 0 ? magnitude : -magnitude;
        }
    }
    return 0.0;
}

double InitialLaw::quantile(double u) const {
    switch (kind_) {
        case Kind::gaussian: return std::sqrt(a_) * normal_quantile(u);
        case Kind::uniform: return a_ + (b_ - a_) * u;
        case Kind::student_like:
            if (u < 0.5) return -abs_quantile_student(1.0 - 2.0 * u);
            return abs_quantile_student(2.0 * u - 1.0);
    }
    return 0.0;
}

double InitialLaw::abs_moment(double p) const {
    switch (kind_) {
        case Kind::gaussian:
            return std::pow(2.0 * a_, 0.5 * p) * boost::math::tgamma(0.5 * (p + 1.0)) /
                   std::sqrt(std::numbers::pi);
        case Kind::uniform: {
            // E|X|^p = (sgn(b)|b|^(p+1) - sgn(a)|a|^(p+1)) / ((p+1)(b-a))
            auto prim = [p](double x) { return std::copysign(std::pow(std::abs(x), p + 1.0), x); };
            return (prim(b_) - prim(a_)) / ((p + 1.0) * (b_ - a_));
        }
        case Kind::student_like: {
            // Substituting 1 + x = e^s keeps the integrand smooth over the long tail.
            const double tail = a_;
            const double z = 1.0 - std::pow(1.0 + b_, -tail);
            auto integrand = [tail, p](double s) {
                return std::pow(std::expm1(s), p) * tail * std::exp(-tail * s);
            };
            const double upper = std::log1p(b_);
            return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                       integrand, 0.0, upper, 15, 1e-12) /
                   z;
        }
    }
    return 0.0;
}

std::vector<double> InitialLaw::cell_moments(std::size_t cells, int max_power) const {
    if (cells == 0 || max_power < 0) throw std::invalid_argument("cell_moments: bad arguments");
    if (kind_ == Kind::gaussian) return gaussian_cell_moments(std::sqrt(a_), cells, max_power, false);
    const auto width = static_cast<std::size_t>(max_power) + 1;
    const auto n = static_cast<double>(cells);
    std::vector<double> out(cells * width);
    auto edge = [&](std::size_t k) {
        if (k == 0) return kind_ == Kind::uniform ? a_ : -b_;
        if (k == cells) return b_;
        return quantile(static_cast<double>(k) / n);
    };
    if (kind_ == Kind::uniform) {
        for (std::size_t k = 0; k < cells; ++k) {
            const double lo = edge(k), hi = edge(k + 1);
            out[k * width] = 1.0 / n;
            for (int j = 1; j <= max_power; ++j)
                out[k * width + static_cast<std::size_t>(j)] =
                    (std::pow(hi, j + 1) - std::pow(lo, j + 1)) / ((j + 1) * (b_ - a_));
        }
        return out;
    }
    // Student-like: integrate y^j against the |X| density between |x| = alpha and beta.
    const double tail = a_;
    const double z = 1.0 - std::pow(1.0 + b_, -tail);
    auto half = [&](double alpha, double beta, int j) {
        if (!(beta > alpha)) return 0.0;
        auto integrand = [tail, j](double s) { return std::pow(std::expm1(s), j) * tail * std::exp(-tail * s); };
        return 0.5 / z *
               boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, std::log1p(alpha),
                                                                              std::log1p(beta), 15, 1e-13);
    };
    for (std::size_t k = 0; k < cells; ++k) {
        const double lo = edge(k), hi = edge(k + 1);
        out[k * width] = 1.0 / n;
        for (int j = 1; j <= max_power; ++j) {
            double m = 0.0;
            if (lo < 0.0) m += (j % 2 ? -1.0 : 1.0) * half(std::max(0.0, -hi), -lo, j);
            if (hi > 0.0) m += half(std::max(0.0, lo), hi, j);
            out[k * width + static_cast<std::size_t>(j)] = m;
        }
    }
    return out;
}

}  // namespace kac
