#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "kac/rng.hpp"

namespace kac {

/// Standard normal quantile.
double normal_quantile(double u);
/// Quantile of Z^2 for Z standard normal (chi-square, one degree).
double chi_square1_quantile(double u);

/// Partial moments of a centred normal law with standard deviation sigma:
/// entry [k (max_power+1) + j] is the integral of Q(u)^j over
/// [k/cells, (k+1)/cells]. With `squared`, Q is the quantile of X^2.
std::vector<double> gaussian_cell_moments(double sigma, std::size_t cells, int max_power, bool squared);

/// Initial one-particle law f_0 used by the experiments.
///
/// Text form (as accepted on the command line):
///   gaussian:<energy>       centred normal with variance <energy>
///   uniform:<a>,<b>         uniform on [a, b]
///   student-like:<p>        symmetric density proportional to (1+|v|)^-(p+1),
///                           truncated at |v| <= 1e6; moments of order < p
class InitialLaw {
public:
    enum class Kind { gaussian, uniform, student_like };

    static InitialLaw gaussian(double energy);
    static InitialLaw uniform(double a, double b);
    static InitialLaw student_like(double tail_index, double cutoff = 1e6);
    /// Throws std::invalid_argument on malformed text.
    static InitialLaw parse(std::string_view text);

    Kind kind() const noexcept { return kind_; }
    std::string to_string() const;

    double sample(RngStream& rng) const;
    double quantile(double u) const;
    /// E|X|^p
    double abs_moment(double p) const;
    double energy() const { return abs_moment(2.0); }
    /// Same layout as gaussian_cell_moments.
    std::vector<double> cell_moments(std::size_t cells, int max_power) const;
    bool symmetric() const noexcept;

private:
    InitialLaw(Kind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}

    double abs_quantile_student(double u) const;

    Kind kind_;
    // gaussian: a_ = energy; uniform: [a_, b_]; student_like: a_ = tail index, b_ = cutoff
    double a_;
    double b_;
};

}  // namespace kac
