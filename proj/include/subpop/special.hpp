#pragma once
#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <numbers>

namespace subpop {

inline double digamma(double x) { return Eigen::numext::digamma(x); }

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) { return Eigen::numext::igamma(a, x); }

/// ln Gamma_p(a) = p(p-1)/4 ln(pi) + sum_{j=1..p} ln Gamma(a + (1 - j)/2)
inline double log_multigamma(int p, double a) {
    double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
    for (int j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * (1 - j));
    return out;
}

/// sum_{j=1..p} psi(a + (1 - j)/2)
inline double multi_digamma(int p, double a) {
    double out = 0;
    for (int j = 1; j <= p; ++j) out += digamma(a + 0.5 * (1 - j));
    return out;
}

} // namespace subpop
