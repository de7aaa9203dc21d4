#pragma once

#include <complex>
#include <limits>

#include "lossres/rng.hpp"

namespace lossres {

/// Reproductive Tweedie parameters: mean mu, dispersion sigma2, variance
/// function V(mu) = mu^p. Supported powers are p = 0 (normal), p = 1
/// (scaled Poisson), 1 < p < 2 (compound Poisson-gamma) and p = 2 (gamma).
struct TweedieParams {
    double p = 2.0;
    double mu = 1.0;
    double sigma2 = 1.0;
};

/// Throws std::invalid_argument unless p lies in {0} U [1, 2], sigma2 > 0,
/// and mu > 0 for the positive-mean families (p >= 1).
void validate(const TweedieParams& params);

bool tweedie_power_supported(double p);

/// Cumulant generator kappa_p. Templated on the scalar so the characteristic
/// function can reuse it with complex arguments.
///
/// With alpha = (p-2)/(p-1):
///   kappa_p(theta) = ((alpha-1)/alpha) * (theta/(alpha-1))^alpha   p != 1, 2
///   kappa_p(theta) = exp(theta)                                     p = 1
///   kappa_p(theta) = -log(-theta)                                   p = 2
template <class Scalar>
Scalar kappa_p_unchecked(Scalar theta, double p) {
    using std::exp;
    using std::log;
    using std::pow;
    if (p == 1.0) return exp(theta);
    if (p == 2.0) return -log(-theta);
    const double alpha = (p - 2.0) / (p - 1.0);
    return (alpha - 1.0) / alpha * pow(theta / (alpha - 1.0), alpha);
}

/// Real kappa_p with natural-domain checking: theta < 0 for p = 2,
/// theta <= 0 for p in (1,2), unrestricted for p in {0, 1}.
double kappa_p(double theta, double p);

/// Canonical parameter theta = g(mu) = (kappa_p')^{-1}(mu):
/// mu^(1-p)/(1-p) for p != 1, log(mu) for p = 1.
double tweedie_theta(double mu, double p);

/// Supremum of tau for which the MGF is finite: 1/(mu*sigma2) for p = 2,
/// mu^(1-p)/((p-1)*sigma2) for p in (1,2), +infinity for p in {0, 1}.
/// Exposed so quadrature grids can be validated against it.
double tweedie_mgf_abscissa(const TweedieParams& params);

/// E[exp(tau X)] = exp{ (kappa_p(g(mu)+tau*sigma2) - kappa_p(g(mu))) / sigma2 }.
/// Throws std::domain_error beyond the convergence abscissa.
double tweedie_mgf(const TweedieParams& params, double tau);

/// log of tweedie_mgf, evaluated without the outer exp.
double tweedie_log_mgf(const TweedieParams& params, double tau);

/// E[exp(i t X)], defined for all real t.
std::complex<double> tweedie_cf(const TweedieParams& params, double t);

/// One draw with population mean mu and variance sigma2 * mu^p.
/// Normal for p = 0, scaled Poisson for p = 1, compound Poisson-gamma for
/// 1 < p < 2, gamma for p = 2.
double tweedie_sample(const TweedieParams& params, RngStream& rng);

/// Poisson rate of the compound Poisson-gamma representation,
/// lambda = mu^(2-p) / (sigma2 * (2-p)); the probability of an exact zero
/// is exp(-lambda). Requires 1 < p < 2.
double tweedie_zero_rate(const TweedieParams& params);

}  // namespace lossres
