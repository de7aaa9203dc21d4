#pragma once

#include <complex>

#include "lossres/rng.hpp"

namespace lossres {

/// Alpha-stable parameters in the classical (non-continuous-at-alpha-1)
/// parameterization, argument order (tail, location, scale, skew):
///   phi(t) = exp(-|sigma t|^alpha (1 - i beta sign(t) tan(pi alpha/2)) + i t mu)
/// for alpha != 1, with the log-corrected branch at alpha = 1.
struct StableParams {
    double alpha = 2.0;
    double mu = 0.0;
    double sigma = 1.0;
    double beta = 0.0;
};

/// Throws std::invalid_argument unless 0 < alpha <= 2, sigma > 0,
/// -1 <= beta <= 1.
void validate(const StableParams& params);

std::complex<double> stable_cf(const StableParams& params, double t);

/// MGF of an extreme (beta = -1) stable law on tau >= 0:
///   M(tau) = exp(mu tau - sigma^alpha tau^alpha / cos(alpha pi / 2)).
/// Requires alpha != 1 (the cosine vanishes) and throws for tau < 0, where
/// the continuation is complex-valued.
double extreme_stable_mgf(const StableParams& params, double tau);

/// MGF of a beta = +1 loss variable evaluated on tau <= 0 through the
/// negated variable: E[exp(tau X)] = M_{-X}(-tau) with -X extreme stable.
double stable_mgf_neg(const StableParams& params, double tau);

double extreme_stable_log_mgf(const StableParams& params, double tau);
double stable_log_mgf_neg(const StableParams& params, double tau);

/// Law of X1 + X2 for independent stables sharing alpha:
///   mu = mu1 + mu2, sigma = (sigma1^a + sigma2^a)^(1/a),
///   beta = (beta1 sigma1^a + beta2 sigma2^a) / (sigma1^a + sigma2^a).
StableParams stable_convolve(const StableParams& p1, const StableParams& p2);

/// Chambers-Mallows-Stuck draw from S_alpha(mu, sigma, beta).
double stable_sample(const StableParams& params, RngStream& rng);

}  // namespace lossres
