#include "lossres/tweedie.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lossres {

bool tweedie_power_supported(double p) {
    return p == 0.0 || (p >= 1.0 && p <= 2.0);
}

void validate(const TweedieParams& params) {
    if (!tweedie_power_supported(params.p)) {
        throw std::invalid_argument("tweedie: power p = " + std::to_string(params.p) +
                                    " unsupported; need p = 0 or 1 <= p <= 2");
    }
    if (!(params.sigma2 > 0.0)) {
        throw std::invalid_argument("tweedie: dispersion sigma2 must be > 0");
    }
    if (params.p >= 1.0 && !(params.mu > 0.0)) {
        throw std::invalid_argument("tweedie: mean must be > 0 for p >= 1");
    }
}

double kappa_p(double theta, double p) {
    if (!tweedie_power_supported(p)) {
        throw std::invalid_argument("kappa_p: unsupported power " + std::to_string(p));
    }
    if (p == 2.0 && !(theta < 0.0)) {
        throw std::domain_error("kappa_p: p = 2 requires theta < 0");
    }
    if (p > 1.0 && p < 2.0 && theta > 0.0) {
        throw std::domain_error("kappa_p: p in (1,2) requires theta <= 0");
    }
    // At theta = 0 with p in (1,2) the power is 0^alpha with alpha < 0; IEEE
    // pow returns +inf, which is the correct limit of the cumulant there.
    return kappa_p_unchecked(theta, p);
}

double tweedie_theta(double mu, double p) {
    if (p == 1.0) return std::log(mu);
    return std::pow(mu, 1.0 - p) / (1.0 - p);
}

double tweedie_mgf_abscissa(const TweedieParams& params) {
    if (params.p <= 1.0) return std::numeric_limits<double>::infinity();
    return -tweedie_theta(params.mu, params.p) / params.sigma2;
}

double tweedie_log_mgf(const TweedieParams& params, double tau) {
    validate(params);
    if (tau == 0.0) return 0.0;
    const double theta = tweedie_theta(params.mu, params.p);
    const double shifted = theta + tau * params.sigma2;
    if (params.p == 2.0 && !(shifted < 0.0)) {
        throw std::domain_error("tweedie_mgf: tau beyond convergence abscissa (p = 2)");
    }
    if (params.p > 1.0 && params.p < 2.0 && shifted > 0.0) {
        throw std::domain_error("tweedie_mgf: tau beyond convergence abscissa");
    }
    return (kappa_p_unchecked(shifted, params.p) - kappa_p_unchecked(theta, params.p)) /
           params.sigma2;
}

double tweedie_mgf(const TweedieParams& params, double tau) {
    return std::exp(tweedie_log_mgf(params, tau));
}

std::complex<double> tweedie_cf(const TweedieParams& params, double t) {
    validate(params);
    if (t == 0.0) return {1.0, 0.0};
    const std::complex<double> theta(tweedie_theta(params.mu, params.p), 0.0);
    const std::complex<double> shifted = theta + std::complex<double>(0.0, t * params.sigma2);
    return std::exp((kappa_p_unchecked(shifted, params.p) -
                     kappa_p_unchecked(theta, params.p)) /
                    params.sigma2);
}

double tweedie_sample(const TweedieParams& params, RngStream& rng) {
    validate(params);
    const double p = params.p;
    if (p == 0.0) return rng.normal(params.mu, std::sqrt(params.sigma2));
    if (p == 1.0) {
        // Reproductive form: sigma2 * Poisson(mu / sigma2).
        return params.sigma2 * static_cast<double>(rng.poisson(params.mu / params.sigma2));
    }
    if (p == 2.0) return rng.gamma(1.0 / params.sigma2, params.mu * params.sigma2);
    const double lambda = tweedie_zero_rate(params);
    const double shape = (2.0 - p) / (p - 1.0);
    const double scale = params.sigma2 * (p - 1.0) * std::pow(params.mu, p - 1.0);
    const std::uint64_t n = rng.poisson(lambda);
    if (n == 0) return 0.0;
    // Sum of n iid gammas with common scale is gamma with stacked shape.
    return rng.gamma(shape * static_cast<double>(n), scale);
}

double tweedie_zero_rate(const TweedieParams& params) {
    if (!(params.p > 1.0 && params.p < 2.0)) {
        throw std::invalid_argument("tweedie_zero_rate: requires 1 < p < 2");
    }
    return std::pow(params.mu, 2.0 - params.p) / (params.sigma2 * (2.0 - params.p));
}

}  // namespace lossres
