#include "lossres/stable.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lossres {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

void validate(const StableParams& params) {
    if (!(params.alpha > 0.0 && params.alpha <= 2.0)) {
        throw std::invalid_argument("stable: alpha must lie in (0, 2]");
    }
    if (!(params.sigma > 0.0)) {
        throw std::invalid_argument("stable: sigma must be > 0");
    }
    if (!(params.beta >= -1.0 && params.beta <= 1.0)) {
        throw std::invalid_argument("stable: beta must lie in [-1, 1]");
    }
}

std::complex<double> stable_cf(const StableParams& params, double t) {
    validate(params);
    if (t == 0.0) return {1.0, 0.0};
    const double sgn = t > 0.0 ? 1.0 : -1.0;
    const double mod = std::pow(std::fabs(params.sigma * t), params.alpha);
    std::complex<double> exponent;
    if (params.alpha == 1.0) {
        exponent = -mod * std::complex<double>(
                              1.0, params.beta * (2.0 / kPi) * sgn * std::log(std::fabs(t)));
    } else {
        const double a = std::tan(kPi * params.alpha / 2.0);
        exponent = -mod * std::complex<double>(1.0, -params.beta * sgn * a);
    }
    exponent += std::complex<double>(0.0, t * params.mu);
    return std::exp(exponent);
}

double extreme_stable_log_mgf(const StableParams& params, double tau) {
    validate(params);
    if (params.beta != -1.0) {
        throw std::invalid_argument("extreme_stable_mgf: requires beta = -1");
    }
    if (params.alpha == 1.0) {
        throw std::invalid_argument("extreme_stable_mgf: alpha = 1 is singular");
    }
    if (tau < 0.0) {
        throw std::domain_error("extreme_stable_mgf: tau < 0 has a complex branch");
    }
    if (tau == 0.0) return 0.0;
    const double c = std::cos(params.alpha * kPi / 2.0);
    return params.mu * tau -
           std::pow(params.sigma, params.alpha) * std::pow(tau, params.alpha) / c;
}

double extreme_stable_mgf(const StableParams& params, double tau) {
    return std::exp(extreme_stable_log_mgf(params, tau));
}

double stable_log_mgf_neg(const StableParams& params, double tau) {
    validate(params);
    if (params.beta != 1.0) {
        throw std::invalid_argument("stable_mgf_neg: requires beta = +1");
    }
    if (tau > 0.0) {
        throw std::domain_error("stable_mgf_neg: defined on tau <= 0 only");
    }
    StableParams negated{params.alpha, -params.mu, params.sigma, -1.0};
    return extreme_stable_log_mgf(negated, -tau);
}

double stable_mgf_neg(const StableParams& params, double tau) {
    return std::exp(stable_log_mgf_neg(params, tau));
}

StableParams stable_convolve(const StableParams& p1, const StableParams& p2) {
    validate(p1);
    validate(p2);
    if (p1.alpha != p2.alpha) {
        throw std::invalid_argument("stable_convolve: mismatched alpha");
    }
    const double a = p1.alpha;
    const double s1 = std::pow(p1.sigma, a);
    const double s2 = std::pow(p2.sigma, a);
    StableParams out;
    out.alpha = a;
    out.mu = p1.mu + p2.mu;
    out.sigma = std::pow(s1 + s2, 1.0 / a);
    out.beta = (p1.beta * s1 + p2.beta * s2) / (s1 + s2);
    return out;
}

double stable_sample(const StableParams& params, RngStream& rng) {
    validate(params);
    const double alpha = params.alpha;
    const double beta = params.beta;
    const double u = kPi * (rng.uniform01() - 0.5);
    const double w = rng.exponential();
    double x;
    if (alpha == 1.0) {
        const double h = kPi / 2.0 + beta * u;
        x = (2.0 / kPi) * (h * std::tan(u) -
                           beta * std::log((w * std::cos(u)) / h));
        return params.sigma * x +
               (2.0 / kPi) * beta * params.sigma * std::log(params.sigma) + params.mu;
    }
    const double a = std::tan(kPi * alpha / 2.0);
    const double b = std::atan(beta * a) / alpha;
    const double s = std::pow(1.0 + beta * beta * a * a, 1.0 / (2.0 * alpha));
    x = s * std::sin(alpha * (u + b)) / std::pow(std::cos(u), 1.0 / alpha) *
        std::pow(std::cos(u - alpha * (u + b)) / w, (1.0 - alpha) / alpha);
    return params.sigma * x + params.mu;
}

}  // namespace lossres
