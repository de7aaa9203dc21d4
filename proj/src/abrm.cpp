#include "lossres/abrm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lossres {

std::string AbrmSpec::line_name(Eigen::Index k) const {
    if (k < static_cast<Eigen::Index>(line_names.size()) && !line_names[k].empty()) {
        return line_names[k];
    }
    return "line" + std::to_string(k + 1);
}

void validate(const AbrmSpec& spec) {
    if (spec.lines.empty()) throw std::invalid_argument("abrm: spec has no lines");
    if (spec.family == AbrmSpec::Family::tweedie) {
        if (!tweedie_power_supported(spec.shape)) {
            throw std::invalid_argument("abrm: unsupported Tweedie power");
        }
    } else {
        if (!(spec.shape > 0.0 && spec.shape <= 2.0)) {
            throw std::invalid_argument("abrm: stable alpha must lie in (0, 2]");
        }
    }
    const Eigen::Index n = spec.n_ay(), m = spec.n_dy();
    for (const auto& line : spec.lines) validate(line, n, m);
    if (spec.has_systematic) {
        if (!(spec.sys_a > 0.0) || !(spec.sys_b > 0.0)) {
            throw std::invalid_argument("abrm: systematic parameters must be > 0");
        }
    }
}

double loading_b(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    if (!spec.has_systematic) return 0.0;
    if (spec.family == AbrmSpec::Family::stable) return 1.0;
    const auto& line = spec.lines[k];
    return std::pow(spec.sys_a / line.mean(i, j), 1.0 - spec.shape) * line.gamma / spec.sys_b;
}

namespace {

// Bracket term of the Tweedie marginal, (alpha/(eta nu))^(2-p) gamma/beta + 1.
double tweedie_bracket(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    if (!spec.has_systematic) return 1.0;
    const auto& line = spec.lines[k];
    return std::pow(spec.sys_a / line.mean(i, j), 2.0 - spec.shape) * line.gamma / spec.sys_b +
           1.0;
}

}  // namespace

TweedieParams tweedie_abrm_marginal(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                                    Eigen::Index k) {
    if (spec.family != AbrmSpec::Family::tweedie) {
        throw std::invalid_argument("tweedie_abrm_marginal: spec family is not tweedie");
    }
    const auto& line = spec.lines[k];
    const double bracket = tweedie_bracket(spec, i, j, k);
    return {spec.shape, line.mean(i, j) * bracket,
            line.gamma * std::pow(bracket, 1.0 - spec.shape)};
}

StableParams stable_abrm_marginal(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                                  Eigen::Index k) {
    if (spec.family != AbrmSpec::Family::stable) {
        throw std::invalid_argument("stable_abrm_marginal: spec family is not stable");
    }
    const auto& line = spec.lines[k];
    if (!spec.has_systematic) return {spec.shape, line.mean(i, j), line.gamma, 1.0};
    const double a = spec.shape;
    const double scale =
        std::pow(std::pow(line.gamma, a) + std::pow(spec.sys_b, a), 1.0 / a);
    return {a, line.mean(i, j) + spec.sys_a, scale, 1.0};
}

double abrm_cell_mean(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    if (spec.family == AbrmSpec::Family::tweedie) {
        return spec.lines[k].mean(i, j) * tweedie_bracket(spec, i, j, k);
    }
    if (spec.shape <= 1.0) {
        throw std::invalid_argument("abrm: stable mean undefined for alpha <= 1");
    }
    return spec.lines[k].mean(i, j) + (spec.has_systematic ? spec.sys_a : 0.0);
}

double joint_mgf(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                 const Eigen::VectorXd& tau) {
    if (tau.size() != spec.n_lines()) {
        throw std::invalid_argument("joint_mgf: tau dimension mismatch");
    }
    double log_mgf = 0.0;
    double shock_arg = 0.0;
    for (Eigen::Index k = 0; k < spec.n_lines(); ++k) {
        const auto& line = spec.lines[k];
        if (tau[k] != 0.0) {
            if (spec.family == AbrmSpec::Family::tweedie) {
                log_mgf += tweedie_log_mgf({spec.shape, line.mean(i, j), line.gamma}, tau[k]);
            } else {
                log_mgf += stable_log_mgf_neg({spec.shape, line.mean(i, j), line.gamma, 1.0}, tau[k]);
            }
        }
        shock_arg += tau[k] * loading_b(spec, i, j, k);
    }
    if (spec.has_systematic && shock_arg != 0.0) {
        if (spec.family == AbrmSpec::Family::tweedie) {
            log_mgf += tweedie_log_mgf({spec.shape, spec.sys_a, spec.sys_b}, shock_arg);
        } else {
            log_mgf += stable_log_mgf_neg({spec.shape, spec.sys_a, spec.sys_b, 1.0}, shock_arg);
        }
    }
    return std::exp(log_mgf);
}

Eigen::VectorXd abrm_sample_cell(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                                 RngStream& rng) {
    Eigen::VectorXd x(spec.n_lines());
    double z = 0.0;
    if (spec.has_systematic) {
        if (spec.family == AbrmSpec::Family::tweedie) {
            z = tweedie_sample({spec.shape, spec.sys_a, spec.sys_b}, rng);
        } else {
            z = stable_sample({spec.shape, spec.sys_a, spec.sys_b, 1.0}, rng);
        }
    }
    for (Eigen::Index k = 0; k < spec.n_lines(); ++k) {
        const auto& line = spec.lines[k];
        double y;
        if (spec.family == AbrmSpec::Family::tweedie) {
            y = tweedie_sample({spec.shape, line.mean(i, j), line.gamma}, rng);
        } else {
            y = stable_sample({spec.shape, line.mean(i, j), line.gamma, 1.0}, rng);
        }
        x[k] = y + loading_b(spec, i, j, k) * z;
    }
    return x;
}

std::vector<Triangle> simulate_abrm(const AbrmSpec& spec, RngStream& rng,
                                    const std::vector<Triangle>& like) {
    validate(spec);
    if (static_cast<Eigen::Index>(like.size()) != spec.n_lines()) {
        throw std::invalid_argument("simulate_abrm: mask count does not match lines");
    }
    std::vector<Triangle> out(like.size());
    for (std::size_t k = 0; k < like.size(); ++k) {
        out[k].values = Eigen::MatrixXd::Zero(like[k].n_ay(), like[k].n_dy());
        out[k].observed = like[k].observed;
    }
    for (Eigen::Index i = 0; i < spec.n_ay(); ++i) {
        for (Eigen::Index j = 0; j < spec.n_dy(); ++j) {
            bool any = false;
            for (const auto& t : like) any = any || t.observed(i, j);
            if (!any) continue;
            const Eigen::VectorXd x = abrm_sample_cell(spec, i, j, rng);
            for (std::size_t k = 0; k < like.size(); ++k) {
                if (like[k].observed(i, j)) out[k].values(i, j) = x[k];
            }
        }
    }
    return out;
}

std::vector<Triangle> simulate_abrm(const AbrmSpec& spec, RngStream& rng) {
    std::vector<Triangle> like(spec.n_lines(), Triangle::trapezoid(spec.n_ay(), spec.n_dy()));
    return simulate_abrm(spec, rng, like);
}

Eigen::VectorXd abrm_outstanding_mean(const AbrmSpec& spec, Eigen::Index k,
                                      const Triangle& tri) {
    if (spec.family == AbrmSpec::Family::stable && spec.shape <= 1.0) {
        throw std::invalid_argument("abrm_outstanding_mean: stable alpha <= 1 has no mean");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(tri.n_ay());
    for (Eigen::Index i = 0; i < tri.n_ay(); ++i) {
        for (Eigen::Index j = 0; j < tri.n_dy(); ++j) {
            if (!tri.observed(i, j)) out[i] += abrm_cell_mean(spec, i, j, k);
        }
    }
    return out;
}

}  // namespace lossres
