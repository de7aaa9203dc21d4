#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "lossres/stable.hpp"
#include "lossres/triangle.hpp"
#include "lossres/tweedie.hpp"

namespace lossres {

/// Additive background risk model across lines of business. Cell (i, j) in
/// line k is X^(k) = a^(k) Y^(k) + b^(k) Z with independent idiosyncratic
/// Y^(k) and a common shock Z shared across lines, drawn fresh per cell.
///
/// Tweedie family:  Y^(k) ~ Tw_p(eta_i nu_j, gamma_k), Z ~ Tw_p(alpha, beta),
///   a^(k) = 1, b^(k)_{i,j} = (alpha / (eta_i nu_j))^(1-p) gamma_k / beta,
///   which aligns the canonical parameters so the sum stays Tweedie.
/// Stable family:   Y^(k) ~ S_alpha(eta_i nu_j, gamma_k, 1),
///   Z ~ S_alpha(mu, sigma, 1), a = b = 1.
struct AbrmSpec {
    enum class Family { tweedie, stable };

    Family family = Family::tweedie;
    double shape = 2.0;  // Tweedie power p or stable tail alpha

    std::vector<DevelopmentPattern> lines;
    std::vector<std::string> line_names;  // optional; defaults to line1, line2, ...

    // Common-shock parameters. For Tweedie: (mean, dispersion) of Z; for
    // stable: (location, scale) of Z with beta = 1.
    bool has_systematic = false;
    double sys_a = 0.0;
    double sys_b = 0.0;

    Eigen::Index n_lines() const { return static_cast<Eigen::Index>(lines.size()); }
    Eigen::Index n_ay() const { return lines.empty() ? 0 : lines[0].eta.size(); }
    Eigen::Index n_dy() const { return lines.empty() ? 0 : lines[0].nu.size(); }
    std::string line_name(Eigen::Index k) const;
};

void validate(const AbrmSpec& spec);

/// Shock loading b^(k)_{i,j}. 1 for the stable family; the canonical-parameter
/// alignment above for Tweedie. Zero when the spec has no systematic part.
double loading_b(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j, Eigen::Index k);

/// Exact marginal law of cell (i, j) in line k for the Tweedie family:
/// with B = (alpha/(eta nu))^(2-p) gamma/beta + 1,
///   X ~ Tw_p(eta nu B, gamma B^(1-p)).
/// The dispersion follows from convolving the aligned components; see the
/// gamma special case where shapes add at a common scale.
TweedieParams tweedie_abrm_marginal(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                                    Eigen::Index k);

/// Marginal for the stable family:
///   S_alpha(eta nu + mu, (gamma^alpha + sigma^alpha)^(1/alpha), 1).
StableParams stable_abrm_marginal(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                                  Eigen::Index k);

/// Mean of cell (i, j) in line k (requires alpha > 1 in the stable family).
double abrm_cell_mean(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j, Eigen::Index k);

/// Joint MGF E[exp(<tau, X_{i,j}>)] as the product
/// prod_k M_{Y(k)}(tau_k a^(k)) * M_Z(<tau, b_{i,j}>).
/// Stable components are evaluated through the negated variable and require
/// tau <= 0 componentwise; Tweedie components must stay below their abscissae.
double joint_mgf(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                 const Eigen::VectorXd& tau);

/// One draw of the cell vector across lines: a o Y + b Z.
Eigen::VectorXd abrm_sample_cell(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j,
                                 RngStream& rng);

/// Simulates one triangle per line on the mask of `like` (per line).
std::vector<Triangle> simulate_abrm(const AbrmSpec& spec, RngStream& rng,
                                    const std::vector<Triangle>& like);
std::vector<Triangle> simulate_abrm(const AbrmSpec& spec, RngStream& rng);

/// Per-AY expected outstanding claims for line k: the sum of marginal cell
/// means over unobserved cells. Refuses stable specs with alpha <= 1 (no mean).
Eigen::VectorXd abrm_outstanding_mean(const AbrmSpec& spec, Eigen::Index k,
                                      const Triangle& tri);

}  // namespace lossres
