#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "lossres/rng.hpp"

namespace lossres {

/// Incremental run-off triangle: accident year i (row) by development year j
/// (column). Cells are observed on the upper-left trapezoid i + j <= n_ay + 1
/// (1-based) unless an explicit mask says otherwise.
struct Triangle {
    Eigen::MatrixXd values;                                        // n_ay x n_dy
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;  // same shape

    Eigen::Index n_ay() const { return values.rows(); }
    Eigen::Index n_dy() const { return values.cols(); }
    bool fully_observed() const { return observed.all(); }

    /// Empty triangle with the standard trapezoid mask.
    static Triangle trapezoid(Eigen::Index n_ay, Eigen::Index n_dy);
};

/// Per-line parameters: accident-year levels eta, development pattern nu,
/// scale gamma, and per-cell weights (kept for data fidelity, defaulting to
/// 1 and never estimated). Identifiability pins nu[0] = 1 in fitted output.
struct DevelopmentPattern {
    Eigen::VectorXd eta;
    Eigen::VectorXd nu;
    double gamma = 1.0;
    Eigen::MatrixXd weights;  // empty means all-ones

    double mean(Eigen::Index i, Eigen::Index j) const { return eta[i] * nu[j]; }
};

void validate(const DevelopmentPattern& pattern, Eigen::Index n_ay, Eigen::Index n_dy);

/// Rescales (eta, nu) so that nu[0] = 1, leaving all cell means unchanged.
DevelopmentPattern normalize_nu1(const DevelopmentPattern& pattern);

struct ChainLadderResult {
    Eigen::VectorXd dev_factors;        // n_dy - 1 volume-weighted factors
    Triangle completed;                 // incremental, fully observed
    Eigen::VectorXd outstanding_by_ay;  // projected ultimate - observed to date
    double total_outstanding = 0.0;
};

/// Classical volume-weighted chain ladder on cumulative claims.
/// Throws std::invalid_argument when a needed column has no observed pair of
/// consecutive cumulative values or a zero cumulative denominator.
ChainLadderResult chain_ladder(const Triangle& tri);

/// Marginal cell family used by the single-line simulator.
struct CellFamily {
    enum class Kind { tweedie, stable };
    Kind kind = Kind::tweedie;
    double shape = 2.0;  // Tweedie power p or stable tail alpha (beta = 1)
};

/// Draws each observed cell independently: Tw_p(eta_i nu_j, gamma) or
/// S_alpha(eta_i nu_j, gamma, 1). The mask of `like` decides which cells are
/// drawn; pass Triangle::trapezoid for the standard layout.
Triangle simulate_triangle(const DevelopmentPattern& pattern, const CellFamily& family,
                           RngStream& rng, const Triangle& like);
Triangle simulate_triangle(const DevelopmentPattern& pattern, const CellFamily& family,
                           RngStream& rng);

/// Per accident year, the sum of model means eta_i nu_j + systematic_mean
/// over the unobserved cells of tri.
Eigen::VectorXd outstanding_mean(const DevelopmentPattern& pattern, double systematic_mean,
                                 const Triangle& tri);

// CSV interchange: long format with header
// lob,accident_year,development_year,value (one row per observed cell).

struct NamedTriangle {
    std::string lob;
    Triangle tri;
};

std::vector<NamedTriangle> read_triangles_csv(const std::string& path);
void write_triangles_csv(const std::string& path, const std::vector<NamedTriangle>& tris);

struct PremiumRecord {
    std::string lob;
    int accident_year = 0;
    double premium = 0.0;
};

/// Second optional file, header lob,accident_year,premium.
std::vector<PremiumRecord> read_premiums_csv(const std::string& path);

}  // namespace lossres
