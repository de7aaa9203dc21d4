#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "lossres/abrm.hpp"
#include "lossres/cgmm.hpp"
#include "lossres/triangle.hpp"

namespace lossres {

/// Which parameter is pinned to 1 for identifiability. Default pins the
/// first development-year factor; pinning the first accident-year level is
/// offered because the paper's single-line tables disagree on the labeling.
enum class PinMode { nu1, eta1 };

/// Flat parameterization of an AbrmSpec for the optimizer: per line
/// eta (n_ay), the free nu entries (the pinned one removed), gamma; then the
/// two systematic parameters when present. All entries are positive and are
/// optimized in log space.
struct ParameterLayout {
    Eigen::Index n_lines = 1;
    Eigen::Index n_ay = 0;
    Eigen::Index n_dy = 0;
    bool has_systematic = false;
    PinMode pin = PinMode::nu1;

    Eigen::Index size() const;
    std::vector<std::string> names(const AbrmSpec& spec) const;
    Eigen::VectorXd pack(const AbrmSpec& spec) const;
    AbrmSpec unpack(const Eigen::VectorXd& theta, const AbrmSpec& templ) const;

    static ParameterLayout infer(const AbrmSpec& spec, PinMode pin = PinMode::nu1);
};

struct OptimizerSettings {
    int n_starts = 8;
    double perturb_sd = 0.2;      // lognormal jitter of the non-first starts
    int max_iter = 400;
    double rel_tol = 1e-10;       // relative objective-decrease stop
    double grad_step = 1e-6;      // central-difference relative step
    double anchor_weight = 0.0;   // quadratic pull toward the initial estimate
    int kernel_refreshes = 1;     // kernel-update rounds under continuously-updated
    bool seed_from_template = false;  // warm-start from the template's own values
    int threads = 0;              // 0 -> hardware concurrency
};

struct FitResult {
    AbrmSpec model;                   // parameters in named form
    Eigen::VectorXd theta_hat;        // flat vector matching `names`
    std::vector<std::string> names;
    double objective_value = 0.0;
    int n_starts = 0;
    bool converged = false;
    double wall_time_seconds = 0.0;   // kept in memory; not serialized
    std::string method;
    std::vector<std::string> diagnostics;
    CgmmConfig config;                // resolved configuration (grid included)
};

/// Chain-ladder-implied multiplicative pattern: eta_i = ultimate_i * pi_1,
/// nu_j = pi_j / pi_1 with pi the chain-ladder incremental proportions.
/// gamma is a Pearson-style moment estimate for Tweedie cells and a median
/// absolute residual for stable cells.
DevelopmentPattern initial_pattern_from_cl(const Triangle& tri, AbrmSpec::Family family,
                                           double shape);

/// Builds the auto quadrature grid used by fit_cgmm: t_max = 3 / (largest
/// cell mean of the seed), uniform with Q = 64 per line for one line,
/// log-concentrated with Q = 8 per line for joint lattices. For the Wick
/// kernel form t_max is shrunk below half the smallest convergence abscissa,
/// and the shrinkage is reported through *shrink_note.
QuadratureGrid auto_mgf_grid(const AbrmSpec& seed, const std::vector<Triangle>& tris,
                             Eigen::Index q_per_line, KernelForm form,
                             std::string* shrink_note);

/// CGMM fit of a (possibly multi-line) ABRM to observed triangles.
/// spec_template fixes family/shape/line shapes and whether a systematic
/// component exists; the numerical entries are re-seeded from chain ladder.
/// If config.grid is empty an automatic grid is built; if objective_scale is
/// left at 1 for a multi-line fit it is raised to 1e6.
FitResult fit_cgmm(const std::vector<Triangle>& tris, const AbrmSpec& spec_template,
                   CgmmConfig config, const OptimizerSettings& opt, std::uint64_t seed,
                   PinMode pin = PinMode::nu1);

/// Exact gamma MLE (Tw_2) of a single line: means by alternating
/// weighted-marginal updates, dispersion by profile likelihood.
FitResult fit_mle_gamma(const Triangle& tri);

/// Mean structure of the Tweedie-p MLE (dispersion-free): alternating
/// closed-form updates eta_i = sum_j x nu^(1-p) / sum_j nu^(2-p) and the
/// symmetric nu update, iterated to convergence, nu1 pinned. At p = 1 the
/// implied reserves coincide with chain ladder.
DevelopmentPattern fit_mle_tweedie_means(const Triangle& tri, double p);

/// The CGMM objective value of a fitted/candidate spec on given data,
/// re-evaluated from scratch (used by tests and the `surface` command).
double cgmm_objective(const Eigen::VectorXd& theta, const std::vector<Triangle>& tris,
                      const AbrmSpec& spec_template, const CgmmConfig& config,
                      PinMode pin = PinMode::nu1);

/// Objective functor over the flat parameter vector, with kernels handled
/// per config.kernel_policy (fixed kernels are built at theta_init).
std::function<double(const Eigen::VectorXd&)> cgmm_objective_functor(
    const std::vector<Triangle>& tris, const AbrmSpec& spec_template, const CgmmConfig& config,
    const Eigen::VectorXd& theta_init, PinMode pin = PinMode::nu1);

struct SummaryStats {
    double mean = 0, median = 0, sd = 0, q05 = 0, q95 = 0, q99 = 0;
};

SummaryStats summarize(Eigen::VectorXd draws);
double quantile(const Eigen::VectorXd& sorted, double level);

struct BootstrapSummary {
    int requested = 0;   // B
    int replicates = 0;  // successful refits
    int failed = 0;

    // Outstanding reserves summed across lines.
    SummaryStats total;
    std::vector<SummaryStats> per_ay;

    // Per line detail, same layout.
    std::vector<SummaryStats> per_line_total;
    std::vector<std::vector<SummaryStats>> per_line_ay;

    // Raw draws behind the summaries: replicate_outstanding[k](b, i) is the
    // refitted expected outstanding of line k, replicate b, accident year i.
    std::vector<Eigen::MatrixXd> replicate_outstanding;
};

/// Parametric bootstrap: simulate B replicate triangle sets from the fitted
/// model on the original masks, refit each with the same configuration, and
/// summarize the refitted outstanding reserves. Failed refits are excluded
/// and counted; more than 20% failures aborts.
BootstrapSummary parametric_bootstrap(const FitResult& fitted,
                                      const std::vector<Triangle>& observed,
                                      int b_replicates, const CgmmConfig& config,
                                      const OptimizerSettings& opt, std::uint64_t seed,
                                      PinMode pin = PinMode::nu1);

/// Table-style export: cumulative-by-accident-year outstanding means and SDs
/// per line and in total, one row per accident year.
void write_bootstrap_ay_csv(const std::string& path, const BootstrapSummary& summary,
                            const std::vector<std::string>& line_names);

}  // namespace lossres
