#include "lossres/fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>

#include "lossres/parallel.hpp"
#include "lossres/stable.hpp"

namespace lossres {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogLo = -23.02585092994046;  // log(1e-10)
constexpr double kLogHi = 23.02585092994046;   // log(1e10)
}  // namespace

// --- parameter layout --------------------------------------------------------

Eigen::Index ParameterLayout::size() const {
    return n_lines * (n_ay + (n_dy - 1) + 1) + (has_systematic ? 2 : 0);
}

std::vector<std::string> ParameterLayout::names(const AbrmSpec& spec) const {
    std::vector<std::string> out;
    const Eigen::Index pinned = pin == PinMode::nu1 ? 0 : -1;
    for (Eigen::Index k = 0; k < n_lines; ++k) {
        const std::string tag = n_lines > 1 ? "." + spec.line_name(k) : "";
        for (Eigen::Index i = 0; i < n_ay; ++i) {
            if (pin == PinMode::eta1 && i == 0) continue;
            out.push_back("eta[" + std::to_string(i + 1) + "]" + tag);
        }
        for (Eigen::Index j = 0; j < n_dy; ++j) {
            if (j == pinned) continue;
            out.push_back("nu[" + std::to_string(j + 1) + "]" + tag);
        }
        out.push_back("gamma" + tag);
    }
    if (has_systematic) {
        out.push_back("sys_a");
        out.push_back("sys_b");
    }
    return out;
}

Eigen::VectorXd ParameterLayout::pack(const AbrmSpec& spec) const {
    Eigen::VectorXd out(size());
    Eigen::Index pos = 0;
    for (Eigen::Index k = 0; k < n_lines; ++k) {
        const auto& line = spec.lines[k];
        for (Eigen::Index i = 0; i < n_ay; ++i) {
            if (pin == PinMode::eta1 && i == 0) continue;
            out[pos++] = line.eta[i];
        }
        for (Eigen::Index j = 0; j < n_dy; ++j) {
            if (pin == PinMode::nu1 && j == 0) continue;
            out[pos++] = line.nu[j];
        }
        out[pos++] = line.gamma;
    }
    if (has_systematic) {
        out[pos++] = spec.sys_a;
        out[pos++] = spec.sys_b;
    }
    return out;
}

AbrmSpec ParameterLayout::unpack(const Eigen::VectorXd& theta, const AbrmSpec& templ) const {
    if (theta.size() != size()) throw std::invalid_argument("layout: theta size mismatch");
    AbrmSpec spec = templ;
    Eigen::Index pos = 0;
    for (Eigen::Index k = 0; k < n_lines; ++k) {
        auto& line = spec.lines[k];
        line.eta.resize(n_ay);
        line.nu.resize(n_dy);
        for (Eigen::Index i = 0; i < n_ay; ++i) {
            line.eta[i] = (pin == PinMode::eta1 && i == 0) ? 1.0 : theta[pos++];
        }
        for (Eigen::Index j = 0; j < n_dy; ++j) {
            line.nu[j] = (pin == PinMode::nu1 && j == 0) ? 1.0 : theta[pos++];
        }
        line.gamma = theta[pos++];
    }
    if (has_systematic) {
        spec.has_systematic = true;
        spec.sys_a = theta[pos++];
        spec.sys_b = theta[pos++];
    }
    return spec;
}

ParameterLayout ParameterLayout::infer(const AbrmSpec& spec, PinMode pin) {
    ParameterLayout layout;
    layout.n_lines = spec.n_lines();
    layout.n_ay = spec.n_ay();
    layout.n_dy = spec.n_dy();
    layout.has_systematic = spec.has_systematic;
    layout.pin = pin;
    return layout;
}

// --- chain-ladder seeding ----------------------------------------------------

DevelopmentPattern initial_pattern_from_cl(const Triangle& tri, AbrmSpec::Family family,
                                           double shape) {
    const ChainLadderResult cl = chain_ladder(tri);
    const Eigen::Index n = tri.n_ay(), m = tri.n_dy();

    // Incremental development proportions implied by the factors.
    Eigen::VectorXd cum_frac(m);
    cum_frac[m - 1] = 1.0;
    for (Eigen::Index j = m - 1; j > 0; --j) {
        cum_frac[j - 1] = cum_frac[j] / std::max(cl.dev_factors[j - 1], 1e-12);
    }
    Eigen::VectorXd pi(m);
    pi[0] = cum_frac[0];
    for (Eigen::Index j = 1; j < m; ++j) pi[j] = cum_frac[j] - cum_frac[j - 1];
    for (Eigen::Index j = 0; j < m; ++j) pi[j] = std::max(pi[j], 1e-10);

    Eigen::VectorXd ultimate(n);
    for (Eigen::Index i = 0; i < n; ++i) ultimate[i] = cl.completed.values.row(i).sum();

    DevelopmentPattern pattern;
    pattern.eta = ultimate * pi[0];
    pattern.nu = pi / pi[0];
    pattern.eta = pattern.eta.cwiseMax(1e-8);

    // Scale seed from residuals against the fitted means.
    std::vector<double> abs_resid;
    double pearson = 0.0;
    Eigen::Index n_obs = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!tri.observed(i, j)) continue;
            const double mean = pattern.mean(i, j);
            const double r = tri.values(i, j) - mean;
            abs_resid.push_back(std::fabs(r));
            if (family == AbrmSpec::Family::tweedie) {
                pearson += r * r / std::pow(mean, shape);
            }
            ++n_obs;
        }
    }
    const Eigen::Index dof = std::max<Eigen::Index>(n_obs - (n + m - 1), 1);
    if (family == AbrmSpec::Family::tweedie) {
        pattern.gamma = std::max(pearson / static_cast<double>(dof), 1e-8);
    } else {
        // Median absolute residual, calibrated by the unit-scale family's own
        // median |S_alpha(0, 1, 1)| and inflated for the fitted degrees of
        // freedom (in-sample residuals understate the scale).
        std::sort(abs_resid.begin(), abs_resid.end());
        const double mad = abs_resid.empty() ? 1.0 : abs_resid[abs_resid.size() / 2];
        RngStream unit_rng(424242, 0);
        std::vector<double> unit(20000);
        for (auto& x : unit) x = std::fabs(stable_sample({shape, 0.0, 1.0, 1.0}, unit_rng));
        std::nth_element(unit.begin(), unit.begin() + unit.size() / 2, unit.end());
        const double mad_unit = std::max(unit[unit.size() / 2], 1e-8);
        const double dof_inflation =
            std::sqrt(static_cast<double>(n_obs) / static_cast<double>(dof));
        pattern.gamma = std::max(mad / mad_unit * dof_inflation, 1e-8);
    }
    return pattern;
}

// --- automatic quadrature grid -----------------------------------------------

QuadratureGrid auto_mgf_grid(const AbrmSpec& seed, const std::vector<Triangle>& tris,
                             Eigen::Index q_per_line, KernelForm form,
                             std::string* shrink_note) {
    const Eigen::Index n_lines = seed.n_lines();
    double max_mean = 0.0;
    double min_abscissa = kInf;
    for (Eigen::Index k = 0; k < n_lines; ++k) {
        for (Eigen::Index i = 0; i < seed.n_ay(); ++i) {
            for (Eigen::Index j = 0; j < seed.n_dy(); ++j) {
                if (!tris[k].observed(i, j)) continue;
                max_mean = std::max(max_mean, abrm_cell_mean(seed, i, j, k));
                if (form == KernelForm::wick) {
                    min_abscissa =
                        std::min(min_abscissa, AbrmCellTransform(seed, i, j).mgf_abscissa());
                }
            }
        }
    }
    if (!(max_mean > 0.0)) throw std::invalid_argument("auto grid: no observed cells");
    double t_max = 3.0 / max_mean;
    if (form == KernelForm::wick && std::isfinite(min_abscissa) && t_max > 0.45 * min_abscissa) {
        t_max = 0.45 * min_abscissa;
        if (shrink_note) {
            *shrink_note = "grid shrunk to t_max = " + std::to_string(t_max) +
                           " to keep the Wick kernel below half the MGF abscissa";
        }
    }
    if (q_per_line <= 0) q_per_line = n_lines == 1 ? 64 : 8;
    const GridConcentration conc =
        n_lines == 1 ? GridConcentration::uniform : GridConcentration::log_spaced;
    return make_mgf_grid(t_max, q_per_line, n_lines, conc);
}

// --- cellwise CGMM objective ---------------------------------------------------

namespace {

struct CellIndex {
    Eigen::Index i, j;
};

/// Bound CGMM objective over the joint cells of a triangle set. Observations
/// and their exponentials on the grid are fixed; model transforms are rebuilt
/// from theta on every evaluation. Evaluation is const and thread-safe.
class CellwiseCgmm {
public:
    CellwiseCgmm(const std::vector<Triangle>& tris, const AbrmSpec& templ, CgmmConfig config,
                 ParameterLayout layout)
        : tris_(&tris), templ_(templ), config_(std::move(config)), layout_(layout) {
        const Eigen::Index n_lines = templ_.n_lines();
        if (static_cast<Eigen::Index>(tris.size()) != n_lines) {
            throw std::invalid_argument("fit_cgmm: triangle count does not match spec lines");
        }
        for (Eigen::Index k = 1; k < n_lines; ++k) {
            if (tris[k].observed != tris[0].observed) {
                throw std::invalid_argument("fit_cgmm: joint fitting requires identical masks");
            }
        }
        for (Eigen::Index i = 0; i < tris[0].n_ay(); ++i) {
            for (Eigen::Index j = 0; j < tris[0].n_dy(); ++j) {
                if (tris[0].observed(i, j)) cells_.push_back({i, j});
            }
        }
        if (cells_.empty()) throw std::invalid_argument("fit_cgmm: no observed cells");

        const Eigen::Index q = config_.grid.size();
        exp_table_.resize(cells_.size(), q);
        obs_.resize(cells_.size());
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            Eigen::VectorXd x(n_lines);
            for (Eigen::Index k = 0; k < n_lines; ++k) {
                x[k] = tris[k].values(cells_[c].i, cells_[c].j);
            }
            obs_[c] = x;
            for (Eigen::Index r = 0; r < q; ++r) {
                exp_table_(c, r) = std::exp(config_.grid.points.row(r).dot(x));
            }
        }
        build_deps();
    }

    Eigen::Index n_cells() const { return static_cast<Eigen::Index>(cells_.size()); }
    const std::vector<std::vector<int>>& deps() const { return deps_; }
    const CgmmConfig& config() const { return config_; }
    const ParameterLayout& layout() const { return layout_; }
    const AbrmSpec& spec_template() const { return templ_; }

    /// Builds and eigendecomposes the per-cell kernels at theta_ref once, so
    /// objective evaluations against the frozen weighting reduce to one
    /// projection per cell.
    void freeze_kernels(const Eigen::VectorXd& theta_ref) {
        const AbrmSpec spec = layout_.unpack(theta_ref, templ_);
        frozen_.resize(cells_.size());
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            AbrmCellTransform tr(spec, cells_[c].i, cells_[c].j);
            const KernelMatrix k = kernel_matrix(tr, config_.grid, config_.kernel_form);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.entries);
            FrozenCell fc;
            fc.d = es.eigenvalues().cwiseMax(0.0);
            fc.proj = es.eigenvectors().transpose() * k.sqrt_weights.asDiagonal();
            fc.lam = config_.lambda * k.scale;
            frozen_[c] = std::move(fc);
        }
    }

    bool kernels_frozen() const { return !frozen_.empty(); }

    /// Contributions of the cells in `idx`; false on a domain failure.
    bool eval_cells(const Eigen::VectorXd& theta, const std::vector<int>& idx,
                    double* out) const {
        AbrmSpec spec;
        try {
            spec = layout_.unpack(theta, templ_);
            validate(spec);
        } catch (const std::exception&) {
            return false;
        }
        const Eigen::Index q = config_.grid.size();
        Eigen::VectorXd h(q);
        Eigen::VectorXd arg(config_.grid.n_lines());
        for (std::size_t n = 0; n < idx.size(); ++n) {
            const auto& cell = cells_[idx[n]];
            AbrmCellTransform tr(spec, cell.i, cell.j);
            try {
                for (Eigen::Index r = 0; r < q; ++r) {
                    arg = config_.grid.points.row(r);
                    h[r] = exp_table_(idx[n], r) - tr.mgf(arg);
                }
                if (!frozen_.empty()) {
                    const FrozenCell& fc = frozen_[idx[n]];
                    if (!(fc.lam > 0.0) || !std::isfinite(fc.lam)) {
                        out[n] = 0.0;
                    } else {
                        const Eigen::VectorXd p = fc.proj * h;
                        double acc = 0.0;
                        for (Eigen::Index r = 0; r < q; ++r) {
                            if (fc.d[r] > 0.0) {
                                const double den = fc.d[r] + fc.lam;
                                acc += fc.d[r] * p[r] * p[r] / (den * den);
                            }
                        }
                        out[n] = acc;
                    }
                } else {
                    const KernelMatrix k = kernel_matrix(tr, config_.grid, config_.kernel_form);
                    out[n] = regularized_norm_standardized(k, h, config_.lambda);
                }
            } catch (const std::exception&) {
                return false;
            }
            if (!std::isfinite(out[n])) return false;
        }
        return true;
    }

    double eval_total(const Eigen::VectorXd& theta, Eigen::VectorXd* cell_vals) const {
        Eigen::VectorXd vals(n_cells());
        if (!eval_cells(theta, all_cells_, vals.data())) return kInf;
        if (cell_vals) *cell_vals = vals;
        return vals.sum() * config_.objective_scale;
    }

    const std::vector<int>& all_cells() const { return all_cells_; }

private:
    void build_deps() {
        const Eigen::Index n_lines = layout_.n_lines;
        const Eigen::Index n = layout_.n_ay, m = layout_.n_dy;
        deps_.assign(layout_.size(), {});
        all_cells_.resize(cells_.size());
        for (std::size_t c = 0; c < cells_.size(); ++c) all_cells_[c] = static_cast<int>(c);

        std::vector<std::vector<int>> by_row(n), by_col(m);
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            by_row[cells_[c].i].push_back(static_cast<int>(c));
            by_col[cells_[c].j].push_back(static_cast<int>(c));
        }
        Eigen::Index pos = 0;
        for (Eigen::Index k = 0; k < n_lines; ++k) {
            for (Eigen::Index i = 0; i < n; ++i) {
                if (layout_.pin == PinMode::eta1 && i == 0) continue;
                deps_[pos++] = by_row[i];
            }
            for (Eigen::Index j = 0; j < m; ++j) {
                if (layout_.pin == PinMode::nu1 && j == 0) continue;
                deps_[pos++] = by_col[j];
            }
            deps_[pos++] = all_cells_;  // gamma of line k
        }
        if (layout_.has_systematic) {
            deps_[pos++] = all_cells_;
            deps_[pos++] = all_cells_;
        }
    }

    const std::vector<Triangle>* tris_;
    AbrmSpec templ_;
    CgmmConfig config_;
    ParameterLayout layout_;
    std::vector<CellIndex> cells_;
    std::vector<Eigen::VectorXd> obs_;
    Eigen::MatrixXd exp_table_;
    std::vector<std::vector<int>> deps_;
    std::vector<int> all_cells_;

    struct FrozenCell {
        Eigen::MatrixXd proj;  // V^T D^{1/2}
        Eigen::VectorXd d;     // clipped eigenvalues
        double lam = 0.0;      // lambda * kernel scale
    };
    std::vector<FrozenCell> frozen_;
};

// --- box-constrained BFGS in log-parameter space -------------------------------

struct BfgsOutcome {
    Eigen::VectorXd z;
    double f = kInf;
    bool converged = false;
    int iterations = 0;
};

class LogSpaceProblem {
public:
    LogSpaceProblem(const CellwiseCgmm& obj, double anchor_weight, Eigen::VectorXd z_anchor)
        : obj_(&obj), anchor_weight_(anchor_weight), z_anchor_(std::move(z_anchor)) {}

    /// The anchor penalty is quoted relative to the objective magnitude at
    /// the anchor, so its strength is invariant to objective_scale and to
    /// the kernel normalization.
    void set_anchor_reference(double f_ref) { f_ref_ = std::max(std::fabs(f_ref), 1e-300); }

    double full(const Eigen::VectorXd& z, Eigen::VectorXd* cell_vals) const {
        const double base = obj_->eval_total(z.array().exp(), cell_vals);
        return base + penalty(z);
    }

    /// Objective at a single-coordinate perturbation of the base point,
    /// recomputing only the cells that depend on that coordinate.
    double perturbed(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& base_cells,
                     double base_cell_sum) const {
        const auto& dep = obj_->deps()[k];
        std::vector<double> vals(dep.size());
        if (!obj_->eval_cells(z.array().exp(), dep, vals.data())) return kInf;
        double sum = base_cell_sum;
        for (std::size_t n = 0; n < dep.size(); ++n) sum += vals[n] - base_cells[dep[n]];
        return sum * obj_->config().objective_scale + penalty(z);
    }

    double penalty(const Eigen::VectorXd& z) const {
        if (anchor_weight_ <= 0.0) return 0.0;
        return anchor_weight_ * f_ref_ * (z - z_anchor_).squaredNorm();
    }

    Eigen::Index dim() const { return z_anchor_.size(); }

private:
    const CellwiseCgmm* obj_;
    double anchor_weight_;
    Eigen::VectorXd z_anchor_;
    double f_ref_ = 1.0;
};

BfgsOutcome bfgs_minimize(const LogSpaceProblem& problem, Eigen::VectorXd z,
                          const OptimizerSettings& opt) {
    const Eigen::Index d = problem.dim();
    const double step = opt.grad_step;

    BfgsOutcome out;
    Eigen::VectorXd cells;
    double f = problem.full(z, &cells);
    if (!std::isfinite(f)) {
        throw std::invalid_argument("optimizer: infeasible initial point");
    }
    double cell_sum = cells.sum();

    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd grad(d), grad_prev(d), z_prev(d);
    bool have_prev = false;
    int slow_progress = 0;

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        out.iterations = iter;
        for (Eigen::Index k = 0; k < d; ++k) {
            Eigen::VectorXd zp = z;
            zp[k] += step;
            const double fp = problem.perturbed(zp, static_cast<int>(k), cells, cell_sum);
            zp[k] = z[k] - step;
            const double fm = problem.perturbed(zp, static_cast<int>(k), cells, cell_sum);
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                // One-sided fallback at a domain edge.
                grad[k] = std::isfinite(fp) ? (fp - f) / step
                          : std::isfinite(fm) ? (f - fm) / step
                                              : 0.0;
            } else {
                grad[k] = (fp - fm) / (2.0 * step);
            }
        }
        if (grad.lpNorm<Eigen::Infinity>() <= 1e-9 * std::max(1.0, std::fabs(f))) {
            out.converged = true;
            break;
        }

        if (have_prev) {
            const Eigen::VectorXd s = z - z_prev;
            const Eigen::VectorXd y = grad - grad_prev;
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
                const Eigen::VectorXd hy = h_inv * y;
                const double yhy = y.dot(hy);
                h_inv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                         (hy * s.transpose() + s * hy.transpose()) / sy;
            }
        }

        Eigen::VectorXd dir = -(h_inv * grad);
        if (dir.dot(grad) >= 0.0) {
            h_inv.setIdentity();
            dir = -grad;
        }
        const double dir_norm = dir.lpNorm<Eigen::Infinity>();
        if (dir_norm > 2.0) dir *= 2.0 / dir_norm;  // cap log-space moves

        double t = 1.0;
        double f_new = kInf;
        Eigen::VectorXd z_new, cells_new;
        const double slope = grad.dot(dir);
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            z_new = (z + t * dir).cwiseMax(kLogLo).cwiseMin(kLogHi);
            f_new = problem.full(z_new, &cells_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            out.converged = true;  // no descent direction makes progress
            break;
        }

        z_prev = z;
        grad_prev = grad;
        have_prev = true;
        const double decrease = f - f_new;
        z = z_new;
        f = f_new;
        cells = cells_new;
        cell_sum = cells.sum();
        if (decrease <= opt.rel_tol * std::max(1.0, std::fabs(f))) {
            if (++slow_progress >= 2) {
                out.converged = true;
                break;
            }
        } else {
            slow_progress = 0;
        }
    }
    out.z = z;
    out.f = f;
    return out;
}

}  // namespace

// --- public CGMM entry points ---------------------------------------------------

namespace {

void require_positive_cells(const std::vector<Triangle>& tris, const AbrmSpec& templ) {
    if (templ.family == AbrmSpec::Family::tweedie && templ.shape < 1.0) return;
    // Compound Poisson-gamma losses (1 <= p < 2) carry an atom at zero, so
    // exact zeros are valid observations there; the gamma boundary and the
    // positive-location stable families require strictly positive cells.
    const bool zeros_ok = templ.family == AbrmSpec::Family::tweedie && templ.shape < 2.0;
    for (std::size_t k = 0; k < tris.size(); ++k) {
        for (Eigen::Index i = 0; i < tris[k].n_ay(); ++i) {
            for (Eigen::Index j = 0; j < tris[k].n_dy(); ++j) {
                if (!tris[k].observed(i, j)) continue;
                const double v = tris[k].values(i, j);
                if (v > 0.0 || (zeros_ok && v == 0.0)) continue;
                throw std::invalid_argument(
                    "fitting requires " +
                    std::string(zeros_ok ? "nonnegative" : "strictly positive") +
                    " increments; cell (" + std::to_string(i + 1) + ", " +
                    std::to_string(j + 1) + ") of line " + std::to_string(k + 1) + " is not");
            }
        }
    }
}

AbrmSpec seed_spec(const std::vector<Triangle>& tris, const AbrmSpec& templ) {
    AbrmSpec seed = templ;
    seed.lines.clear();
    double mean_level = 0.0, gamma_level = 0.0;
    for (const auto& tri : tris) {
        DevelopmentPattern p = initial_pattern_from_cl(tri, templ.family, templ.shape);
        mean_level += p.eta.mean() * p.nu.mean();
        gamma_level += p.gamma;
        seed.lines.push_back(std::move(p));
    }
    mean_level /= static_cast<double>(tris.size());
    gamma_level /= static_cast<double>(tris.size());
    if (templ.has_systematic) {
        seed.has_systematic = true;
        // The common shock is seeded as a small perturbation of the cell
        // level; the data decides how much weight it actually carries.
        seed.sys_a = std::max(0.01 * mean_level, 1e-6);
        seed.sys_b = std::max(templ.family == AbrmSpec::Family::tweedie ? gamma_level
                                                                        : 0.5 * gamma_level,
                              1e-8);
    }
    return seed;
}

}  // namespace

FitResult fit_cgmm(const std::vector<Triangle>& tris, const AbrmSpec& spec_template,
                   CgmmConfig config, const OptimizerSettings& opt, std::uint64_t seed,
                   PinMode pin) {
    const auto t_start = std::chrono::steady_clock::now();
    if (tris.empty()) throw std::invalid_argument("fit_cgmm: no data");
    require_positive_cells(tris, spec_template);

    FitResult result;
    AbrmSpec init =
        opt.seed_from_template ? spec_template : seed_spec(tris, spec_template);
    if (opt.seed_from_template) validate(init);
    if (config.grid.size() == 0) {
        std::string note;
        config.grid =
            auto_mgf_grid(init, tris, config.auto_q_per_line, config.kernel_form, &note);
        if (!note.empty()) result.diagnostics.push_back(note);
    }
    if (config.objective_scale == 1.0 && init.n_lines() > 1) config.objective_scale = 1e6;
    validate(config);

    const ParameterLayout layout = ParameterLayout::infer(init, pin);
    CellwiseCgmm objective(tris, init, config, layout);
    const Eigen::VectorXd theta0 = layout.pack(init);

    // The weighting kernel is always frozen while the optimizer runs: the
    // objective with a kernel rebuilt at every candidate theta is not
    // coercive in the scale direction (inflating the model variance deflates
    // the standardized misfit without limit). The continuously-updated
    // policy therefore refreshes the kernels at the incumbent estimate
    // between optimization rounds, starting from the chain-ladder seed.
    const int rounds =
        config.kernel_policy == KernelPolicy::continuously_updated ? opt.kernel_refreshes : 1;

    const Eigen::VectorXd z0 = theta0.array().log().max(kLogLo).min(kLogHi);
    LogSpaceProblem problem(objective, opt.anchor_weight, z0);

    Eigen::VectorXd theta_ref = theta0;
    Eigen::VectorXd z_best = z0;
    bool converged = false;
    const int n_starts = std::max(opt.n_starts, 1);
    for (int round = 0; round < rounds; ++round) {
        objective.freeze_kernels(theta_ref);
        if (opt.anchor_weight > 0.0) {
            problem.set_anchor_reference(objective.eval_total(theta0, nullptr));
        }
        const int starts_this_round = round == 0 ? n_starts : 1;
        std::vector<BfgsOutcome> outcomes(starts_this_round);
        std::vector<int> start_failed(starts_this_round, 0);
        const Eigen::VectorXd z_center = round == 0 ? z0 : z_best;
        parallel_for(static_cast<std::size_t>(starts_this_round), opt.threads,
                     [&](std::size_t s) {
                         Eigen::VectorXd z = z_center;
                         if (s > 0) {
                             RngStream rng(seed, s);
                             for (Eigen::Index k = 0; k < z.size(); ++k) {
                                 z[k] += rng.normal(0.0, opt.perturb_sd);
                             }
                         }
                         try {
                             outcomes[s] = bfgs_minimize(problem, z, opt);
                         } catch (const std::exception&) {
                             start_failed[s] = 1;
                         }
                     });
        int best = -1;
        for (int s = 0; s < starts_this_round; ++s) {
            if (start_failed[s]) continue;
            if (best < 0 || outcomes[s].f < outcomes[best].f) best = s;
        }
        if (best < 0) {
            if (round == 0) throw std::invalid_argument("fit_cgmm: every start was infeasible");
            break;  // keep the previous round's estimate
        }
        z_best = outcomes[best].z;
        converged = outcomes[best].converged;
        theta_ref = z_best.array().exp();
    }

    const Eigen::VectorXd theta_hat = z_best.array().exp();
    result.model = layout.unpack(theta_hat, init);
    result.theta_hat = theta_hat;
    result.names = layout.names(init);
    // Reported objective re-evaluates with kernels at theta_hat itself, the
    // value the public objective operation produces for this config.
    if (config.kernel_policy == KernelPolicy::continuously_updated) {
        CellwiseCgmm reporting(tris, init, config, layout);
        result.objective_value = reporting.eval_total(theta_hat, nullptr);
    } else {
        result.objective_value = objective.eval_total(theta_hat, nullptr);
    }
    result.n_starts = n_starts;
    result.converged = converged;
    result.method = "cgmm";
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.config = config;
    return result;
}

double cgmm_objective(const Eigen::VectorXd& theta, const std::vector<Triangle>& tris,
                      const AbrmSpec& spec_template, const CgmmConfig& config, PinMode pin) {
    const ParameterLayout layout = ParameterLayout::infer(spec_template, pin);
    CellwiseCgmm objective(tris, spec_template, config, layout);
    if (config.kernel_policy == KernelPolicy::fixed_at_initial) {
        objective.freeze_kernels(theta);
    }
    return objective.eval_total(theta, nullptr);
}

std::function<double(const Eigen::VectorXd&)> cgmm_objective_functor(
    const std::vector<Triangle>& tris, const AbrmSpec& spec_template, const CgmmConfig& config,
    const Eigen::VectorXd& theta_init, PinMode pin) {
    const ParameterLayout layout = ParameterLayout::infer(spec_template, pin);
    auto objective =
        std::make_shared<CellwiseCgmm>(tris, spec_template, config, layout);
    if (config.kernel_policy == KernelPolicy::fixed_at_initial) {
        objective->freeze_kernels(theta_init);
    }
    return [objective](const Eigen::VectorXd& theta) {
        return objective->eval_total(theta, nullptr);
    };
}

// --- MLE baselines ----------------------------------------------------------------

DevelopmentPattern fit_mle_tweedie_means(const Triangle& tri, double p) {
    const Eigen::Index n = tri.n_ay(), m = tri.n_dy();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (tri.observed(i, j) && !(tri.values(i, j) > 0.0)) {
                throw std::invalid_argument("mle: nonpositive increment at cell (" +
                                            std::to_string(i + 1) + ", " +
                                            std::to_string(j + 1) + ")");
            }
        }
    }
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n), nu = Eigen::VectorXd::Ones(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        double sum = 0.0;
        int cnt = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (tri.observed(i, j)) {
                sum += tri.values(i, j);
                ++cnt;
            }
        }
        if (cnt == 0) throw std::invalid_argument("mle: empty accident year");
        eta[i] = sum / cnt;
    }

    for (int it = 0; it < 20000; ++it) {
        double delta = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            double num = 0.0, den = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!tri.observed(i, j)) continue;
                num += tri.values(i, j) * std::pow(eta[i], 1.0 - p);
                den += std::pow(eta[i], 2.0 - p);
            }
            if (den > 0.0) {
                const double next = num / den;
                delta = std::max(delta, std::fabs(next - nu[j]) / std::max(nu[j], 1e-300));
                nu[j] = next;
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double num = 0.0, den = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (!tri.observed(i, j)) continue;
                num += tri.values(i, j) * std::pow(nu[j], 1.0 - p);
                den += std::pow(nu[j], 2.0 - p);
            }
            const double next = num / den;
            delta = std::max(delta, std::fabs(next - eta[i]) / std::max(eta[i], 1e-300));
            eta[i] = next;
        }
        const double scale = nu[0];
        nu /= scale;
        eta *= scale;
        if (delta < 1e-14) break;
    }
    DevelopmentPattern out;
    out.eta = eta;
    out.nu = nu;
    out.gamma = 1.0;
    return out;
}

FitResult fit_mle_gamma(const Triangle& tri) {
    const auto t_start = std::chrono::steady_clock::now();
    DevelopmentPattern pattern = fit_mle_tweedie_means(tri, 2.0);

    // Profile likelihood in gamma; the mean fit does not depend on it.
    const auto neg_loglik = [&](double log_gamma) {
        const double g = std::exp(log_gamma);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < tri.n_ay(); ++i) {
            for (Eigen::Index j = 0; j < tri.n_dy(); ++j) {
                if (!tri.observed(i, j)) continue;
                const double x = tri.values(i, j);
                const double mean = pattern.mean(i, j);
                const double shape = 1.0 / g;
                const double scale = mean * g;
                ll += (shape - 1.0) * std::log(x) - x / scale - shape * std::log(scale) -
                      std::lgamma(shape);
            }
        }
        return -ll;
    };
    double lo = std::log(1e-8), hi = std::log(1e3);
    const double gr = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = neg_loglik(c), fd = neg_loglik(d);
    for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = neg_loglik(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = neg_loglik(d);
        }
    }
    pattern.gamma = std::exp(0.5 * (a + b));

    FitResult result;
    result.model.family = AbrmSpec::Family::tweedie;
    result.model.shape = 2.0;
    result.model.lines = {pattern};
    const ParameterLayout layout = ParameterLayout::infer(result.model);
    result.theta_hat = layout.pack(result.model);
    result.names = layout.names(result.model);
    result.objective_value = neg_loglik(std::log(pattern.gamma));
    result.n_starts = 1;
    result.converged = true;
    result.method = "mle-gamma";
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

// --- bootstrap ---------------------------------------------------------------------

double quantile(const Eigen::VectorXd& sorted, double level) {
    const Eigen::Index n = sorted.size();
    if (n == 0) throw std::invalid_argument("quantile: empty sample");
    if (n == 1) return sorted[0];
    const double pos = level * static_cast<double>(n - 1);
    const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

SummaryStats summarize(Eigen::VectorXd draws) {
    SummaryStats s;
    const Eigen::Index n = draws.size();
    if (n == 0) throw std::invalid_argument("summarize: empty sample");
    s.mean = draws.mean();
    if (n > 1) {
        s.sd = std::sqrt((draws.array() - s.mean).square().sum() / static_cast<double>(n - 1));
    }
    std::sort(draws.data(), draws.data() + n);
    s.median = quantile(draws, 0.5);
    s.q05 = quantile(draws, 0.05);
    s.q95 = quantile(draws, 0.95);
    s.q99 = quantile(draws, 0.99);
    return s;
}

BootstrapSummary parametric_bootstrap(const FitResult& fitted,
                                      const std::vector<Triangle>& observed, int b_replicates,
                                      const CgmmConfig& config, const OptimizerSettings& opt,
                                      std::uint64_t seed, PinMode pin) {
    if (b_replicates < 2) throw std::invalid_argument("bootstrap: B must be >= 2");
    if (!fitted.converged) throw std::invalid_argument("bootstrap: base fit did not converge");
    validate(fitted.model);
    const Eigen::Index n_lines = fitted.model.n_lines();
    const Eigen::Index n_ay = fitted.model.n_ay();

    struct Replicate {
        bool ok = false;
        Eigen::MatrixXd outstanding;  // n_lines x n_ay
    };
    std::vector<Replicate> reps(b_replicates);

    OptimizerSettings inner = opt;
    inner.threads = 1;
    parallel_for(static_cast<std::size_t>(b_replicates), opt.threads, [&](std::size_t b) {
        RngStream rng(seed, b);
        try {
            const std::vector<Triangle> sim = simulate_abrm(fitted.model, rng, observed);
            FitResult refit;
            if (fitted.method == "mle-gamma") {
                refit = fit_mle_gamma(sim[0]);
            } else {
                refit = fit_cgmm(sim, fitted.model, config, inner,
                                 seed + 1000003ULL * (b + 1), pin);
            }
            Replicate rep;
            rep.outstanding.resize(n_lines, n_ay);
            for (Eigen::Index k = 0; k < n_lines; ++k) {
                rep.outstanding.row(k) = abrm_outstanding_mean(refit.model, k, observed[k]);
            }
            if (!rep.outstanding.allFinite()) return;
            rep.ok = true;
            reps[b] = std::move(rep);
        } catch (const std::exception&) {
            // counted below as a failed replicate
        }
    });

    BootstrapSummary out;
    out.requested = b_replicates;
    std::vector<const Replicate*> good;
    for (const auto& r : reps) {
        if (r.ok) good.push_back(&r);
    }
    out.replicates = static_cast<int>(good.size());
    out.failed = b_replicates - out.replicates;
    if (out.failed * 5 > b_replicates) {
        throw std::runtime_error("bootstrap: more than 20% of replicate fits failed (" +
                                 std::to_string(out.failed) + "/" +
                                 std::to_string(b_replicates) + ")");
    }
    if (out.replicates < 2) throw std::runtime_error("bootstrap: fewer than 2 usable replicates");

    out.replicate_outstanding.assign(n_lines, Eigen::MatrixXd(out.replicates, n_ay));
    for (int b = 0; b < out.replicates; ++b) {
        for (Eigen::Index k = 0; k < n_lines; ++k) {
            out.replicate_outstanding[k].row(b) = good[b]->outstanding.row(k);
        }
    }

    Eigen::MatrixXd combined = Eigen::MatrixXd::Zero(out.replicates, n_ay);
    for (Eigen::Index k = 0; k < n_lines; ++k) combined += out.replicate_outstanding[k];

    out.per_ay.resize(n_ay);
    for (Eigen::Index i = 0; i < n_ay; ++i) out.per_ay[i] = summarize(combined.col(i));
    out.total = summarize(combined.rowwise().sum());
    out.per_line_total.resize(n_lines);
    out.per_line_ay.resize(n_lines);
    for (Eigen::Index k = 0; k < n_lines; ++k) {
        const Eigen::MatrixXd& draws = out.replicate_outstanding[k];
        out.per_line_total[k] = summarize(draws.rowwise().sum());
        out.per_line_ay[k].resize(n_ay);
        for (Eigen::Index i = 0; i < n_ay; ++i) {
            out.per_line_ay[k][i] = summarize(draws.col(i));
        }
    }
    return out;
}

void write_bootstrap_ay_csv(const std::string& path, const BootstrapSummary& summary,
                            const std::vector<std::string>& line_names) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write bootstrap csv: " + path);
    const Eigen::Index n_lines = summary.replicate_outstanding.size();
    const Eigen::Index n_ay =
        n_lines > 0 ? summary.replicate_outstanding[0].cols() : Eigen::Index(0);

    out << "accident_year";
    for (Eigen::Index k = 0; k < n_lines; ++k) {
        const std::string name =
            k < static_cast<Eigen::Index>(line_names.size()) ? line_names[k]
                                                             : "line" + std::to_string(k + 1);
        out << ',' << name << "_mean," << name << "_sd";
    }
    out << ",total_mean,total_sd\n";

    // Cumulative-by-accident-year view of the outstanding reserves.
    std::vector<Eigen::MatrixXd> cum(n_lines);
    for (Eigen::Index k = 0; k < n_lines; ++k) {
        cum[k] = summary.replicate_outstanding[k];
        for (Eigen::Index i = 1; i < n_ay; ++i) cum[k].col(i) += cum[k].col(i - 1);
    }
    char buf[64];
    for (Eigen::Index i = 0; i < n_ay; ++i) {
        out << (i + 1);
        Eigen::VectorXd total = Eigen::VectorXd::Zero(cum.empty() ? 0 : cum[0].rows());
        for (Eigen::Index k = 0; k < n_lines; ++k) {
            const SummaryStats s = summarize(cum[k].col(i));
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", s.mean, s.sd);
            out << buf;
            total += cum[k].col(i);
        }
        const SummaryStats s = summarize(total);
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", s.mean, s.sd);
        out << buf << '\n';
    }
}

}  // namespace lossres
