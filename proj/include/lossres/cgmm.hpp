#pragma once

#include <Eigen/Core>
#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "lossres/abrm.hpp"

namespace lossres {

enum class TransformKind { mgf, cf };

/// Covariance form uses the exact second moment of the real MGF conditions,
///   k(s, t) = M(s + t) - M(s) M(t),
/// which is positive semidefinite and defined on the dampened half-line for
/// every supported family. Wick form keeps the characteristic-function shape
/// under tau -> -i tau,
///   k(s, t) = M(s - t) - M(s) M(-t),
/// and needs M beyond the origin, so the grid must stay below half the
/// convergence abscissa; it is unavailable for stable marginals.
enum class KernelForm { covariance, wick };

/// Whether kernels are rebuilt at the current parameter value on every
/// objective evaluation or frozen at an initial estimate.
enum class KernelPolicy { continuously_updated, fixed_at_initial };

enum class GridConcentration { uniform, log_spaced };

/// Quadrature lattice over the transform argument. For MGF conditions the
/// per-line support is [-t_max, 0] (the dampening indicator 1_{tau<0}); for
/// CF conditions it is symmetric [-t_max, t_max]. Weights are trapezoidal
/// and sum to the measure of the support.
struct QuadratureGrid {
    Eigen::MatrixXd points;   // Q_total x n_lines
    Eigen::VectorXd weights;  // Q_total
    double per_line_lo = 0.0;
    double per_line_hi = 0.0;

    // Construction recipe, kept so a grid can be serialized and rebuilt
    // exactly (bootstrap replicates inherit the original grid).
    TransformKind kind = TransformKind::mgf;
    Eigen::Index q_per_line = 0;
    GridConcentration concentration = GridConcentration::uniform;
    double decades = 3.0;

    Eigen::Index n_lines() const { return points.cols(); }
    Eigen::Index size() const { return points.rows(); }
};

/// Uniform (or log-concentrated, for multi-line lattices) grid on
/// [-t_max, 0]^n. The log map tau = -exp(u) spreads `decades` factors of ten
/// and concentrates points near the origin where the conditions carry the
/// most information.
QuadratureGrid make_mgf_grid(double t_max, Eigen::Index q_per_line, Eigen::Index n_lines,
                             GridConcentration conc = GridConcentration::uniform,
                             double decades = 3.0);

/// Symmetric uniform grid on [-t_max, t_max]^n for CF conditions.
QuadratureGrid make_cf_grid(double t_max, Eigen::Index q_per_line, Eigen::Index n_lines);

struct CgmmConfig {
    TransformKind transform = TransformKind::mgf;
    KernelForm kernel_form = KernelForm::covariance;
    KernelPolicy kernel_policy = KernelPolicy::continuously_updated;
    QuadratureGrid grid;                 // empty -> fit_cgmm builds one automatically
    Eigen::Index auto_q_per_line = 0;    // points per line for the automatic grid (0 = default)
    double lambda = 1e-7;
    double objective_scale = 1.0;
    bool pooled = false;  // experimental: one norm over the cell-averaged conditions
};

void validate(const CgmmConfig& config);

/// Model transform of one observation cell (a scalar cell or a cross-line
/// vector). Arguments are in the natural variable; implementations for
/// right-skewed stable losses evaluate through the negated variable
/// internally, so their MGF domain is tau <= 0.
class CellTransform {
public:
    virtual ~CellTransform() = default;
    virtual double mgf(const Eigen::VectorXd& tau) const = 0;
    virtual std::complex<double> cf(const Eigen::VectorXd& t) const = 0;
    /// Supremum of valid componentwise MGF arguments (0 for stable losses).
    virtual double mgf_abscissa() const = 0;
};

class TweedieTransform final : public CellTransform {
public:
    explicit TweedieTransform(TweedieParams params) : params_(params) {}
    double mgf(const Eigen::VectorXd& tau) const override;
    std::complex<double> cf(const Eigen::VectorXd& t) const override;
    double mgf_abscissa() const override;

private:
    TweedieParams params_;
};

class StableTransform final : public CellTransform {
public:
    explicit StableTransform(StableParams params) : params_(params) {}
    double mgf(const Eigen::VectorXd& tau) const override;
    std::complex<double> cf(const Eigen::VectorXd& t) const override;
    double mgf_abscissa() const override { return 0.0; }

private:
    StableParams params_;
};

/// Joint transform of the cell vector (i, j) of an ABRM spec.
class AbrmCellTransform final : public CellTransform {
public:
    AbrmCellTransform(const AbrmSpec& spec, Eigen::Index i, Eigen::Index j)
        : spec_(&spec), i_(i), j_(j) {}
    double mgf(const Eigen::VectorXd& tau) const override;
    std::complex<double> cf(const Eigen::VectorXd& t) const override;
    double mgf_abscissa() const override;

private:
    const AbrmSpec* spec_;
    Eigen::Index i_, j_;
};

/// One moment-condition cell: observed value(s) paired with the bound model
/// transform.
struct CellCondition {
    Eigen::VectorXd x;
    const CellTransform* transform = nullptr;
};

/// Cell-averaged MGF conditions on the grid:
/// h_q = (1/l) sum_cells [ exp(<tau_q, x>) - M_cell(tau_q) ].
Eigen::VectorXd moment_vector(const std::vector<CellCondition>& cells,
                              const QuadratureGrid& grid);

/// CF counterpart, h_q = (1/l) sum [ exp(i <t_q, x>) - phi(t_q) ].
Eigen::VectorXcd moment_vector_cf(const std::vector<CellCondition>& cells,
                                  const QuadratureGrid& grid);

/// Nystroem kernel matrix, symmetrized as D^{1/2} K_raw D^{1/2} with
/// D = diag(weights); the spectrum matches the paper's one-sided weighting.
struct KernelMatrix {
    Eigen::MatrixXd entries;
    Eigen::VectorXd sqrt_weights;
    double scale = 1.0;  // largest raw-kernel diagonal, grid-independent
    Eigen::VectorXd theta_provenance;  // optional bookkeeping
};

struct KernelMatrixCf {
    Eigen::MatrixXcd entries;
    Eigen::VectorXd sqrt_weights;
    double scale = 1.0;
};

/// Model kernel for the MGF conditions of one cell. Throws std::domain_error
/// naming the offending (s, tau) pair when a required argument leaves the
/// transform's domain (possible only in Wick form).
KernelMatrix kernel_matrix(const CellTransform& transform, const QuadratureGrid& grid,
                           KernelForm form);

/// Hermitian kernel for CF conditions, k(s, t) = phi(s - t) - phi(s) phi(-t).
KernelMatrixCf kernel_matrix_cf(const CellTransform& transform, const QuadratureGrid& grid);

/// Empirical i.i.d. estimator of the condition covariance on the grid
/// (real MGF form), for diagnostics and tests.
KernelMatrix empirical_kernel_matrix(const Eigen::VectorXd& sample,
                                     const QuadratureGrid& grid);

/// Symmetric PSD square root by spectral decomposition; negative eigenvalues
/// are clipped to zero. Throws on non-finite entries.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& k);

/// Discretized Tikhonov-regularized CGMM norm
///   || (K + lambda I)^{-1} K^{1/2} D^{1/2} h ||^2,
/// evaluated spectrally: sum_k d_k <v_k, D^{1/2} h>^2 / (d_k + lambda)^2.
/// Decreasing in lambda; equals the diagonal closed form when K is diagonal.
double regularized_norm(const KernelMatrix& k, const Eigen::VectorXd& h, double lambda);
double regularized_norm(const KernelMatrixCf& k, const Eigen::VectorXcd& h, double lambda);

/// Same norm with the kernel standardized to unit maximum (raw) diagonal
/// before regularization and the scaling inverted in the norm, keeping
/// lambda commensurate across cells of very different magnitude and across
/// grid refinements. Equivalent to
///   sum_k d_k <v_k, D^{1/2} h>^2 / (d_k + lambda * scale)^2.
double regularized_norm_standardized(const KernelMatrix& k, const Eigen::VectorXd& h,
                                     double lambda);
double regularized_norm_standardized(const KernelMatrixCf& k, const Eigen::VectorXcd& h,
                                     double lambda);

/// CGMM objective over a set of bound cells: the per-cell sum of standardized
/// regularized norms (or a single pooled norm when config.pooled), times
/// config.objective_scale. When `fixed_kernels` is given it must hold one
/// kernel per cell (or a single pooled kernel) built at the initial estimate.
double cgmm_objective_cells(const std::vector<CellCondition>& cells, const CgmmConfig& config,
                            const std::vector<KernelMatrix>* fixed_kernels = nullptr,
                            const std::vector<KernelMatrixCf>* fixed_kernels_cf = nullptr);

/// Dense two-axis slice of an objective functor for plotting.
struct SurfacePoint {
    double v1, v2, objective;
};

std::vector<SurfacePoint> objective_surface(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& theta_base, Eigen::Index axis1, Eigen::Index axis2,
    const Eigen::VectorXd& values1, const Eigen::VectorXd& values2);

void write_surface_csv(const std::string& path, const std::vector<SurfacePoint>& surface);

}  // namespace lossres
