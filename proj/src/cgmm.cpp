#include "lossres/cgmm.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace lossres {

namespace {

Eigen::MatrixXd lattice_product(const Eigen::MatrixXd& per_line_points,
                                Eigen::VectorXd per_line_weights, Eigen::Index n_lines,
                                Eigen::VectorXd* weights_out) {
    const Eigen::Index q = per_line_points.rows();
    Eigen::Index total = 1;
    for (Eigen::Index k = 0; k < n_lines; ++k) total *= q;
    Eigen::MatrixXd pts(total, n_lines);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(total);
    for (Eigen::Index r = 0; r < total; ++r) {
        Eigen::Index rem = r;
        for (Eigen::Index k = n_lines - 1; k >= 0; --k) {
            const Eigen::Index idx = rem % q;
            rem /= q;
            pts(r, k) = per_line_points(idx, 0);
            w[r] *= per_line_weights[idx];
        }
    }
    *weights_out = w;
    return pts;
}

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& points) {
    const Eigen::Index q = points.size();
    Eigen::VectorXd w(q);
    if (q == 1) {
        w[0] = 1.0;
        return w;
    }
    w[0] = 0.5 * (points[1] - points[0]);
    w[q - 1] = 0.5 * (points[q - 1] - points[q - 2]);
    for (Eigen::Index i = 1; i + 1 < q; ++i) w[i] = 0.5 * (points[i + 1] - points[i - 1]);
    return w;
}

}  // namespace

QuadratureGrid make_mgf_grid(double t_max, Eigen::Index q_per_line, Eigen::Index n_lines,
                             GridConcentration conc, double decades) {
    if (!(t_max > 0.0)) throw std::invalid_argument("make_mgf_grid: t_max must be > 0");
    if (q_per_line < 2) throw std::invalid_argument("make_mgf_grid: need at least 2 points");
    Eigen::VectorXd pts(q_per_line);
    if (conc == GridConcentration::uniform) {
        for (Eigen::Index i = 0; i < q_per_line; ++i) {
            pts[i] = -t_max + t_max * static_cast<double>(i) / (q_per_line - 1);
        }
    } else {
        // tau = -exp(u), u uniform; |dtau| = exp(u) du.
        const double u_hi = std::log(t_max);
        const double u_lo = u_hi - decades * std::log(10.0);
        for (Eigen::Index i = 0; i < q_per_line; ++i) {
            const double u = u_lo + (u_hi - u_lo) * static_cast<double>(i) / (q_per_line - 1);
            pts[i] = -std::exp(u);
        }
        std::sort(pts.data(), pts.data() + q_per_line);
    }
    Eigen::VectorXd w = trapezoid_weights(pts);
    QuadratureGrid grid;
    grid.per_line_lo = -t_max;
    grid.per_line_hi = 0.0;
    grid.kind = TransformKind::mgf;
    grid.q_per_line = q_per_line;
    grid.concentration = conc;
    grid.decades = decades;
    if (n_lines == 1) {
        grid.points = pts;
        grid.weights = w;
    } else {
        grid.points = lattice_product(pts, w, n_lines, &grid.weights);
    }
    return grid;
}

QuadratureGrid make_cf_grid(double t_max, Eigen::Index q_per_line, Eigen::Index n_lines) {
    if (!(t_max > 0.0)) throw std::invalid_argument("make_cf_grid: t_max must be > 0");
    if (q_per_line < 2) throw std::invalid_argument("make_cf_grid: need at least 2 points");
    Eigen::VectorXd pts(q_per_line);
    for (Eigen::Index i = 0; i < q_per_line; ++i) {
        pts[i] = -t_max + 2.0 * t_max * static_cast<double>(i) / (q_per_line - 1);
    }
    Eigen::VectorXd w = trapezoid_weights(pts);
    QuadratureGrid grid;
    grid.per_line_lo = -t_max;
    grid.per_line_hi = t_max;
    grid.kind = TransformKind::cf;
    grid.q_per_line = q_per_line;
    if (n_lines == 1) {
        grid.points = pts;
        grid.weights = w;
    } else {
        grid.points = lattice_product(pts, w, n_lines, &grid.weights);
    }
    return grid;
}

void validate(const CgmmConfig& config) {
    if (!(config.lambda > 0.0)) throw std::invalid_argument("cgmm: lambda must be > 0");
    if (!(config.objective_scale >= 1.0)) {
        throw std::invalid_argument("cgmm: objective_scale must be >= 1");
    }
    if (config.grid.size() == 0) throw std::invalid_argument("cgmm: empty quadrature grid");
    if (config.transform == TransformKind::mgf && config.grid.per_line_hi > 0.0) {
        throw std::invalid_argument("cgmm: MGF dampening requires support in (-inf, 0]");
    }
}

// --- transforms -----------------------------------------------------------

namespace {
void expect_scalar(const Eigen::VectorXd& tau) {
    if (tau.size() != 1) {
        throw std::invalid_argument("transform: expected a one-dimensional argument");
    }
}
}  // namespace

double TweedieTransform::mgf(const Eigen::VectorXd& tau) const {
    expect_scalar(tau);
    return tweedie_mgf(params_, tau[0]);
}

std::complex<double> TweedieTransform::cf(const Eigen::VectorXd& t) const {
    expect_scalar(t);
    return tweedie_cf(params_, t[0]);
}

double TweedieTransform::mgf_abscissa() const { return tweedie_mgf_abscissa(params_); }

double StableTransform::mgf(const Eigen::VectorXd& tau) const {
    expect_scalar(tau);
    return stable_mgf_neg(params_, tau[0]);
}

std::complex<double> StableTransform::cf(const Eigen::VectorXd& t) const {
    expect_scalar(t);
    return stable_cf(params_, t[0]);
}

double AbrmCellTransform::mgf(const Eigen::VectorXd& tau) const {
    return joint_mgf(*spec_, i_, j_, tau);
}

std::complex<double> AbrmCellTransform::cf(const Eigen::VectorXd& t) const {
    if (t.size() != spec_->n_lines()) {
        throw std::invalid_argument("abrm cf: argument dimension mismatch");
    }
    std::complex<double> out(1.0, 0.0);
    double shock_arg = 0.0;
    for (Eigen::Index k = 0; k < spec_->n_lines(); ++k) {
        const auto& line = spec_->lines[k];
        if (spec_->family == AbrmSpec::Family::tweedie) {
            out *= tweedie_cf({spec_->shape, line.mean(i_, j_), line.gamma}, t[k]);
        } else {
            out *= stable_cf({spec_->shape, line.mean(i_, j_), line.gamma, 1.0}, t[k]);
        }
        shock_arg += t[k] * loading_b(*spec_, i_, j_, k);
    }
    if (spec_->has_systematic && shock_arg != 0.0) {
        if (spec_->family == AbrmSpec::Family::tweedie) {
            out *= tweedie_cf({spec_->shape, spec_->sys_a, spec_->sys_b}, shock_arg);
        } else {
            out *= stable_cf({spec_->shape, spec_->sys_a, spec_->sys_b, 1.0}, shock_arg);
        }
    }
    return out;
}

double AbrmCellTransform::mgf_abscissa() const {
    if (spec_->family == AbrmSpec::Family::stable) return 0.0;
    double a = std::numeric_limits<double>::infinity();
    double b_sum = 0.0;
    for (Eigen::Index k = 0; k < spec_->n_lines(); ++k) {
        const auto& line = spec_->lines[k];
        a = std::min(a, tweedie_mgf_abscissa({spec_->shape, line.mean(i_, j_), line.gamma}));
        b_sum += loading_b(*spec_, i_, j_, k);
    }
    if (spec_->has_systematic && b_sum > 0.0) {
        a = std::min(a, tweedie_mgf_abscissa({spec_->shape, spec_->sys_a, spec_->sys_b}) / b_sum);
    }
    return a;
}

// --- moment conditions -----------------------------------------------------

Eigen::VectorXd moment_vector(const std::vector<CellCondition>& cells,
                              const QuadratureGrid& grid) {
    if (cells.empty()) throw std::invalid_argument("moment_vector: empty data");
    Eigen::VectorXd h = Eigen::VectorXd::Zero(grid.size());
    for (const auto& cell : cells) {
        for (Eigen::Index q = 0; q < grid.size(); ++q) {
            const Eigen::VectorXd tau = grid.points.row(q);
            h[q] += std::exp(tau.dot(cell.x)) - cell.transform->mgf(tau);
        }
    }
    return h / static_cast<double>(cells.size());
}

Eigen::VectorXcd moment_vector_cf(const std::vector<CellCondition>& cells,
                                  const QuadratureGrid& grid) {
    if (cells.empty()) throw std::invalid_argument("moment_vector_cf: empty data");
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(grid.size());
    for (const auto& cell : cells) {
        for (Eigen::Index q = 0; q < grid.size(); ++q) {
            const Eigen::VectorXd t = grid.points.row(q);
            h[q] += std::exp(std::complex<double>(0.0, t.dot(cell.x))) - cell.transform->cf(t);
        }
    }
    return h / static_cast<double>(cells.size());
}

// --- kernels ---------------------------------------------------------------

KernelMatrix kernel_matrix(const CellTransform& transform, const QuadratureGrid& grid,
                           KernelForm form) {
    const Eigen::Index q = grid.size();
    Eigen::VectorXd singles(q), singles_neg;
    for (Eigen::Index p = 0; p < q; ++p) singles[p] = transform.mgf(grid.points.row(p));

    Eigen::MatrixXd raw(q, q);
    if (form == KernelForm::covariance) {
        for (Eigen::Index p = 0; p < q; ++p) {
            for (Eigen::Index r = p; r < q; ++r) {
                const Eigen::VectorXd sum = grid.points.row(p) + grid.points.row(r);
                const double val = transform.mgf(sum) - singles[p] * singles[r];
                raw(p, r) = val;
                raw(r, p) = val;
            }
        }
    } else {
        singles_neg.resize(q);
        for (Eigen::Index p = 0; p < q; ++p) {
            try {
                singles_neg[p] = transform.mgf(-grid.points.row(p));
            } catch (const std::domain_error& e) {
                throw std::domain_error("kernel_matrix: Wick kernel needs M(-tau) at grid point " +
                                        std::to_string(p) + ": " + e.what());
            }
        }
        for (Eigen::Index p = 0; p < q; ++p) {
            for (Eigen::Index r = 0; r < q; ++r) {
                Eigen::VectorXd diff = grid.points.row(p) - grid.points.row(r);
                double cross;
                try {
                    cross = transform.mgf(diff);
                } catch (const std::domain_error& e) {
                    throw std::domain_error("kernel_matrix: domain violation at grid pair (" +
                                            std::to_string(p) + ", " + std::to_string(r) +
                                            "): " + e.what());
                }
                raw(p, r) = cross - singles[p] * singles_neg[r];
            }
        }
        raw = 0.5 * (raw + raw.transpose()).eval();
    }

    KernelMatrix out;
    out.sqrt_weights = grid.weights.array().sqrt();
    out.scale = raw.diagonal().maxCoeff();
    out.entries = out.sqrt_weights.asDiagonal() * raw * out.sqrt_weights.asDiagonal();
    return out;
}

KernelMatrixCf kernel_matrix_cf(const CellTransform& transform, const QuadratureGrid& grid) {
    const Eigen::Index q = grid.size();
    Eigen::VectorXcd singles(q), singles_neg(q);
    for (Eigen::Index p = 0; p < q; ++p) {
        singles[p] = transform.cf(grid.points.row(p));
        singles_neg[p] = transform.cf(-grid.points.row(p));
    }
    Eigen::MatrixXcd raw(q, q);
    for (Eigen::Index p = 0; p < q; ++p) {
        for (Eigen::Index r = p; r < q; ++r) {
            const Eigen::VectorXd diff = grid.points.row(p) - grid.points.row(r);
            const std::complex<double> val = transform.cf(diff) - singles[p] * singles_neg[r];
            raw(p, r) = val;
            raw(r, p) = std::conj(val);
        }
    }
    KernelMatrixCf out;
    out.sqrt_weights = grid.weights.array().sqrt();
    out.scale = raw.diagonal().real().maxCoeff();
    out.entries = out.sqrt_weights.asDiagonal() * raw * out.sqrt_weights.asDiagonal();
    return out;
}

KernelMatrix empirical_kernel_matrix(const Eigen::VectorXd& sample, const QuadratureGrid& grid) {
    if (grid.n_lines() != 1) {
        throw std::invalid_argument("empirical_kernel_matrix: univariate grids only");
    }
    const Eigen::Index q = grid.size(), l = sample.size();
    if (l < 2) throw std::invalid_argument("empirical_kernel_matrix: need at least 2 draws");
    Eigen::MatrixXd e(l, q);
    for (Eigen::Index r = 0; r < l; ++r) {
        for (Eigen::Index p = 0; p < q; ++p) e(r, p) = std::exp(grid.points(p, 0) * sample[r]);
    }
    const Eigen::RowVectorXd mean = e.colwise().mean();
    e.rowwise() -= mean;
    Eigen::MatrixXd raw = e.transpose() * e / static_cast<double>(l);
    KernelMatrix out;
    out.sqrt_weights = grid.weights.array().sqrt();
    out.scale = raw.diagonal().maxCoeff();
    out.entries = out.sqrt_weights.asDiagonal() * raw * out.sqrt_weights.asDiagonal();
    return out;
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& k) {
    if (!k.allFinite()) throw std::invalid_argument("matrix_sqrt_psd: non-finite entries");
    if (k.rows() != k.cols()) throw std::invalid_argument("matrix_sqrt_psd: matrix not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

template <class Matrix, class Vector>
double regularized_norm_impl(const Matrix& entries, const Eigen::VectorXd& sqrt_weights,
                             const Vector& h, double lambda, double scale) {
    if (!(lambda > 0.0)) throw std::invalid_argument("regularized_norm: lambda must be > 0");
    if (entries.rows() != h.size() || sqrt_weights.size() != h.size()) {
        throw std::invalid_argument("regularized_norm: dimension mismatch");
    }
    double lam = lambda;
    if (scale != 1.0) {
        if (!(scale > 0.0) || !std::isfinite(scale)) return 0.0;
        lam = lambda * scale;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(entries);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("regularized_norm: eigendecomposition failed");
    }
    const Vector weighted = sqrt_weights.template cast<typename Vector::Scalar>().cwiseProduct(h);
    const Vector proj = es.eigenvectors().adjoint() * weighted;
    double out = 0.0;
    for (Eigen::Index i = 0; i < proj.size(); ++i) {
        const double d = std::max(es.eigenvalues()[i], 0.0);
        if (d == 0.0) continue;
        const double coef = std::norm(typename Vector::Scalar(proj[i]));
        out += d * coef / ((d + lam) * (d + lam));
    }
    return out;
}

}  // namespace

double regularized_norm(const KernelMatrix& k, const Eigen::VectorXd& h, double lambda) {
    return regularized_norm_impl(k.entries, k.sqrt_weights, h, lambda, 1.0);
}

double regularized_norm(const KernelMatrixCf& k, const Eigen::VectorXcd& h, double lambda) {
    return regularized_norm_impl(k.entries, k.sqrt_weights, h, lambda, 1.0);
}

double regularized_norm_standardized(const KernelMatrix& k, const Eigen::VectorXd& h,
                                     double lambda) {
    return regularized_norm_impl(k.entries, k.sqrt_weights, h, lambda, k.scale);
}

double regularized_norm_standardized(const KernelMatrixCf& k, const Eigen::VectorXcd& h,
                                     double lambda) {
    return regularized_norm_impl(k.entries, k.sqrt_weights, h, lambda, k.scale);
}

// --- objective ---------------------------------------------------------------

namespace {

Eigen::VectorXd cell_moments(const CellCondition& cell, const QuadratureGrid& grid) {
    Eigen::VectorXd h(grid.size());
    for (Eigen::Index q = 0; q < grid.size(); ++q) {
        const Eigen::VectorXd tau = grid.points.row(q);
        h[q] = std::exp(tau.dot(cell.x)) - cell.transform->mgf(tau);
    }
    return h;
}

Eigen::VectorXcd cell_moments_cf(const CellCondition& cell, const QuadratureGrid& grid) {
    Eigen::VectorXcd h(grid.size());
    for (Eigen::Index q = 0; q < grid.size(); ++q) {
        const Eigen::VectorXd t = grid.points.row(q);
        h[q] = std::exp(std::complex<double>(0.0, t.dot(cell.x))) - cell.transform->cf(t);
    }
    return h;
}

}  // namespace

double cgmm_objective_cells(const std::vector<CellCondition>& cells, const CgmmConfig& config,
                            const std::vector<KernelMatrix>* fixed_kernels,
                            const std::vector<KernelMatrixCf>* fixed_kernels_cf) {
    validate(config);
    if (cells.empty()) throw std::invalid_argument("cgmm_objective: empty data");
    const double l = static_cast<double>(cells.size());
    double obj = 0.0;

    if (config.transform == TransformKind::mgf) {
        if (config.pooled) {
            Eigen::VectorXd h = moment_vector(cells, config.grid);
            KernelMatrix pooled;
            if (fixed_kernels) {
                pooled = (*fixed_kernels)[0];
            } else {
                for (std::size_t c = 0; c < cells.size(); ++c) {
                    KernelMatrix k =
                        kernel_matrix(*cells[c].transform, config.grid, config.kernel_form);
                    if (c == 0) {
                        pooled = std::move(k);
                    } else {
                        pooled.entries += k.entries;
                    }
                }
                pooled.entries /= l * l;
            }
            obj = regularized_norm_standardized(pooled, h, config.lambda);
        } else {
            for (std::size_t c = 0; c < cells.size(); ++c) {
                const Eigen::VectorXd h = cell_moments(cells[c], config.grid);
                if (fixed_kernels) {
                    obj += regularized_norm_standardized((*fixed_kernels)[c], h, config.lambda);
                } else {
                    const KernelMatrix k =
                        kernel_matrix(*cells[c].transform, config.grid, config.kernel_form);
                    obj += regularized_norm_standardized(k, h, config.lambda);
                }
            }
        }
    } else {
        if (config.pooled) {
            Eigen::VectorXcd h = moment_vector_cf(cells, config.grid);
            KernelMatrixCf pooled;
            if (fixed_kernels_cf) {
                pooled = (*fixed_kernels_cf)[0];
            } else {
                for (std::size_t c = 0; c < cells.size(); ++c) {
                    KernelMatrixCf k = kernel_matrix_cf(*cells[c].transform, config.grid);
                    if (c == 0) {
                        pooled = std::move(k);
                    } else {
                        pooled.entries += k.entries;
                    }
                }
                pooled.entries /= l * l;
            }
            obj = regularized_norm_standardized(pooled, h, config.lambda);
        } else {
            for (std::size_t c = 0; c < cells.size(); ++c) {
                const Eigen::VectorXcd h = cell_moments_cf(cells[c], config.grid);
                if (fixed_kernels_cf) {
                    obj += regularized_norm_standardized((*fixed_kernels_cf)[c], h, config.lambda);
                } else {
                    const KernelMatrixCf k = kernel_matrix_cf(*cells[c].transform, config.grid);
                    obj += regularized_norm_standardized(k, h, config.lambda);
                }
            }
        }
    }
    return config.objective_scale * obj;
}

std::vector<SurfacePoint> objective_surface(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& theta_base, Eigen::Index axis1, Eigen::Index axis2,
    const Eigen::VectorXd& values1, const Eigen::VectorXd& values2) {
    if (axis1 < 0 || axis1 >= theta_base.size() || axis2 < 0 || axis2 >= theta_base.size()) {
        throw std::invalid_argument("objective_surface: axis out of range");
    }
    std::vector<SurfacePoint> out;
    out.reserve(values1.size() * values2.size());
    Eigen::VectorXd theta = theta_base;
    for (Eigen::Index a = 0; a < values1.size(); ++a) {
        for (Eigen::Index b = 0; b < values2.size(); ++b) {
            theta = theta_base;
            theta[axis1] = values1[a];
            theta[axis2] = values2[b];
            out.push_back({values1[a], values2[b], objective(theta)});
        }
    }
    return out;
}

void write_surface_csv(const std::string& path, const std::vector<SurfacePoint>& surface) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write surface csv: " + path);
    out << "param1,param2,objective\n";
    char buf[96];
    for (const auto& p : surface) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", p.v1, p.v2, p.objective);
        out << buf << '\n';
    }
}

}  // namespace lossres
