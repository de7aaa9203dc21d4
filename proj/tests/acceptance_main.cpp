// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Heavy scenario studies parallelize over replicates; all
// randomness is seeded, so reruns are reproducible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lossres/fit.hpp"
#include "lossres/json_io.hpp"
#include "lossres/parallel.hpp"
#include "test_support.hpp"

using namespace lossres;

namespace {

int g_threads = 2;
const std::string kDataDir = LOSSRES_DATA_DIR;

struct Criterion {
    int id;
    std::string name;
    std::function<bool(std::string&)> run;
};

bool all_of_checks(std::initializer_list<bool> checks) {
    for (bool c : checks) {
        if (!c) return false;
    }
    return true;
}

double rel_gap(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-12); }

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

AbrmSpec single_line_template(AbrmSpec::Family family, double shape) {
    AbrmSpec templ;
    templ.family = family;
    templ.shape = shape;
    templ.lines = {{Eigen::VectorXd::Ones(10), Eigen::VectorXd::Ones(10), 1.0, {}}};
    return templ;
}

// --- criterion 1: distribution identities -----------------------------------

bool criterion1(std::string& detail) {
    double worst = 0.0;
    bool ok = true;

    for (double p : {0.0, 1.0, 1.3, 1.7, 2.0}) {
        const TweedieParams params{p, 2.4, 0.7};
        ok = ok && tweedie_mgf(params, 0.0) == 1.0;
        ok = ok && tweedie_cf(params, 0.0) == std::complex<double>(1.0, 0.0);
    }
    ok = ok && stable_cf({1.6, 0.2, 1.1, 0.4}, 0.0) == std::complex<double>(1.0, 0.0);
    ok = ok && extreme_stable_mgf({1.6, 0.2, 1.1, -1.0}, 0.0) == 1.0;

    // Closed-form MGFs to 1e-12.
    for (double tau : {-1.4, -0.6, -0.1, 0.2}) {
        const double gamma_exact = std::pow(1.0 - tau * 3.0 * 0.25, -4.0);
        worst = std::max(worst, rel_gap(tweedie_mgf({2.0, 3.0, 0.25}, tau), gamma_exact));
        const double poisson_exact = std::exp((std::exp(tau) - 1.0) * 2.0);
        worst = std::max(worst, rel_gap(tweedie_mgf({1.0, 2.0, 1.0}, tau), poisson_exact));
        const double normal_exact = std::exp(1.5 * tau + 0.5 * 0.8 * tau * tau);
        worst = std::max(worst, rel_gap(tweedie_mgf({0.0, 1.5, 0.8}, tau), normal_exact));
    }
    // Extreme-stable MGF at alpha = 2 vs Normal(mu, 2 sigma^2).
    for (double tau : {0.0, 0.3, 1.1, 2.5}) {
        for (double sigma : {0.5, 1.25}) {
            const double normal_exact = std::exp(0.4 * tau + sigma * sigma * tau * tau);
            worst = std::max(worst,
                             rel_gap(extreme_stable_mgf({2.0, 0.4, sigma, -1.0}, tau),
                                     normal_exact));
        }
    }
    ok = ok && worst < 1e-12;

    // Stable CF/convolution consistency to 1e-10.
    double worst_cf = 0.0;
    const StableParams p1{1.8, 0.4, 1.2, 0.9}, p2{1.8, -0.2, 0.6, -0.5};
    const StableParams sum = stable_convolve(p1, p2);
    for (double t = -3.0; t <= 3.0; t += 0.2) {
        const auto lhs = stable_cf(sum, t);
        const auto rhs = stable_cf(p1, t) * stable_cf(p2, t);
        worst_cf = std::max(worst_cf, std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-12));
    }
    ok = ok && worst_cf < 1e-10;

    // kappa_p mean/variance identities to 1e-8.
    double worst_kappa = 0.0;
    for (double p : {0.0, 1.0, 1.32, 1.7, 2.0}) {
        for (double mu : {0.5, 2.0, 8.0}) {
            const double theta = tweedie_theta(mu, p);
            const double scale = std::max(std::fabs(theta), 1.0);
            const double h1 = 1e-6 * scale;
            const double d1 = (kappa_p(theta + h1, p) - kappa_p(theta - h1, p)) / (2.0 * h1);
            worst_kappa = std::max(worst_kappa, rel_gap(d1, mu));
            const double h2 = 1e-3 * scale;
            const double d2 = (-kappa_p(theta + 2 * h2, p) + 16 * kappa_p(theta + h2, p) -
                               30 * kappa_p(theta, p) + 16 * kappa_p(theta - h2, p) -
                               kappa_p(theta - 2 * h2, p)) /
                              (12.0 * h2 * h2);
            worst_kappa = std::max(worst_kappa, rel_gap(d2, std::pow(mu, p)));
        }
    }
    ok = ok && worst_kappa < 1e-8;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "closed-form gap %.1e, CF/convolve gap %.1e, kappa identity gap %.1e", worst,
                  worst_cf, worst_kappa);
    detail = buf;
    return ok;
}

// --- criterion 2: sampler oracles -------------------------------------------

bool criterion2(std::string& detail) {
    bool ok = true;
    double worst_sigma = 0.0;
    for (double p : {0.0, 1.0, 1.2, 1.5, 2.0}) {
        const TweedieParams params{p, 5.0, 0.2};
        RngStream rng(8101, static_cast<std::uint64_t>(p * 100.0));
        std::vector<double> draws(100000);
        for (auto& d : draws) d = tweedie_sample(params, rng);
        const auto m = testsup::sample_moments(draws);
        const double mean_z = std::fabs(m.mean - 5.0) / m.mean_se;
        const double var_z = std::fabs(m.var - 0.2 * std::pow(5.0, p)) / m.var_se;
        worst_sigma = std::max({worst_sigma, mean_z, var_z});
        ok = ok && mean_z < 4.0 && var_z < 4.0;
    }

    RngStream rng_n(8102, 0), rng_l(8102, 1);
    std::vector<double> normal_draws(10000), levy_draws(10000);
    for (auto& d : normal_draws) d = stable_sample({2.0, 0.0, 1.0, 0.0}, rng_n);
    for (auto& d : levy_draws) d = stable_sample({0.5, 0.0, 1.0, 1.0}, rng_l);
    const double d_normal = testsup::ks_statistic(
        normal_draws, [](double x) { return testsup::normal_cdf(x, 0.0, std::sqrt(2.0)); });
    const double d_levy =
        testsup::ks_statistic(levy_draws, [](double x) { return testsup::levy_cdf(x, 1.0); });
    ok = ok && d_normal < testsup::ks_critical(10000) && d_levy < testsup::ks_critical(10000);

    char buf[160];
    std::snprintf(buf, sizeof(buf), "worst moment z = %.2f, KS normal %.4f / levy %.4f (crit %.4f)",
                  worst_sigma, d_normal, d_levy, testsup::ks_critical(10000));
    detail = buf;
    return ok;
}

// --- criterion 3: chain-ladder oracle ---------------------------------------

bool criterion3(std::string& detail) {
    const auto lobs = read_triangles_csv(kDataDir + "/schedule_p.csv");
    bool ok = lobs.size() == 2;
    double worst_cl = 0.0, worst_mle = 0.0;
    for (const auto& nt : lobs) {
        const ChainLadderResult cl = chain_ladder(nt.tri);
        const testsup::BruteCl oracle = testsup::brute_force_chain_ladder(nt.tri);
        for (std::size_t j = 0; j < oracle.factors.size(); ++j) {
            worst_cl = std::max(worst_cl, rel_gap(cl.dev_factors[j], oracle.factors[j]));
        }
        for (std::size_t i = 0; i < oracle.outstanding.size(); ++i) {
            if (oracle.outstanding[i] > 0.0) {
                worst_cl = std::max(worst_cl,
                                    rel_gap(cl.outstanding_by_ay[i], oracle.outstanding[i]));
            }
        }
        worst_cl = std::max(worst_cl, rel_gap(cl.total_outstanding, oracle.total));

        const DevelopmentPattern odp = fit_mle_tweedie_means(nt.tri, 1.0);
        const Eigen::VectorXd reserves = outstanding_mean(odp, 0.0, nt.tri);
        for (Eigen::Index i = 0; i < nt.tri.n_ay(); ++i) {
            if (cl.outstanding_by_ay[i] > 1e-9) {
                worst_mle =
                    std::max(worst_mle, rel_gap(reserves[i], cl.outstanding_by_ay[i]));
            }
        }
    }
    ok = ok && worst_cl < 1e-10 && worst_mle < 1e-6;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "CL oracle gap %.2e, ODP-vs-CL gap %.2e", worst_cl,
                  worst_mle);
    detail = buf;
    return ok;
}

// --- criterion 4: CGMM numerics ----------------------------------------------

bool criterion4(std::string& detail) {
    bool ok = true;

    // Kernel PSD after clipping, for a battery of transforms.
    const QuadratureGrid g = make_mgf_grid(0.6, 32, 1);
    double worst_neg = 0.0;
    for (double p : {1.0, 1.32, 1.7, 2.0}) {
        const TweedieTransform tr({p, 4.0, 0.3});
        const KernelMatrix k = kernel_matrix(tr, g, KernelForm::covariance);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.entries);
        worst_neg = std::max(worst_neg,
                             -es.eigenvalues().minCoeff() / es.eigenvalues().maxCoeff());
        const Eigen::MatrixXd root = matrix_sqrt_psd(k.entries);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(root);
        // PSD after clipping, up to re-decomposition roundoff.
        ok = ok && es2.eigenvalues().minCoeff() >= -1e-12 * es2.eigenvalues().maxCoeff();
    }
    const StableTransform st({1.8, 4.0, 0.3, 1.0});
    const KernelMatrix ks = kernel_matrix(st, g, KernelForm::covariance);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ks.entries);
    worst_neg =
        std::max(worst_neg, -es.eigenvalues().minCoeff() / es.eigenvalues().maxCoeff());
    ok = ok && worst_neg <= 1e-10;

    // Diagonal closed form in the eigenbasis of an arbitrary PSD kernel.
    RngStream rng(41, 0);
    Eigen::MatrixXd a(24, 24);
    for (Eigen::Index i = 0; i < 24; ++i) {
        for (Eigen::Index j = 0; j < 24; ++j) a(i, j) = rng.normal();
    }
    KernelMatrix generic;
    generic.entries = a.transpose() * a / 24.0;
    generic.sqrt_weights = Eigen::VectorXd::Ones(24);
    Eigen::VectorXd h(24);
    for (auto& v : h.reshaped()) v = rng.normal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(generic.entries);
    const Eigen::VectorXd proj = eg.eigenvectors().transpose() * h;
    double expected = 0.0;
    const double lambda = 1e-4;
    for (Eigen::Index i = 0; i < 24; ++i) {
        const double d = std::max(eg.eigenvalues()[i], 0.0);
        expected += d * proj[i] * proj[i] / ((d + lambda) * (d + lambda));
    }
    const double diag_gap = rel_gap(regularized_norm(generic, h, lambda), expected);
    ok = ok && diag_gap < 1e-8;

    // Monotone in lambda.
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    const KernelMatrix km = kernel_matrix(TweedieTransform({2.0, 4.0, 0.3}), g,
                                          KernelForm::covariance);
    RngStream rng2(41, 1);
    Eigen::VectorXd h2(g.size());
    for (auto& v : h2.reshaped()) v = 0.01 * rng2.normal();
    for (double lam : {1e-9, 1e-7, 1e-5, 1e-3, 0.1, 10.0}) {
        const double val = regularized_norm(km, h2, lam);
        monotone = monotone && val <= prev + 1e-18 && val >= 0.0;
        prev = val;
    }
    ok = ok && monotone;

    // Objective nonnegativity and grid-refinement stability on the paper's
    // single-line gamma scenario.
    RngStream rng3(2026, 0);
    const Triangle tri = simulate_triangle(testsup::paper_single_line_pattern(),
                                           {CellFamily::Kind::tweedie, 2.0}, rng3);
    AbrmSpec spec = single_line_template(AbrmSpec::Family::tweedie, 2.0);
    spec.lines = {initial_pattern_from_cl(tri, spec.family, spec.shape)};
    const ParameterLayout layout = ParameterLayout::infer(spec);
    const Eigen::VectorXd theta = layout.pack(spec);
    CgmmConfig c64, c128;
    c64.grid = make_mgf_grid(0.6, 64, 1);
    c128.grid = make_mgf_grid(0.6, 128, 1);
    const double f64 = cgmm_objective(theta, {tri}, spec, c64);
    const double f128 = cgmm_objective(theta, {tri}, spec, c128);
    const double drift = std::fabs(f128 - f64) / std::fabs(f64);
    ok = ok && f64 >= 0.0 && f128 >= 0.0 && drift < 0.01;

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "worst pre-clip eig ratio %.1e, diagonal-oracle gap %.1e, lambda monotone %s, "
                  "refinement drift %.3f%%",
                  worst_neg, diag_gap, monotone ? "yes" : "no", 100.0 * drift);
    detail = buf;
    return ok;
}

// --- criterion 5: objective geometry ------------------------------------------

bool criterion5(std::string& detail) {
    // i.i.d. Normal sample of size 10 with a fixed seed.
    RngStream rng(505, 0);
    std::vector<double> xs(10);
    for (auto& x : xs) x = rng.normal();
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();

    const auto objective = [&](TransformKind kind, double mu, double sigma) {
        CgmmConfig config;
        config.transform = kind;
        config.pooled = true;
        config.grid = kind == TransformKind::mgf ? make_mgf_grid(2.0, 32, 1)
                                                 : make_cf_grid(5.0, 64, 1);
        const TweedieTransform tr({0.0, mu, sigma * sigma});
        std::vector<CellCondition> cells;
        cells.reserve(xs.size());
        for (double x : xs) {
            CellCondition c;
            c.x = Eigen::VectorXd::Constant(1, x);
            c.transform = &tr;
            cells.push_back(c);
        }
        return cgmm_objective_cells(cells, config);
    };

    // MGF surface on a (mu, sigma) grid around the sample.
    const int n1 = 21, n2 = 17;
    Eigen::MatrixXd surf(n1, n2);
    Eigen::VectorXd mus(n1), sigmas(n2);
    for (int i = 0; i < n1; ++i) mus[i] = mean - 1.0 + 2.0 * i / (n1 - 1);
    for (int j = 0; j < n2; ++j) sigmas[j] = 0.6 + 1.2 * j / (n2 - 1);
    int bi = 0, bj = 0;
    for (int i = 0; i < n1; ++i) {
        for (int j = 0; j < n2; ++j) {
            surf(i, j) = objective(TransformKind::mgf, mus[i], sigmas[j]);
            if (surf(i, j) < surf(bi, bj)) {
                bi = i;
                bj = j;
            }
        }
    }
    bool convex = true;
    for (int i = std::max(1, bi - 3); i <= std::min(n1 - 2, bi + 3); ++i) {
        const double d2 = surf(i + 1, bj) - 2.0 * surf(i, bj) + surf(i - 1, bj);
        convex = convex && d2 > 0.0;
    }
    for (int j = std::max(1, bj - 3); j <= std::min(n2 - 2, bj + 3); ++j) {
        const double d2 = surf(bi, j + 1) - 2.0 * surf(bi, j) + surf(bi, j - 1);
        convex = convex && d2 > 0.0;
    }

    // CF profile along mu: oscillation (sign changes of the first
    // differences) away from the minimizer. The complex exponentials cycle
    // with period ~2 pi / tau, so the profile spans several cycles.
    const int nm = 81;
    Eigen::VectorXd profile(nm), grid_mu(nm);
    for (int i = 0; i < nm; ++i) {
        grid_mu[i] = mean - 10.0 + 20.0 * i / (nm - 1);
        profile[i] = objective(TransformKind::cf, grid_mu[i], 1.0);
    }
    int sign_changes = 0;
    for (int i = 1; i + 1 < nm; ++i) {
        if (std::fabs(grid_mu[i] - mean) < 0.5) continue;
        const double d_prev = profile[i] - profile[i - 1];
        const double d_next = profile[i + 1] - profile[i];
        if (d_prev * d_next < 0.0) ++sign_changes;
    }
    const bool oscillates = sign_changes >= 1;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "MGF surface axis-convex near optimum: %s; CF profile sign changes: %d",
                  convex ? "yes" : "no", sign_changes);
    detail = buf;
    return convex && oscillates;
}

// --- criterion 6: Table-1 regime ----------------------------------------------

bool criterion6(std::string& detail) {
    RngStream rng(606, 0);
    const Triangle tri = simulate_triangle(testsup::paper_single_line_pattern(),
                                           {CellFamily::Kind::tweedie, 2.0}, rng);

    OptimizerSettings opt;
    opt.n_starts = 4;
    opt.threads = g_threads;
    const FitResult cgmm =
        fit_cgmm({tri}, single_line_template(AbrmSpec::Family::tweedie, 2.0), {}, opt, 61);
    const FitResult mle = fit_mle_gamma(tri);
    const ChainLadderResult cl = chain_ladder(tri);

    const Eigen::VectorXd os_cgmm = abrm_outstanding_mean(cgmm.model, 0, tri);
    const Eigen::VectorXd os_mle = abrm_outstanding_mean(mle.model, 0, tri);

    std::printf("    AY |  realized-style CGMM |   MLE |    CL (cumulative outstanding)\n");
    double cum_c = 0, cum_m = 0, cum_l = 0;
    for (Eigen::Index i = 1; i < 10; ++i) {
        cum_c += os_cgmm[i];
        cum_m += os_mle[i];
        cum_l += cl.outstanding_by_ay[i];
        std::printf("    %2d | %20.2f | %6.2f | %6.2f\n", static_cast<int>(i + 1), cum_c, cum_m,
                    cum_l);
    }
    const double gap_cm = rel_gap(cum_c, cum_m);
    const double gap_cl = rel_gap(cum_c, cum_l);
    const double gap_ml = rel_gap(cum_m, cum_l);
    const bool ok = gap_cm < 0.15 && gap_cl < 0.15 && gap_ml < 0.15 && cgmm.converged;

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "reserve totals CGMM %.1f / MLE %.1f / CL %.1f; pairwise gaps %.1f%% %.1f%% "
                  "%.1f%% (need < 15%%)",
                  cum_c, cum_m, cum_l, 100 * gap_cm, 100 * gap_cl, 100 * gap_ml);
    detail = buf;
    return ok;
}

// --- criterion 7: single-line scenario studies ----------------------------------

struct ScenarioResult {
    std::vector<std::vector<double>> eta;  // [ay][replicate]
    std::vector<std::vector<double>> nu;
    std::vector<double> gamma;
};

ScenarioResult run_single_line_study(AbrmSpec::Family family, double shape, int replicates,
                                     std::uint64_t seed) {
    ScenarioResult res;
    res.eta.assign(10, {});
    res.nu.assign(10, {});
    std::vector<FitResult> fits(replicates);
    std::vector<int> ok(replicates, 0);
    parallel_for(replicates, g_threads, [&](std::size_t r) {
        RngStream rng(seed, r);
        const CellFamily fam{family == AbrmSpec::Family::tweedie ? CellFamily::Kind::tweedie
                                                                 : CellFamily::Kind::stable,
                             shape};
        const Triangle tri =
            simulate_triangle(testsup::paper_single_line_pattern(), fam, rng);
        OptimizerSettings opt;
        opt.n_starts = 1;
        opt.threads = 1;
        try {
            fits[r] = fit_cgmm({tri}, single_line_template(family, shape), {}, opt,
                               seed + 31 * (r + 1));
            ok[r] = 1;
        } catch (const std::exception&) {
        }
    });
    for (int r = 0; r < replicates; ++r) {
        if (!ok[r]) continue;
        const auto& line = fits[r].model.lines[0];
        for (int i = 0; i < 10; ++i) res.eta[i].push_back(line.eta[i]);
        for (int j = 0; j < 10; ++j) res.nu[j].push_back(line.nu[j]);
        res.gamma.push_back(line.gamma);
    }
    return res;
}

bool criterion7(std::string& detail) {
    const int reps = 50;
    bool ok = true;
    std::string notes;

    // Stable scenario, bands from the paper's reported spreads.
    {
        const ScenarioResult res =
            run_single_line_study(AbrmSpec::Family::stable, 1.8, reps, 7101);
        const double nu_sd[10] = {0.0, 0.04, 0.04, 0.05, 0.05, 0.04, 0.05, 0.05, 0.06, 0.07};
        for (int i = 0; i < 10; ++i) {
            const double med = median_of(res.eta[i]);
            ok = ok && med > 4.3 && med < 5.3;
        }
        for (int j = 1; j < 10; ++j) {
            const double med = median_of(res.nu[j]);
            const double truth = 1.0 - 0.05 * j;
            ok = ok && std::fabs(med - truth) < 2.0 * nu_sd[j];
        }
        const double gamma_med = median_of(res.gamma);
        ok = ok && gamma_med > 0.14 && gamma_med < 0.22;
        notes += "stable eta_med " + std::to_string(median_of(res.eta[4])) + " gamma_med " +
                 std::to_string(gamma_med);
    }

    // Tweedie analogs with the same 2-SD construction around truth.
    const double nu_sd_12[10] = {0.0, 0.08, 0.07, 0.09, 0.09, 0.09, 0.10, 0.11, 0.12, 0.13};
    const double eta_sd_12[10] = {0.77, 0.59, 0.76, 0.80, 0.66, 0.92, 0.80, 0.75, 0.91, 0.90};
    const double nu_sd_20[10] = {0.0, 0.12, 0.14, 0.14, 0.14, 0.12, 0.14, 0.17, 0.18, 0.21};
    const double eta_sd_20[10] = {2.40, 2.00, 1.67, 2.25, 2.38, 2.42, 2.27, 2.05, 1.75, 1.70};
    const double gamma_sd[2] = {0.10, 0.11};
    const double shapes[2] = {1.2, 2.0};
    for (int s = 0; s < 2; ++s) {
        const ScenarioResult res =
            run_single_line_study(AbrmSpec::Family::tweedie, shapes[s], reps, 7202 + s);
        const double* nu_sd = s == 0 ? nu_sd_12 : nu_sd_20;
        const double* eta_sd = s == 0 ? eta_sd_12 : eta_sd_20;
        for (int i = 0; i < 10; ++i) {
            const double med = median_of(res.eta[i]);
            ok = ok && std::fabs(med - 5.0) < 2.0 * eta_sd[i];
        }
        for (int j = 1; j < 10; ++j) {
            const double med = median_of(res.nu[j]);
            ok = ok && std::fabs(med - (1.0 - 0.05 * j)) < 2.0 * nu_sd[j];
        }
        const double gamma_med = median_of(res.gamma);
        ok = ok && std::fabs(gamma_med - 0.2) < 2.0 * gamma_sd[s];
        notes += "; p=" + std::to_string(shapes[s]) + " gamma_med " + std::to_string(gamma_med);
    }
    detail = notes;
    return ok;
}

// --- criterion 8: two-line stable study -----------------------------------------

bool criterion8(std::string& detail) {
    const int reps = 20;
    const AbrmSpec truth = testsup::two_line_stable_spec();

    std::vector<FitResult> fits(reps);
    std::vector<int> ok_flag(reps, 0);
    parallel_for(reps, g_threads, [&](std::size_t r) {
        RngStream rng(8801, r);
        const std::vector<Triangle> tris = simulate_abrm(truth, rng);
        AbrmSpec templ = truth;  // shapes/flags reused; values reseeded inside
        OptimizerSettings opt;
        opt.n_starts = 1;
        opt.threads = 1;
        // The two-line objective is nearly flat along joint location shifts;
        // anchor the solution to the chain-ladder seed as the paper does.
        opt.anchor_weight = 0.01;
        try {
            fits[r] = fit_cgmm(tris, templ, {}, opt, 8801 + 131 * (r + 1));
            ok_flag[r] = 1;
        } catch (const std::exception&) {
        }
    });

    const double eta_sd_1[10] = {0.35, 0.46, 0.35, 0.39, 0.60, 0.47, 0.40, 0.39, 0.63, 0.31};
    const double nu_sd_1[10] = {0.0, 0.08, 0.07, 0.07, 0.08, 0.06, 0.05, 0.08, 0.06, 0.17};
    const double eta_sd_2[10] = {0.52, 0.44, 0.52, 0.47, 0.52, 0.40, 0.39, 0.40, 0.85, 0.43};
    const double nu_sd_2[10] = {0.0, 0.09, 0.10, 0.11, 0.08, 0.09, 0.09, 0.11, 0.10, 0.22};

    bool ok = true;
    std::vector<double> sys_a, sys_b;
    for (int k = 0; k < 2; ++k) {
        const double* eta_sd = k == 0 ? eta_sd_1 : eta_sd_2;
        const double* nu_sd = k == 0 ? nu_sd_1 : nu_sd_2;
        for (int i = 0; i < 10; ++i) {
            std::vector<double> draws;
            for (int r = 0; r < reps; ++r) {
                if (ok_flag[r]) draws.push_back(fits[r].model.lines[k].eta[i]);
            }
            ok = ok && std::fabs(median_of(draws) - truth.lines[k].eta[i]) < 2.0 * eta_sd[i];
        }
        for (int j = 1; j < 10; ++j) {
            std::vector<double> draws;
            for (int r = 0; r < reps; ++r) {
                if (ok_flag[r]) draws.push_back(fits[r].model.lines[k].nu[j]);
            }
            ok = ok && std::fabs(median_of(draws) - truth.lines[k].nu[j]) < 2.0 * nu_sd[j];
        }
        std::vector<double> gammas;
        for (int r = 0; r < reps; ++r) {
            if (ok_flag[r]) gammas.push_back(fits[r].model.lines[k].gamma);
        }
        const double gamma_sd = k == 0 ? 0.10 : 0.09;
        ok = ok && std::fabs(median_of(gammas) - truth.lines[k].gamma) < 2.0 * gamma_sd;
    }
    for (int r = 0; r < reps; ++r) {
        if (ok_flag[r]) {
            sys_a.push_back(fits[r].model.sys_a);
            sys_b.push_back(fits[r].model.sys_b);
        }
    }
    const double mu_med = median_of(sys_a), sigma_med = median_of(sys_b);
    ok = ok && std::fabs(mu_med - 0.1) < 2.0 * 0.12 && std::fabs(sigma_med - 0.1) < 2.0 * 0.07;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "systematic medians mu %.3f (band 0.1 +/- 0.24), sigma %.3f (band 0.1 +/- "
                  "0.14); %zu/%d fits usable",
                  mu_med, sigma_med, sys_a.size(), reps);
    detail = buf;
    return ok;
}

// --- criterion 9: Schedule P bootstrap ------------------------------------------

bool criterion9(std::string& detail) {
    const auto lobs = read_triangles_csv(kDataDir + "/schedule_p.csv");
    std::vector<Triangle> tris;
    AbrmSpec templ;
    templ.family = AbrmSpec::Family::tweedie;
    templ.shape = 1.32;
    for (const auto& nt : lobs) {
        templ.line_names.push_back(nt.lob);
        templ.lines.push_back({Eigen::VectorXd::Ones(nt.tri.n_ay()),
                               Eigen::VectorXd::Ones(nt.tri.n_dy()), 1.0, {}});
        tris.push_back(nt.tri);
    }
    templ.has_systematic = true;
    templ.sys_a = 1.0;
    templ.sys_b = 1.0;

    OptimizerSettings opt;
    opt.n_starts = 2;
    opt.threads = g_threads;
    // Flat-valley anchoring per the paper's workaround, and a wider grid
    // than the single-line default (the grid extent is a config knob; the
    // wider range sharpens the mean structure on these large cells).
    opt.anchor_weight = 0.01;
    CgmmConfig config;
    double max_mean = 0.0;
    for (const auto& tri : tris) {
        for (Eigen::Index i = 0; i < tri.n_ay(); ++i) {
            for (Eigen::Index j = 0; j < tri.n_dy(); ++j) {
                if (tri.observed(i, j)) max_mean = std::max(max_mean, tri.values(i, j));
            }
        }
    }
    config.grid = make_mgf_grid(6.0 / max_mean, 8, 2, GridConcentration::log_spaced, 4.0);
    config.objective_scale = 1e6;
    FitResult fit = fit_cgmm(tris, templ, config, opt, 91);
    std::printf("    base fit: objective %.4g, converged %s, %.0f s\n", fit.objective_value,
                fit.converged ? "yes" : "no", fit.wall_time_seconds);

    OptimizerSettings boot_opt;
    boot_opt.n_starts = 1;
    boot_opt.threads = g_threads;
    boot_opt.anchor_weight = 0.01;
    const BootstrapSummary summary =
        parametric_bootstrap(fit, tris, 200, fit.config, boot_opt, 92);

    // Cumulative-by-AY means must be monotone increasing, as in the paper's
    // outstanding-claims table.
    Eigen::MatrixXd combined = summary.replicate_outstanding[0];
    for (std::size_t k = 1; k < summary.replicate_outstanding.size(); ++k) {
        combined += summary.replicate_outstanding[k];
    }
    bool monotone = true;
    double prev = -1.0;
    double cum = 0.0;
    for (Eigen::Index i = 0; i < combined.cols(); ++i) {
        cum += combined.col(i).mean();
        monotone = monotone && cum >= prev;
        prev = cum;
    }

    const double target = 187542.0;
    const double gap = rel_gap(summary.total.median, target);
    const double sd_ratio = summary.total.sd / 4786.0;
    const bool ok = gap < 0.10 && monotone && sd_ratio > 1.0 / 3.0 && sd_ratio < 3.0 &&
                    summary.failed * 5 <= summary.requested;

    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "total outstanding median %.0f (target 187542, gap %.1f%%), SD %.0f (ratio to "
                  "4786: %.2f, need within 3x), cumulative means monotone: %s, failed refits "
                  "%d/%d",
                  summary.total.median, 100.0 * gap, summary.total.sd, sd_ratio,
                  monotone ? "yes" : "no", summary.failed, summary.requested);
    detail = buf;
    return ok;
}

// --- criterion 10: single-fit wall time -----------------------------------------

bool criterion10(std::string& detail) {
    RngStream rng(1001, 0);
    const Triangle tri = simulate_triangle(testsup::paper_single_line_pattern(),
                                           {CellFamily::Kind::tweedie, 2.0}, rng);
    OptimizerSettings opt;  // spec defaults: 8 starts
    opt.threads = g_threads;
    const auto t0 = std::chrono::steady_clock::now();
    const FitResult fit =
        fit_cgmm({tri}, single_line_template(AbrmSpec::Family::tweedie, 2.0), {}, opt, 101);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = seconds < 300.0 && fit.config.grid.q_per_line == 64;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "8-start fit with Q = 64 took %.1f s (budget 300 s)",
                  seconds);
    detail = buf;
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else if (std::strcmp(argv[i], "--threads") == 0 && i + 1 < argc) {
            g_threads = std::atoi(argv[++i]);
        }
    }

    std::vector<Criterion> criteria = {
        {1, "distribution identities", criterion1},
        {2, "sampler oracles", criterion2},
        {3, "chain-ladder oracle", criterion3},
        {4, "CGMM numerics", criterion4},
        {5, "objective geometry (MGF convex, CF oscillating)", criterion5},
        {6, "single-triangle CGMM/MLE/CL reserve agreement", criterion6},
        {7, "single-line scenario studies (stable, p=1.2, p=2)", criterion7},
        {8, "two-line stable common-shock study", criterion8},
        {9, "Schedule P bootstrap headline", criterion9},
        {10, "single-fit wall time", criterion10},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        std::string det;
        bool pass = false;
        try {
            pass = c.run(det);
        } catch (const std::exception& e) {
            det = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", c.id,
                    c.name.c_str(), det.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    return failures;
}
