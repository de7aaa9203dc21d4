#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lossres/fit.hpp"
#include "lossres/parallel.hpp"
#include "test_support.hpp"

using namespace lossres;

namespace {

DevelopmentPattern sized_pattern(Eigen::Index n, double gamma) {
    DevelopmentPattern p;
    p.eta = Eigen::VectorXd::Constant(n, 5.0);
    p.nu.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        p.nu[j] = 1.0 - 0.45 * static_cast<double>(j) / static_cast<double>(n - 1);
    }
    p.gamma = gamma;
    return p;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

/// Median absolute log-error of the fitted mean parameters.
double pattern_error(const DevelopmentPattern& fitted, const DevelopmentPattern& truth) {
    std::vector<double> errs;
    for (Eigen::Index i = 0; i < truth.eta.size(); ++i) {
        errs.push_back(std::fabs(std::log(fitted.eta[i] / truth.eta[i])));
    }
    for (Eigen::Index j = 1; j < truth.nu.size(); ++j) {
        errs.push_back(std::fabs(std::log(fitted.nu[j] / truth.nu[j])));
    }
    return median_of(errs);
}

}  // namespace

TEST_CASE("more data per parameter shrinks the estimation error") {
    const int reps = 20;
    std::vector<double> err_small(reps), err_large(reps);
    for (Eigen::Index size : {Eigen::Index(10), Eigen::Index(40)}) {
        const DevelopmentPattern truth = sized_pattern(size, 0.01);
        AbrmSpec templ;
        templ.family = AbrmSpec::Family::tweedie;
        templ.shape = 2.0;
        templ.lines = {{Eigen::VectorXd::Ones(size), Eigen::VectorXd::Ones(size), 1.0, {}}};
        std::vector<double>& errs = size == 10 ? err_small : err_large;
        parallel_for(reps, 2, [&](std::size_t r) {
            RngStream rng(4040 + size, r);
            const Triangle tri =
                simulate_triangle(truth, {CellFamily::Kind::tweedie, 2.0}, rng);
            OptimizerSettings opt;
            opt.n_starts = 1;
            opt.threads = 1;
            CgmmConfig config;
            config.kernel_policy = KernelPolicy::fixed_at_initial;
            const FitResult fit = fit_cgmm({tri}, templ, config, opt, 4040 + 7 * (r + 1));
            errs[r] = pattern_error(fit.model.lines[0], truth);
        });
    }
    CHECK(median_of(err_large) < median_of(err_small));
}

TEST_CASE("CGMM, MLE and chain-ladder reserves agree for overdispersed Poisson data") {
    const int reps = 50;
    const DevelopmentPattern truth = testsup::paper_single_line_pattern();
    std::vector<double> cgmm_total(reps), mle_total(reps), cl_total(reps);
    AbrmSpec templ;
    templ.family = AbrmSpec::Family::tweedie;
    templ.shape = 1.0;
    templ.lines = {{Eigen::VectorXd::Ones(10), Eigen::VectorXd::Ones(10), 1.0, {}}};
    parallel_for(reps, 2, [&](std::size_t r) {
        RngStream rng(5050, r);
        const Triangle tri = simulate_triangle(truth, {CellFamily::Kind::tweedie, 1.0}, rng);
        OptimizerSettings opt;
        opt.n_starts = 1;
        opt.threads = 1;
        const FitResult fit = fit_cgmm({tri}, templ, {}, opt, 5050 + 7 * (r + 1));
        cgmm_total[r] = abrm_outstanding_mean(fit.model, 0, tri).sum();
        const DevelopmentPattern odp = fit_mle_tweedie_means(tri, 1.0);
        mle_total[r] = outstanding_mean(odp, 0.0, tri).sum();
        cl_total[r] = chain_ladder(tri).total_outstanding;
    });
    const double m_cgmm = median_of(cgmm_total);
    const double m_mle = median_of(mle_total);
    const double m_cl = median_of(cl_total);
    CHECK(std::fabs(m_cgmm - m_mle) < 0.10 * m_mle);
    CHECK(std::fabs(m_cgmm - m_cl) < 0.10 * m_cl);
    CHECK(std::fabs(m_mle - m_cl) < 0.10 * m_cl);
}
