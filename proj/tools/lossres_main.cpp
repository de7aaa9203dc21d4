// Command-line front end: simulate | chainladder | estimate | bootstrap |
// surface, plus replay of a recorded run manifest. All outputs are plain CSV
// or JSON; every run writes a manifest.json from which it can be reproduced
// byte for byte. Randomness is controlled solely by --seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lossres/fit.hpp"
#include "lossres/json_io.hpp"
#include "lossres/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int default_threads() {
    if (const char* env = std::getenv("LOSSRES_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 0;  // resolve to hardware concurrency
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::vector<std::string>& argv, std::uint64_t seed,
                    const json& resolved, const std::vector<std::string>& outputs) {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["seed"] = seed;
    j["resolved"] = resolved;
    j["outputs"] = outputs;
    lossres::write_json_file((out_dir / "manifest.json").string(), j);
}

std::vector<lossres::NamedTriangle> load_lobs(const std::string& path,
                                              const std::string& lob_filter) {
    auto all = lossres::read_triangles_csv(path);
    if (lob_filter.empty()) return all;
    std::vector<lossres::NamedTriangle> out;
    for (auto& nt : all) {
        if (nt.lob == lob_filter) out.push_back(std::move(nt));
    }
    if (out.empty()) throw std::invalid_argument("no rows for lob '" + lob_filter + "'");
    return out;
}

void write_chainladder_outputs(const fs::path& out_dir,
                               const std::vector<lossres::NamedTriangle>& tris,
                               std::vector<std::string>* outputs) {
    char buf[64];
    std::ofstream factors(out_dir / "factors.csv");
    std::ofstream reserves(out_dir / "reserves.csv");
    factors << "lob,development_year,factor\n";
    reserves << "lob,accident_year,outstanding\n";
    for (const auto& nt : tris) {
        const lossres::ChainLadderResult cl = lossres::chain_ladder(nt.tri);
        for (Eigen::Index j = 0; j < cl.dev_factors.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", cl.dev_factors[j]);
            factors << nt.lob << ',' << (j + 2) << ',' << buf << '\n';
        }
        for (Eigen::Index i = 0; i < cl.outstanding_by_ay.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", cl.outstanding_by_ay[i]);
            reserves << nt.lob << ',' << (i + 1) << ',' << buf << '\n';
        }
        std::snprintf(buf, sizeof(buf), "%.17g", cl.total_outstanding);
        reserves << nt.lob << ",total," << buf << '\n';
    }
    outputs->push_back("factors.csv");
    outputs->push_back("reserves.csv");
}

struct EstimateFlags {
    std::string triangles, lob, method = "cgmm", family = "tweedie";
    double shape = 2.0;
    bool systematic = false, no_systematic = false;
    std::string transform = "mgf", kernel_form = "covariance",
                kernel_policy = "continuously-updated", pin = "nu1";
    double lambda = 1e-7, t_max = 0.0, objective_scale = 0.0, anchor = 0.0;
    int q_per_line = 0, starts = 8, max_iter = 400;
    std::uint64_t seed = 12345;
    int threads = default_threads();
    std::string out;
};

lossres::CgmmConfig make_config(const EstimateFlags& f, Eigen::Index n_lines) {
    lossres::CgmmConfig config;
    config.transform = f.transform == "cf" ? lossres::TransformKind::cf
                                           : lossres::TransformKind::mgf;
    config.kernel_form = f.kernel_form == "wick" ? lossres::KernelForm::wick
                                                 : lossres::KernelForm::covariance;
    config.kernel_policy = f.kernel_policy == "fixed-at-initial"
                               ? lossres::KernelPolicy::fixed_at_initial
                               : lossres::KernelPolicy::continuously_updated;
    config.lambda = f.lambda;
    config.objective_scale =
        f.objective_scale > 0.0 ? f.objective_scale : (n_lines > 1 ? 1e6 : 1.0);
    return config;  // grid stays empty; fit_cgmm builds it (or --t-max below)
}

int run(std::vector<std::string> args, int depth);

int cmd_replay(const std::string& manifest_path, int depth) {
    const json manifest = lossres::load_json_file(manifest_path);
    std::vector<std::string> argv;
    for (const auto& a : manifest.at("argv")) argv.push_back(a.get<std::string>());
    return run(argv, depth + 1);
}

int run(std::vector<std::string> args, int depth) {
    if (depth > 1) throw std::invalid_argument("replay: nested replay manifests");

    CLI::App app{"stochastic loss reserving via CGMM-estimated background risk models"};
    app.require_subcommand(1);

    // --- simulate ---
    auto* sim = app.add_subcommand("simulate", "draw replicate triangle sets from a model spec");
    std::string sim_spec, sim_out;
    int sim_n = 1;
    std::uint64_t sim_seed = 12345;
    sim->add_option("--spec", sim_spec, "model spec JSON")->required();
    sim->add_option("--replicates", sim_n, "number of replicate triangle sets");
    sim->add_option("--seed", sim_seed, "master random seed");
    sim->add_option("--out", sim_out, "output directory")->required();

    // --- chainladder ---
    auto* cl = app.add_subcommand("chainladder", "volume-weighted chain ladder per lob");
    std::string cl_tri, cl_lob, cl_out;
    cl->add_option("--triangles", cl_tri, "triangle CSV")->required();
    cl->add_option("--lob", cl_lob, "restrict to one lob");
    cl->add_option("--out", cl_out, "output directory")->required();

    // --- estimate ---
    auto* est = app.add_subcommand("estimate", "fit a model to observed triangles");
    EstimateFlags ef;
    est->add_option("--triangles", ef.triangles, "triangle CSV")->required();
    est->add_option("--lob", ef.lob, "restrict to one lob");
    est->add_option("--method", ef.method, "cgmm | mle-gamma | chain-ladder");
    est->add_option("--family", ef.family, "tweedie | stable");
    est->add_option("--shape", ef.shape, "Tweedie power p or stable alpha");
    est->add_flag("--systematic", ef.systematic, "include a common shock across lines");
    est->add_flag("--no-systematic", ef.no_systematic, "force independent lines");
    est->add_option("--transform", ef.transform, "mgf | cf");
    est->add_option("--kernel-form", ef.kernel_form, "covariance | wick");
    est->add_option("--kernel-policy", ef.kernel_policy,
                    "continuously-updated | fixed-at-initial");
    est->add_option("--pin", ef.pin, "identifiability pin: nu1 | eta1");
    est->add_option("--lambda", ef.lambda, "Tikhonov regularization");
    est->add_option("--t-max", ef.t_max, "grid extent (0 = auto)");
    est->add_option("--q", ef.q_per_line, "quadrature points per line (0 = auto)");
    est->add_option("--objective-scale", ef.objective_scale, "objective multiplier (0 = auto)");
    est->add_option("--starts", ef.starts, "multi-start count");
    est->add_option("--max-iter", ef.max_iter, "optimizer iteration cap");
    est->add_option("--anchor", ef.anchor, "penalty weight pulling toward the initial estimate");
    est->add_option("--seed", ef.seed, "master random seed");
    est->add_option("--threads", ef.threads, "parallel tasks (0 = hardware)");
    est->add_option("--out", ef.out, "output directory")->required();

    // --- bootstrap ---
    auto* boot = app.add_subcommand("bootstrap", "parametric bootstrap of reserve uncertainty");
    std::string bs_tri, bs_fit, bs_out;
    int bs_b = 200, bs_starts = 1, bs_max_iter = 400, bs_threads = default_threads();
    std::uint64_t bs_seed = 12345;
    boot->add_option("--triangles", bs_tri, "observed triangle CSV")->required();
    boot->add_option("--fit", bs_fit, "fit JSON from `estimate`")->required();
    boot->add_option("--replicates", bs_b, "bootstrap replicates B");
    boot->add_option("--starts", bs_starts, "multi-start count per refit");
    boot->add_option("--max-iter", bs_max_iter, "optimizer iteration cap per refit");
    boot->add_option("--seed", bs_seed, "master random seed");
    boot->add_option("--threads", bs_threads, "parallel tasks (0 = hardware)");
    boot->add_option("--out", bs_out, "output directory")->required();

    // --- surface ---
    auto* surf = app.add_subcommand("surface", "objective slice over two parameters");
    std::string sf_tri, sf_fit, sf_axis1, sf_axis2, sf_out, sf_transform;
    double sf_min1 = 0, sf_max1 = 0, sf_min2 = 0, sf_max2 = 0;
    int sf_steps1 = 21, sf_steps2 = 21;
    surf->add_option("--triangles", sf_tri, "triangle CSV")->required();
    surf->add_option("--fit", sf_fit, "base fit JSON")->required();
    surf->add_option("--axis1", sf_axis1, "first parameter name")->required();
    surf->add_option("--axis2", sf_axis2, "second parameter name")->required();
    surf->add_option("--min1", sf_min1)->required();
    surf->add_option("--max1", sf_max1)->required();
    surf->add_option("--steps1", sf_steps1);
    surf->add_option("--min2", sf_min2)->required();
    surf->add_option("--max2", sf_max2)->required();
    surf->add_option("--steps2", sf_steps2);
    surf->add_option("--transform", sf_transform, "override transform: mgf | cf");
    surf->add_option("--out", sf_out, "output directory")->required();

    // --- replay ---
    auto* rep = app.add_subcommand("replay", "re-run a command from its manifest");
    std::string rep_manifest;
    rep->add_option("--manifest", rep_manifest, "manifest.json of a previous run")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (rep->parsed()) return cmd_replay(rep_manifest, depth);

    if (sim->parsed()) {
        const fs::path out_dir(sim_out);
        fs::create_directories(out_dir);
        const lossres::AbrmSpec spec =
            lossres::abrm_spec_from_json(lossres::load_json_file(sim_spec));
        validate(spec);
        std::vector<std::string> outputs;
        for (int r = 0; r < sim_n; ++r) {
            lossres::RngStream rng(sim_seed, static_cast<std::uint64_t>(r));
            const auto tris = lossres::simulate_abrm(spec, rng);
            std::vector<lossres::NamedTriangle> named;
            for (Eigen::Index k = 0; k < spec.n_lines(); ++k) {
                named.push_back({spec.line_name(k), tris[k]});
            }
            char name[48];
            std::snprintf(name, sizeof(name), "triangles_%03d.csv", r);
            lossres::write_triangles_csv((out_dir / name).string(), named);
            outputs.emplace_back(name);
        }
        write_manifest(out_dir, "simulate", args, sim_seed,
                       {{"spec", lossres::to_json(spec)}, {"replicates", sim_n}}, outputs);
        return 0;
    }

    if (cl->parsed()) {
        const fs::path out_dir(cl_out);
        fs::create_directories(out_dir);
        const auto tris = load_lobs(cl_tri, cl_lob);
        std::vector<std::string> outputs;
        write_chainladder_outputs(out_dir, tris, &outputs);
        write_manifest(out_dir, "chainladder", args, 0, {{"triangles", cl_tri}}, outputs);
        return 0;
    }

    if (est->parsed()) {
        const fs::path out_dir(ef.out);
        fs::create_directories(out_dir);
        const auto named = load_lobs(ef.triangles, ef.lob);
        std::vector<std::string> outputs;
        json resolved;

        if (ef.method == "chain-ladder") {
            write_chainladder_outputs(out_dir, named, &outputs);
            write_manifest(out_dir, "estimate", args, ef.seed,
                           {{"method", "chain-ladder"}}, outputs);
            return 0;
        }

        lossres::FitResult fit;
        if (ef.method == "mle-gamma") {
            if (named.size() != 1) {
                throw std::invalid_argument("mle-gamma fits one lob; use --lob to choose");
            }
            fit = lossres::fit_mle_gamma(named[0].tri);
            resolved["method"] = "mle-gamma";
        } else if (ef.method == "cgmm") {
            lossres::AbrmSpec templ;
            templ.family = ef.family == "stable" ? lossres::AbrmSpec::Family::stable
                                                 : lossres::AbrmSpec::Family::tweedie;
            templ.shape = ef.shape;
            std::vector<lossres::Triangle> tris;
            for (const auto& nt : named) {
                templ.line_names.push_back(nt.lob);
                templ.lines.push_back({Eigen::VectorXd::Ones(nt.tri.n_ay()),
                                       Eigen::VectorXd::Ones(nt.tri.n_dy()), 1.0, {}});
                tris.push_back(nt.tri);
            }
            templ.has_systematic = ef.systematic || (named.size() > 1 && !ef.no_systematic);
            if (templ.has_systematic) {
                templ.sys_a = 1.0;
                templ.sys_b = 1.0;
            }
            lossres::CgmmConfig config = make_config(ef, templ.n_lines());
            if (ef.t_max > 0.0) {
                const Eigen::Index q =
                    ef.q_per_line > 0 ? ef.q_per_line : (templ.n_lines() > 1 ? 8 : 64);
                if (config.transform == lossres::TransformKind::mgf) {
                    config.grid = lossres::make_mgf_grid(
                        ef.t_max, q, templ.n_lines(),
                        templ.n_lines() > 1 ? lossres::GridConcentration::log_spaced
                                            : lossres::GridConcentration::uniform);
                } else {
                    config.grid = lossres::make_cf_grid(ef.t_max, q, templ.n_lines());
                }
            } else if (ef.q_per_line > 0) {
                config.auto_q_per_line = ef.q_per_line;
            }
            lossres::OptimizerSettings opt;
            opt.n_starts = ef.starts;
            opt.max_iter = ef.max_iter;
            opt.anchor_weight = ef.anchor;
            opt.threads = ef.threads;
            const lossres::PinMode pin =
                ef.pin == "eta1" ? lossres::PinMode::eta1 : lossres::PinMode::nu1;
            fit = lossres::fit_cgmm(tris, templ, config, opt, ef.seed, pin);
            resolved["config"] = lossres::to_json(fit.config);
            resolved["optimizer"] = {{"starts", opt.n_starts},
                                     {"max_iter", opt.max_iter},
                                     {"anchor", opt.anchor_weight}};
        } else {
            throw std::invalid_argument("unknown --method '" + ef.method + "'");
        }
        std::fprintf(stderr, "fit completed in %.1f s (objective %.6g, converged %s)\n",
                     fit.wall_time_seconds, fit.objective_value,
                     fit.converged ? "yes" : "no");
        lossres::write_json_file((out_dir / "fit.json").string(), lossres::to_json(fit));
        outputs.emplace_back("fit.json");
        write_manifest(out_dir, "estimate", args, ef.seed, resolved, outputs);
        return 0;
    }

    if (boot->parsed()) {
        const fs::path out_dir(bs_out);
        fs::create_directories(out_dir);
        const auto named = load_lobs(bs_tri, "");
        const lossres::FitResult fit =
            lossres::fit_result_from_json(lossres::load_json_file(bs_fit));
        if (static_cast<Eigen::Index>(named.size()) != fit.model.n_lines()) {
            throw std::invalid_argument("bootstrap: triangle lobs do not match the fit");
        }
        std::vector<lossres::Triangle> observed;
        std::vector<std::string> line_names;
        for (const auto& nt : named) {
            observed.push_back(nt.tri);
            line_names.push_back(nt.lob);
        }
        lossres::OptimizerSettings opt;
        opt.n_starts = bs_starts;
        opt.max_iter = bs_max_iter;
        opt.threads = bs_threads;
        const lossres::BootstrapSummary summary = lossres::parametric_bootstrap(
            fit, observed, bs_b, fit.config, opt, bs_seed);
        lossres::write_json_file((out_dir / "bootstrap.json").string(),
                                 lossres::to_json(summary, line_names));
        lossres::write_bootstrap_ay_csv((out_dir / "bootstrap_by_ay.csv").string(), summary,
                                        line_names);
        write_manifest(out_dir, "bootstrap", args, bs_seed,
                       {{"replicates", bs_b}, {"config", lossres::to_json(fit.config)}},
                       {"bootstrap.json", "bootstrap_by_ay.csv"});
        return 0;
    }

    if (surf->parsed()) {
        const fs::path out_dir(sf_out);
        fs::create_directories(out_dir);
        const auto named = load_lobs(sf_tri, "");
        const lossres::FitResult fit =
            lossres::fit_result_from_json(lossres::load_json_file(sf_fit));
        std::vector<lossres::Triangle> tris;
        for (const auto& nt : named) tris.push_back(nt.tri);
        lossres::CgmmConfig config = fit.config;
        if (!sf_transform.empty()) {
            config.transform = sf_transform == "cf" ? lossres::TransformKind::cf
                                                    : lossres::TransformKind::mgf;
            if (config.transform == lossres::TransformKind::cf) {
                config.grid = lossres::make_cf_grid(-fit.config.grid.per_line_lo,
                                                    std::max<Eigen::Index>(
                                                        fit.config.grid.q_per_line, 2),
                                                    fit.model.n_lines());
            }
        }
        if (config.grid.size() == 0) {
            std::string note;
            config.grid = lossres::auto_mgf_grid(fit.model, tris, 0, config.kernel_form, &note);
        }
        const auto functor =
            lossres::cgmm_objective_functor(tris, fit.model, config, fit.theta_hat);
        Eigen::Index axis1 = -1, axis2 = -1;
        for (std::size_t i = 0; i < fit.names.size(); ++i) {
            if (fit.names[i] == sf_axis1) axis1 = static_cast<Eigen::Index>(i);
            if (fit.names[i] == sf_axis2) axis2 = static_cast<Eigen::Index>(i);
        }
        if (axis1 < 0 || axis2 < 0) {
            throw std::invalid_argument("surface: unknown parameter name for --axis1/--axis2");
        }
        const auto linspace = [](double lo, double hi, int n) {
            Eigen::VectorXd v(n);
            for (int i = 0; i < n; ++i) {
                v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
            }
            return v;
        };
        const auto surface = lossres::objective_surface(
            functor, fit.theta_hat, axis1, axis2, linspace(sf_min1, sf_max1, sf_steps1),
            linspace(sf_min2, sf_max2, sf_steps2));
        lossres::write_surface_csv((out_dir / "surface.csv").string(), surface);
        write_manifest(out_dir, "surface", args, 0,
                       {{"axis1", sf_axis1}, {"axis2", sf_axis2}}, {"surface.csv"});
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args, 0);
    } catch (const std::invalid_argument& e) {
        json err = {{"error", {{"type", "validation"}, {"message", e.what()}}}};
        std::cerr << err.dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        json err = {{"error", {{"type", "numerical"}, {"message", e.what()}}}};
        std::cerr << err.dump() << '\n';
        return 3;
    }
}
