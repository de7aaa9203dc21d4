#include "lossres/json_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace lossres {

using nlohmann::json;

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

}  // namespace

json to_json(const AbrmSpec& spec) {
    json j;
    j["family"] = spec.family == AbrmSpec::Family::tweedie ? "tweedie" : "stable";
    j["shape"] = spec.shape;
    j["lines"] = json::array();
    for (Eigen::Index k = 0; k < spec.n_lines(); ++k) {
        const auto& line = spec.lines[k];
        json jl;
        jl["name"] = spec.line_name(k);
        jl["eta"] = vector_to_json(line.eta);
        jl["nu"] = vector_to_json(line.nu);
        jl["gamma"] = line.gamma;
        j["lines"].push_back(jl);
    }
    if (spec.has_systematic) {
        j["systematic"] = {{"a", spec.sys_a}, {"b", spec.sys_b}};
        // Shock loadings are derived quantities; written out for inspection
        // and cross-checked against the parameters on load.
        json loadings = json::array();
        for (Eigen::Index k = 0; k < spec.n_lines(); ++k) {
            json rows = json::array();
            for (Eigen::Index i = 0; i < spec.n_ay(); ++i) {
                json row = json::array();
                for (Eigen::Index jj = 0; jj < spec.n_dy(); ++jj) {
                    row.push_back(loading_b(spec, i, jj, k));
                }
                rows.push_back(row);
            }
            loadings.push_back(rows);
        }
        j["loadings_b"] = loadings;
    }
    return j;
}

AbrmSpec abrm_spec_from_json(const json& j) {
    AbrmSpec spec;
    const std::string family = j.at("family").get<std::string>();
    if (family == "tweedie") {
        spec.family = AbrmSpec::Family::tweedie;
    } else if (family == "stable") {
        spec.family = AbrmSpec::Family::stable;
    } else {
        throw std::invalid_argument("spec json: unknown family '" + family + "'");
    }
    spec.shape = j.at("shape").get<double>();
    for (const auto& jl : j.at("lines")) {
        DevelopmentPattern line;
        line.eta = vector_from_json(jl.at("eta"));
        line.nu = vector_from_json(jl.at("nu"));
        line.gamma = jl.at("gamma").get<double>();
        spec.lines.push_back(std::move(line));
        spec.line_names.push_back(jl.value("name", ""));
    }
    if (j.contains("systematic")) {
        spec.has_systematic = true;
        spec.sys_a = j["systematic"].at("a").get<double>();
        spec.sys_b = j["systematic"].at("b").get<double>();
    }
    validate(spec);
    if (j.contains("loadings_b")) {
        const auto& loadings = j["loadings_b"];
        for (Eigen::Index k = 0; k < spec.n_lines(); ++k) {
            for (Eigen::Index i = 0; i < spec.n_ay(); ++i) {
                for (Eigen::Index jj = 0; jj < spec.n_dy(); ++jj) {
                    const double stored = loadings[k][i][jj].get<double>();
                    const double fresh = loading_b(spec, i, jj, k);
                    if (std::fabs(stored - fresh) >
                        1e-9 * std::max({1.0, std::fabs(stored), std::fabs(fresh)})) {
                        throw std::invalid_argument(
                            "spec json: stored loadings disagree with parameters at line " +
                            std::to_string(k + 1));
                    }
                }
            }
        }
    }
    return spec;
}

json to_json(const CgmmConfig& config) {
    json j;
    j["transform"] = config.transform == TransformKind::mgf ? "mgf" : "cf";
    j["kernel_form"] = config.kernel_form == KernelForm::covariance ? "covariance" : "wick";
    j["kernel_policy"] = config.kernel_policy == KernelPolicy::continuously_updated
                             ? "continuously-updated"
                             : "fixed-at-initial";
    j["lambda"] = config.lambda;
    j["objective_scale"] = config.objective_scale;
    j["pooled"] = config.pooled;
    if (config.grid.size() > 0) {
        j["grid"] = {{"kind", config.grid.kind == TransformKind::mgf ? "mgf" : "cf"},
                     {"t_max", -config.grid.per_line_lo},
                     {"q_per_line", config.grid.q_per_line},
                     {"n_lines", config.grid.n_lines()},
                     {"concentration", config.grid.concentration == GridConcentration::uniform
                                           ? "uniform"
                                           : "log"},
                     {"decades", config.grid.decades}};
    }
    return j;
}

CgmmConfig cgmm_config_from_json(const json& j) {
    CgmmConfig config;
    config.transform = j.value("transform", "mgf") == "cf" ? TransformKind::cf
                                                           : TransformKind::mgf;
    config.kernel_form =
        j.value("kernel_form", "covariance") == "wick" ? KernelForm::wick
                                                       : KernelForm::covariance;
    config.kernel_policy = j.value("kernel_policy", "continuously-updated") == "fixed-at-initial"
                               ? KernelPolicy::fixed_at_initial
                               : KernelPolicy::continuously_updated;
    config.lambda = j.value("lambda", 1e-7);
    config.objective_scale = j.value("objective_scale", 1.0);
    config.pooled = j.value("pooled", false);
    if (j.contains("grid")) {
        const auto& jg = j["grid"];
        const double t_max = jg.at("t_max").get<double>();
        const Eigen::Index q = jg.at("q_per_line").get<Eigen::Index>();
        const Eigen::Index n_lines = jg.at("n_lines").get<Eigen::Index>();
        if (jg.value("kind", "mgf") == "cf") {
            config.grid = make_cf_grid(t_max, q, n_lines);
        } else {
            const GridConcentration conc = jg.value("concentration", "uniform") == "log"
                                               ? GridConcentration::log_spaced
                                               : GridConcentration::uniform;
            config.grid = make_mgf_grid(t_max, q, n_lines, conc, jg.value("decades", 3.0));
        }
    }
    return config;
}

json to_json(const FitResult& result) {
    json j;
    j["method"] = result.method;
    j["model"] = to_json(result.model);
    json params;
    for (std::size_t i = 0; i < result.names.size(); ++i) {
        params[result.names[i]] = result.theta_hat[static_cast<Eigen::Index>(i)];
    }
    j["parameters"] = params;
    j["objective_value"] = result.objective_value;
    j["n_starts"] = result.n_starts;
    j["converged"] = result.converged;
    if (!result.diagnostics.empty()) j["diagnostics"] = result.diagnostics;
    if (result.method == "cgmm") j["config"] = to_json(result.config);
    return j;
}

FitResult fit_result_from_json(const json& j) {
    FitResult result;
    result.method = j.at("method").get<std::string>();
    result.model = abrm_spec_from_json(j.at("model"));
    result.objective_value = j.value("objective_value", 0.0);
    result.n_starts = j.value("n_starts", 0);
    result.converged = j.value("converged", false);
    if (j.contains("config")) result.config = cgmm_config_from_json(j["config"]);
    const ParameterLayout layout = ParameterLayout::infer(result.model);
    result.theta_hat = layout.pack(result.model);
    result.names = layout.names(result.model);
    return result;
}

json to_json(const SummaryStats& stats) {
    return {{"mean", stats.mean}, {"median", stats.median}, {"sd", stats.sd},
            {"q05", stats.q05},   {"q95", stats.q95},       {"q99", stats.q99}};
}

json to_json(const BootstrapSummary& summary, const std::vector<std::string>& line_names) {
    json j;
    j["replicates_requested"] = summary.requested;
    j["replicates_used"] = summary.replicates;
    j["replicates_failed"] = summary.failed;
    j["total_outstanding"] = to_json(summary.total);
    json per_ay = json::array();
    for (const auto& s : summary.per_ay) per_ay.push_back(to_json(s));
    j["per_ay_outstanding"] = per_ay;
    json lines;
    for (std::size_t k = 0; k < summary.per_line_total.size(); ++k) {
        const std::string name =
            k < line_names.size() ? line_names[k] : "line" + std::to_string(k + 1);
        json jl;
        jl["total"] = to_json(summary.per_line_total[k]);
        json ay = json::array();
        for (const auto& s : summary.per_line_ay[k]) ay.push_back(to_json(s));
        jl["per_ay"] = ay;
        lines[name] = jl;
    }
    j["lines"] = lines;
    return j;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open json file: " + path);
    json j;
    in >> j;
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write json file: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace lossres
