#include "lossres/triangle.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lossres/stable.hpp"
#include "lossres/tweedie.hpp"

namespace lossres {

Triangle Triangle::trapezoid(Eigen::Index n_ay, Eigen::Index n_dy) {
    Triangle tri;
    tri.values = Eigen::MatrixXd::Zero(n_ay, n_dy);
    tri.observed.setConstant(n_ay, n_dy, false);
    for (Eigen::Index i = 0; i < n_ay; ++i) {
        for (Eigen::Index j = 0; j < n_dy; ++j) {
            if (i + j + 2 <= n_ay + 1) tri.observed(i, j) = true;
        }
    }
    return tri;
}

void validate(const DevelopmentPattern& pattern, Eigen::Index n_ay, Eigen::Index n_dy) {
    if (pattern.eta.size() != n_ay || pattern.nu.size() != n_dy) {
        throw std::invalid_argument("pattern dimensions do not match triangle");
    }
    if ((pattern.eta.array() <= 0.0).any() || (pattern.nu.array() <= 0.0).any()) {
        throw std::invalid_argument("pattern eta/nu entries must be > 0");
    }
    if (!(pattern.gamma > 0.0)) {
        throw std::invalid_argument("pattern gamma must be > 0");
    }
    if (pattern.weights.size() != 0 &&
        (pattern.weights.rows() != n_ay || pattern.weights.cols() != n_dy)) {
        throw std::invalid_argument("pattern weights shape mismatch");
    }
}

DevelopmentPattern normalize_nu1(const DevelopmentPattern& pattern) {
    DevelopmentPattern out = pattern;
    const double c = pattern.nu[0];
    out.nu /= c;
    out.eta *= c;
    return out;
}

namespace {

// Cumulative claims along each row, NaN once a row stops being observed.
Eigen::MatrixXd cumulative(const Triangle& tri, Eigen::VectorXi& row_last) {
    const Eigen::Index n = tri.n_ay(), m = tri.n_dy();
    Eigen::MatrixXd cum = Eigen::MatrixXd::Constant(n, m, std::nan(""));
    row_last = Eigen::VectorXi::Constant(n, -1);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < m && tri.observed(i, j); ++j) {
            acc += tri.values(i, j);
            cum(i, j) = acc;
            row_last[i] = static_cast<int>(j);
        }
    }
    return cum;
}

}  // namespace

ChainLadderResult chain_ladder(const Triangle& tri) {
    const Eigen::Index n = tri.n_ay(), m = tri.n_dy();
    Eigen::VectorXi row_last;
    const Eigen::MatrixXd cum = cumulative(tri, row_last);
    if ((row_last.array() < 0).all()) {
        throw std::invalid_argument("chain_ladder: triangle has no observed cells");
    }

    ChainLadderResult res;
    res.dev_factors.resize(m - 1);
    for (Eigen::Index j = 0; j + 1 < m; ++j) {
        double num = 0.0, den = 0.0;
        bool any = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (row_last[i] >= j + 1) {
                num += cum(i, j + 1);
                den += cum(i, j);
                any = true;
            }
        }
        if (!any) {
            throw std::invalid_argument("chain_ladder: no observed pair for development year " +
                                        std::to_string(j + 1));
        }
        if (den == 0.0) {
            throw std::invalid_argument("chain_ladder: zero cumulative denominator at column " +
                                        std::to_string(j + 1));
        }
        res.dev_factors[j] = num / den;
    }

    res.completed.values = Eigen::MatrixXd::Zero(n, m);
    res.completed.observed.setConstant(n, m, true);
    res.outstanding_by_ay = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (row_last[i] < 0) {
            throw std::invalid_argument("chain_ladder: accident year " + std::to_string(i + 1) +
                                        " has no observed cells");
        }
        double running = 0.0;
        for (Eigen::Index j = 0; j <= row_last[i]; ++j) {
            res.completed.values(i, j) = tri.values(i, j);
            running += tri.values(i, j);
        }
        const double latest = running;
        for (Eigen::Index j = row_last[i] + 1; j < m; ++j) {
            const double next = running * res.dev_factors[j - 1];
            res.completed.values(i, j) = next - running;
            running = next;
        }
        res.outstanding_by_ay[i] = running - latest;
    }
    res.total_outstanding = res.outstanding_by_ay.sum();
    return res;
}

Triangle simulate_triangle(const DevelopmentPattern& pattern, const CellFamily& family,
                           RngStream& rng, const Triangle& like) {
    validate(pattern, like.n_ay(), like.n_dy());
    Triangle out;
    out.values = Eigen::MatrixXd::Zero(like.n_ay(), like.n_dy());
    out.observed = like.observed;
    for (Eigen::Index i = 0; i < like.n_ay(); ++i) {
        for (Eigen::Index j = 0; j < like.n_dy(); ++j) {
            if (!out.observed(i, j)) continue;
            const double mean = pattern.mean(i, j);
            if (family.kind == CellFamily::Kind::tweedie) {
                out.values(i, j) = tweedie_sample({family.shape, mean, pattern.gamma}, rng);
            } else {
                out.values(i, j) =
                    stable_sample({family.shape, mean, pattern.gamma, 1.0}, rng);
            }
        }
    }
    return out;
}

Triangle simulate_triangle(const DevelopmentPattern& pattern, const CellFamily& family,
                           RngStream& rng) {
    return simulate_triangle(pattern, family, rng,
                             Triangle::trapezoid(pattern.eta.size(), pattern.nu.size()));
}

Eigen::VectorXd outstanding_mean(const DevelopmentPattern& pattern, double systematic_mean,
                                 const Triangle& tri) {
    validate(pattern, tri.n_ay(), tri.n_dy());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(tri.n_ay());
    for (Eigen::Index i = 0; i < tri.n_ay(); ++i) {
        for (Eigen::Index j = 0; j < tri.n_dy(); ++j) {
            if (!tri.observed(i, j)) out[i] += pattern.mean(i, j) + systematic_mean;
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

}  // namespace

std::vector<NamedTriangle> read_triangles_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open triangle csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty triangle csv: " + path);

    struct Cell {
        int i, j;
        double v;
    };
    std::vector<std::string> order;
    std::map<std::string, std::vector<Cell>> cells;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 4) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": expected lob,accident_year,development_year,value");
        }
        if (cells.find(f[0]) == cells.end()) order.push_back(f[0]);
        cells[f[0]].push_back({std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3])});
    }

    std::vector<NamedTriangle> out;
    for (const auto& lob : order) {
        int n = 0, m = 0;
        for (const auto& c : cells[lob]) {
            n = std::max(n, c.i);
            m = std::max(m, c.j);
        }
        Triangle tri;
        tri.values = Eigen::MatrixXd::Zero(n, m);
        tri.observed.setConstant(n, m, false);
        for (const auto& c : cells[lob]) {
            if (c.i < 1 || c.j < 1) {
                throw std::invalid_argument(path + ": accident/development years are 1-based");
            }
            tri.values(c.i - 1, c.j - 1) = c.v;
            tri.observed(c.i - 1, c.j - 1) = true;
        }
        out.push_back({lob, std::move(tri)});
    }
    return out;
}

void write_triangles_csv(const std::string& path, const std::vector<NamedTriangle>& tris) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write triangle csv: " + path);
    out << "lob,accident_year,development_year,value\n";
    char buf[64];
    for (const auto& nt : tris) {
        for (Eigen::Index i = 0; i < nt.tri.n_ay(); ++i) {
            for (Eigen::Index j = 0; j < nt.tri.n_dy(); ++j) {
                if (!nt.tri.observed(i, j)) continue;
                std::snprintf(buf, sizeof(buf), "%.17g", nt.tri.values(i, j));
                out << nt.lob << ',' << (i + 1) << ',' << (j + 1) << ',' << buf << '\n';
            }
        }
    }
}

std::vector<PremiumRecord> read_premiums_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open premium csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty premium csv: " + path);
    std::vector<PremiumRecord> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 3) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": expected lob,accident_year,premium");
        }
        out.push_back({f[0], std::stoi(f[1]), std::stod(f[2])});
    }
    return out;
}

}  // namespace lossres
