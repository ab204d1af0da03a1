#pragma once

// Solving MomentProblems: eliminate the linear equalities, shrink each block to
// a principal core on which the affine family has no common kernel, run the
// interior point method on the reduced LMI, then map everything back.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "npa/elimination.hpp"
#include "npa/error.hpp"
#include "npa/lmi.hpp"
#include "npa/relax.hpp"

namespace npa {

struct MomentSolution {
    std::vector<Eigen::MatrixXd> values;       // one symmetric matrix per block
    std::vector<double> variables;             // value of each moment variable
    double primal_value = 0.0;                 // objective attained by `values`
    double dual_value = 0.0;                   // upper bound from the dual matrices
    std::vector<double> dual_multipliers;      // one per constraint
    std::vector<Eigen::MatrixXd> dual_blocks;  // dual PSD matrices, full block size
    SolveStatus status = SolveStatus::NumericalTrouble;
    struct {
        double primal_infeasibility = 0.0;
        double dual_infeasibility = 0.0;
        double relative_gap = 0.0;
        int iterations = 0;
    } residuals;
    std::vector<int> core_sizes;  // block sizes actually handed to the IPM
    int num_free = 0;             // free parameters after elimination
};

struct CertifiedReport {
    std::vector<double> min_eig_per_block;
    double max_constraint_residual = 0.0;
    double max_class_spread = 0.0;  // largest deviation among cells sharing a variable
    double duality_gap = 0.0;
    double objective_recomputed = 0.0;
};

namespace sdp_detail {

using RowList = std::vector<std::pair<SparseTerms, double>>;

inline RowList constraint_rows(const MomentProblem& p) {
    RowList rows;
    rows.reserve(p.constraints.size());
    for (const auto& c : p.constraints) rows.push_back({c.terms, c.rhs});
    return rows;
}

inline Eigen::MatrixXd block_from_values(const MomentProblem& p, int b, const std::vector<double>& v) {
    int n = p.blocks[b].size;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) m(i, j) = m(j, i) = v[p.variable_at(b, i, j)];
    return m;
}

/// Indices whose principal submatrix carries all of a block: empty kernel
/// directions are located at a random point and confirmed at a second one.
inline std::vector<int> block_core(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2) {
    int n = int(s1.rows());
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    if (n <= 1) return all;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s1);
    double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    std::vector<int> ker;
    for (int i = 0; i < n; ++i)
        if (std::abs(es.eigenvalues()[i]) <= 1e-9 * scale) ker.push_back(i);
    if (ker.empty()) return all;
    Eigen::MatrixXd k(n, ker.size());
    for (std::size_t c = 0; c < ker.size(); ++c) k.col(c) = es.eigenvectors().col(ker[c]);
    double s2n = std::max(1.0, s2.norm());
    if ((s2 * k).norm() > 1e-8 * s2n) return all;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(k.transpose());
    std::vector<char> drop(n, 0);
    for (std::size_t c = 0; c < ker.size(); ++c) drop[qr.colsPermutation().indices()[c]] = 1;
    std::vector<int> core;
    for (int i = 0; i < n; ++i)
        if (!drop[i]) core.push_back(i);
    return core;
}

struct Reduction {
    Elimination elim;
    std::size_t num_rows = 0;  // constraints plus rows implied by kernel hints
    std::vector<std::vector<int>> core;
    LmiProblem lmi;
    std::vector<int> param_free;  // lmi parameter -> free index
};

inline Reduction reduce(const MomentProblem& p, bool facial) {
    Reduction r;
    RowList rows = constraint_rows(p);
    r.elim = Elimination(int(p.variables.size()), rows);
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    if (facial) {
        // a hint whose quadratic form vanishes at generic points vanishes on the
        // whole affine set; PSD then forces S v = 0 row by row
        std::vector<char> used(p.kernel_hints.size(), 0);
        for (bool changed = true; changed;) {
            changed = false;
            std::vector<std::vector<double>> pts;
            for (int t = 0; t < 3; ++t) {
                std::vector<double> y(r.elim.num_free());
                for (auto& v : y) v = u(rng);
                pts.push_back(r.elim.evaluate(y));
            }
            for (std::size_t h = 0; h < p.kernel_hints.size(); ++h) {
                if (used[h]) continue;
                const auto& hint = p.kernel_hints[h];
                bool zero = true;
                for (const auto& vals : pts) {
                    double q = 0.0, mag = 0.0;
                    for (auto [i, a] : hint.vec)
                        for (auto [j, c] : hint.vec) {
                            double t = a * c * vals[p.variable_at(hint.block, i, j)];
                            q += t;
                            mag += std::abs(t);
                        }
                    if (std::abs(q) > 1e-9 * (1.0 + mag)) zero = false;
                }
                if (!zero) continue;
                used[h] = 1;
                changed = true;
                for (int i = 0; i < p.blocks[hint.block].size; ++i) {
                    std::map<int, double> t;
                    for (auto [j, c] : hint.vec) t[p.variable_at(hint.block, i, j)] += c;
                    SparseTerms row;
                    for (auto [v, c] : t)
                        if (c != 0.0) row.push_back({v, c});
                    if (!row.empty()) rows.push_back({row, 0.0});
                }
            }
            if (changed) r.elim = Elimination(int(p.variables.size()), rows);
        }
    }
    r.num_rows = rows.size();
    const Elimination& e = r.elim;
    const int nb = int(p.blocks.size());
    r.core.resize(nb);
    if (facial && e.num_free() > 0) {
        std::vector<double> y1(e.num_free()), y2(e.num_free());
        for (auto& v : y1) v = u(rng);
        for (auto& v : y2) v = u(rng);
        auto v1 = e.evaluate(y1), v2 = e.evaluate(y2);
        for (int b = 0; b < nb; ++b) r.core[b] = block_core(block_from_values(p, b, v1), block_from_values(p, b, v2));
    } else {
        for (int b = 0; b < nb; ++b) {
            r.core[b].resize(p.blocks[b].size);
            for (int i = 0; i < p.blocks[b].size; ++i) r.core[b][i] = i;
        }
    }

    std::vector<int> wanted;
    for (int b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < r.core[b].size(); ++i)
            for (std::size_t j = i; j < r.core[b].size(); ++j) wanted.push_back(p.variable_at(b, r.core[b][i], r.core[b][j]));
    for (auto [v, c] : p.objective) wanted.push_back(v);
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    auto expr = e.expressions(wanted);

    std::vector<int> param_of(e.num_free(), -1);
    for (int b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < r.core[b].size(); ++i)
            for (std::size_t j = i; j < r.core[b].size(); ++j)
                for (auto [f, c] : expr.at(p.variable_at(b, r.core[b][i], r.core[b][j])).terms)
                    if (param_of[f] < 0) {
                        param_of[f] = int(r.param_free.size());
                        r.param_free.push_back(f);
                    }
    // keep parameter order deterministic by free index
    std::sort(r.param_free.begin(), r.param_free.end());
    for (std::size_t k = 0; k < r.param_free.size(); ++k) param_of[r.param_free[k]] = int(k);

    const int m = int(r.param_free.size());
    LmiProblem& L = r.lmi;
    L.g.assign(m, {});
    L.b = Eigen::VectorXd::Zero(m);
    L.b0 = p.objective_constant;
    for (int b = 0; b < nb; ++b) {
        int n = int(r.core[b].size());
        L.block_sizes.push_back(n);
        L.g0.push_back(Eigen::MatrixXd::Zero(n, n));
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                const AffineExpr& ex = expr.at(p.variable_at(b, r.core[b][i], r.core[b][j]));
                L.g0[b](i, j) = L.g0[b](j, i) = ex.constant;
                for (auto [f, c] : ex.terms) L.g[param_of[f]].push_back({b, i, j, c});
            }
    }
    for (auto [v, coef] : p.objective) {
        const AffineExpr& ex = expr.at(v);
        L.b0 += coef * ex.constant;
        for (auto [f, c] : ex.terms) {
            if (param_of[f] < 0) {
                if (std::abs(coef * c) > 1e-9) fail(ErrorKind::NumericalTrouble, "objective is unbounded: it moves a parameter no block constrains");
                continue;
            }
            L.b[param_of[f]] += coef * c;
        }
    }

    // linearly dependent parameter matrices would make the Schur system singular
    if (m > 0) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
        std::vector<std::vector<std::pair<int, double>>> by_cell;
        std::map<std::tuple<int, int, int>, std::vector<std::pair<int, double>>> cells;
        for (int k = 0; k < m; ++k)
            for (const auto& en : L.g[k]) cells[{en.block, en.row, en.col}].push_back({k, en.value});
        for (const auto& [key, terms] : cells) {
            double w = std::get<1>(key) == std::get<2>(key) ? 1.0 : 2.0;
            for (auto [k, a] : terms)
                for (auto [l, c] : terms) gram(k, l) += w * a * c;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        bool independent = llt.info() == Eigen::Success;
        if (independent) {
            Eigen::VectorXd d = Eigen::MatrixXd(llt.matrixL()).diagonal();
            independent = d.minCoeff() > 1e-7 * std::max(1.0, d.maxCoeff());
        }
        if (!independent) {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
            qr.setThreshold(1e-10);
            int rank = int(qr.rank());
            std::vector<int> keep;
            for (int c = 0; c < rank; ++c) keep.push_back(qr.colsPermutation().indices()[c]);
            std::sort(keep.begin(), keep.end());
            Eigen::MatrixXd gk(m, keep.size());
            Eigen::VectorXd bk(keep.size());
            for (std::size_t c = 0; c < keep.size(); ++c) {
                gk.col(c) = gram.col(keep[c]);
                bk[c] = L.b[keep[c]];
            }
            // b must lie in the span seen by the kept parameters
            Eigen::MatrixXd coeffs = gk.colPivHouseholderQr().solve(gram);
            Eigen::VectorXd implied = coeffs.transpose() * bk;
            if ((implied - L.b).cwiseAbs().maxCoeff() > 1e-7 * (1.0 + L.b.cwiseAbs().maxCoeff()))
                fail(ErrorKind::NumericalTrouble, "objective is unbounded along a direction invisible to the blocks");
            LmiProblem reduced;
            reduced.block_sizes = L.block_sizes;
            reduced.g0 = L.g0;
            reduced.b0 = L.b0;
            reduced.b = bk;
            std::vector<int> pf;
            for (int k : keep) {
                reduced.g.push_back(L.g[k]);
                pf.push_back(r.param_free[k]);
            }
            r.lmi = std::move(reduced);
            r.param_free = std::move(pf);
        }
    }
    return r;
}

}  // namespace sdp_detail

/// Maximizes the objective of `prob`. With opts.throw_on_failure, an
/// Infeasible or NumericalTrouble outcome throws npa::Error instead.
inline MomentSolution solve(const MomentProblem& prob, const SolverOptions& opts = {}) {
    opts.check();
    prob.validate();
    sdp_detail::Reduction red = sdp_detail::reduce(prob, true);
    LmiResult lr = solve_lmi(red.lmi, opts);
    if (opts.throw_on_failure) {
        if (lr.status == SolveStatus::Infeasible) fail(ErrorKind::Infeasible, "moment problem is infeasible");
        if (lr.status == SolveStatus::NumericalTrouble)
            fail(ErrorKind::NumericalTrouble, "interior point method did not converge (relative gap " +
                                                  std::to_string(lr.relative_gap) + ")");
    }

    MomentSolution sol;
    sol.status = lr.status;
    sol.residuals.primal_infeasibility = lr.primal_infeasibility;
    sol.residuals.dual_infeasibility = lr.dual_infeasibility;
    sol.residuals.relative_gap = lr.relative_gap;
    sol.residuals.iterations = lr.iterations;
    sol.num_free = red.elim.num_free();
    for (const auto& c : red.core) sol.core_sizes.push_back(int(c.size()));

    std::vector<double> yfree(red.elim.num_free(), 0.0);
    for (std::size_t k = 0; k < red.param_free.size(); ++k) yfree[red.param_free[k]] = lr.y[k];
    sol.variables = red.elim.evaluate(yfree);
    const int nb = int(prob.blocks.size());
    for (int b = 0; b < nb; ++b) sol.values.push_back(sdp_detail::block_from_values(prob, b, sol.variables));
    sol.primal_value = prob.objective_constant;
    for (auto [v, c] : prob.objective) sol.primal_value += c * sol.variables[v];

    std::vector<double> g(prob.variables.size(), 0.0);
    for (auto [v, c] : prob.objective) g[v] += c;
    for (int b = 0; b < nb; ++b) {
        const auto& core = red.core[b];
        int n = prob.blocks[b].size;
        Eigen::MatrixXd xf = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t i = 0; i < core.size(); ++i)
            for (std::size_t j = 0; j < core.size(); ++j) xf(core[i], core[j]) = lr.x.empty() ? 0.0 : lr.x[b](i, j);
        for (std::size_t i = 0; i < core.size(); ++i)
            for (std::size_t j = i; j < core.size(); ++j)
                g[prob.variable_at(b, core[i], core[j])] += (i == j ? 1.0 : 2.0) * xf(core[i], core[j]);
        sol.dual_blocks.push_back(std::move(xf));
    }
    sol.dual_value = lr.dual_value;
    sol.dual_multipliers = red.elim.multipliers(g, red.num_rows);
    sol.dual_multipliers.resize(prob.constraints.size());
    return sol;
}

inline CertifiedReport certify(const MomentProblem& prob, const MomentSolution& sol) {
    if (sol.values.size() != prob.blocks.size()) fail(ErrorKind::ShapeMismatch, "number of blocks differs");
    for (std::size_t b = 0; b < prob.blocks.size(); ++b)
        if (sol.values[b].rows() != prob.blocks[b].size || sol.values[b].cols() != prob.blocks[b].size)
            fail(ErrorKind::ShapeMismatch, "block " + std::to_string(b) + " has the wrong shape");
    CertifiedReport rep;
    for (const auto& m : sol.values) {
        Eigen::MatrixXd s = 0.5 * (m + m.transpose());
        rep.min_eig_per_block.push_back(
            s.rows() ? Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() : 0.0);
    }
    std::vector<double> v(prob.variables.size(), 0.0);
    for (std::size_t k = 0; k < prob.variables.size(); ++k) {
        const auto& cells = prob.variables[k].cells;
        if (cells.empty()) continue;
        double s = 0.0;
        for (const auto& c : cells) s += sol.values[c.block](c.row, c.col);
        v[k] = s / double(cells.size());
        for (const auto& c : cells) {
            rep.max_class_spread = std::max(rep.max_class_spread, std::abs(sol.values[c.block](c.row, c.col) - v[k]));
            rep.max_class_spread = std::max(rep.max_class_spread, std::abs(sol.values[c.block](c.col, c.row) - v[k]));
        }
    }
    // cell-less auxiliary variables take the solver's value when available
    for (std::size_t k = 0; k < prob.variables.size(); ++k)
        if (prob.variables[k].cells.empty() && k < sol.variables.size()) v[k] = sol.variables[k];
    for (const auto& c : prob.constraints) {
        double s = -c.rhs;
        for (auto [k, a] : c.terms) s += a * v[k];
        rep.max_constraint_residual = std::max(rep.max_constraint_residual, std::abs(s));
    }
    rep.max_constraint_residual = std::max(rep.max_constraint_residual, rep.max_class_spread);
    rep.objective_recomputed = prob.objective_constant;
    for (auto [k, c] : prob.objective) rep.objective_recomputed += c * v[k];
    rep.duality_gap = std::abs(sol.primal_value - sol.dual_value);
    return rep;
}

// ---------------------------------------------------------------- SDPA files

namespace sdp_detail {

inline std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x == 0.0 ? 0.0 : x);
    return buf;
}

}  // namespace sdp_detail

/// Free-parameter form of a problem: maximize b'y + offset s.t. F(y) PSD,
/// written as the SDPA problem  min c'x, sum x_k F_k - F_0 PSD  with c = -b,
/// F_0 = -G_0, F_k = G_k. The constant is returned through `objective_offset`.
inline std::string export_sdpa(const MomentProblem& prob, double* objective_offset = nullptr) {
    prob.validate();
    sdp_detail::Reduction red = sdp_detail::reduce(prob, false);
    const LmiProblem& L = red.lmi;
    if (objective_offset) *objective_offset = L.b0;
    std::ostringstream out;
    out << L.num_params() << "\n" << L.block_sizes.size() << "\n";
    for (std::size_t b = 0; b < L.block_sizes.size(); ++b) out << (b ? " " : "") << L.block_sizes[b];
    out << "\n";
    for (int k = 0; k < L.num_params(); ++k) out << (k ? " " : "") << sdp_detail::fmt17(-L.b[k]);
    out << "\n";
    for (std::size_t b = 0; b < L.block_sizes.size(); ++b)
        for (int i = 0; i < L.block_sizes[b]; ++i)
            for (int j = i; j < L.block_sizes[b]; ++j)
                if (L.g0[b](i, j) != 0.0)
                    out << "0 " << b + 1 << " " << i + 1 << " " << j + 1 << " " << sdp_detail::fmt17(-L.g0[b](i, j)) << "\n";
    for (int k = 0; k < L.num_params(); ++k) {
        std::vector<SymEntry> es = L.g[k];
        std::sort(es.begin(), es.end(), [](const SymEntry& a, const SymEntry& c) {
            return std::tie(a.block, a.row, a.col) < std::tie(c.block, c.row, c.col);
        });
        for (const auto& e : es)
            if (e.value != 0.0)
                out << k + 1 << " " << e.block + 1 << " " << e.row + 1 << " " << e.col + 1 << " " << sdp_detail::fmt17(e.value) << "\n";
    }
    return out.str();
}

struct SdpaProblem {
    int m = 0;
    std::vector<int> block_sizes;
    std::vector<double> c;
    struct Entry {
        int k, block, row, col;  // 0-based, row <= col
        double value;
    };
    std::vector<Entry> entries;
};

inline SdpaProblem parse_sdpa(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!line.empty() && (line[0] == '"' || line[0] == '*')) continue;
        for (char& ch : line)
            if (ch == ',' || ch == '{' || ch == '}' || ch == '(' || ch == ')') ch = ' ';
        lines.push_back(line);
    }
    auto bad = [](const std::string& why) { fail(ErrorKind::Parse, "SDPA: " + why); };
    if (lines.size() < 3) bad("truncated header");
    SdpaProblem p;
    std::size_t li = 0;
    auto next_line = [&]() -> std::istringstream {
        while (li < lines.size() && lines[li].find_first_not_of(" \t\r") == std::string::npos) ++li;
        if (li >= lines.size()) bad("truncated header");
        return std::istringstream(lines[li++]);
    };
    if (!(next_line() >> p.m) || p.m < 0) bad("mDIM");
    int nblock = 0;
    if (!(next_line() >> nblock) || nblock < 1) bad("nBLOCK");
    {
        auto s = next_line();
        for (int b = 0; b < nblock; ++b) {
            int n;
            if (!(s >> n) || n == 0) bad("block sizes");
            if (n < 0) bad("diagonal blocks are not supported");
            p.block_sizes.push_back(n);
        }
    }
    if (p.m > 0) {
        std::vector<double> c;
        while (int(c.size()) < p.m) {
            auto s = next_line();
            double v;
            while (s >> v) c.push_back(v);
        }
        if (int(c.size()) != p.m) bad("objective vector length");
        p.c = c;
    } else if (li < lines.size() && lines[li].find_first_not_of(" \t\r") == std::string::npos) {
        ++li;  // empty objective line
    }
    for (; li < lines.size(); ++li) {
        std::istringstream s(lines[li]);
        SdpaProblem::Entry e;
        if (!(s >> e.k)) continue;
        if (!(s >> e.block >> e.row >> e.col >> e.value)) bad("entry line '" + lines[li] + "'");
        e.block -= 1;
        e.row -= 1;
        e.col -= 1;
        if (e.k < 0 || e.k > p.m || e.block < 0 || e.block >= nblock || e.row < 0 || e.col < 0 ||
            e.row >= p.block_sizes[e.block] || e.col >= p.block_sizes[e.block])
            bad("entry out of range");
        if (e.row > e.col) std::swap(e.row, e.col);
        p.entries.push_back(e);
    }
    return p;
}

/// The SDPA problem as a maximization MomentProblem: maximize -c'x + offset.
/// Variables 0..m-1 are the x's; every upper-triangle cell follows as its own
/// variable, tied to the x's by one equality.
inline MomentProblem sdpa_to_moment_problem(const SdpaProblem& s, double offset = 0.0) {
    MomentProblem p;
    p.kind = Hierarchy::Custom;
    for (int k = 0; k < s.m; ++k) p.variables.push_back({-1, Word(), {}});
    std::vector<std::vector<int>> cell_index(s.block_sizes.size());
    for (std::size_t b = 0; b < s.block_sizes.size(); ++b) {
        int n = s.block_sizes[b];
        p.blocks.push_back({"block" + std::to_string(b), n, {}, std::nullopt});
        cell_index[b].assign(std::size_t(n) * n, -1);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                cell_index[b][std::size_t(i) * n + j] = int(p.variables.size());
                p.variables.push_back({int(b), Word(), {{int(b), i, j}}});
            }
    }
    p.index_cells();
    // cell - sum_k x_k F_k[ij] = -F0[ij]
    std::map<int, std::map<int, double>> rows;
    std::map<int, double> rhs;
    for (std::size_t v = s.m; v < p.variables.size(); ++v) rows[int(v)][int(v)] = 1.0;
    for (const auto& e : s.entries) {
        int n = s.block_sizes[e.block];
        int v = cell_index[e.block][std::size_t(e.row) * n + e.col];
        if (e.k == 0)
            rhs[v] -= e.value;
        else
            rows[v][e.k - 1] -= e.value;
    }
    for (auto& [v, terms] : rows) {
        LinearConstraint c;
        c.kind = ConstraintKind::Affine;
        c.rhs = rhs[v];
        for (auto [k, a] : terms)
            if (a != 0.0) c.terms.push_back({k, a});
        p.constraints.push_back(std::move(c));
    }
    for (int k = 0; k < s.m; ++k)
        if (s.c[k] != 0.0) p.objective[k] = -s.c[k];
    p.objective_constant = offset;
    return p;
}

}  // namespace npa
