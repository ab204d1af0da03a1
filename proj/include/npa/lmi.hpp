#pragma once

// Primal-dual interior point method for
//     maximize  b'y + b0   subject to  S(y) = G0 + sum_k y_k G_k  PSD (block diagonal)
// paired with
//     minimize  <G0, X> + b0  subject to  <G_k, X> = -b_k,  X PSD.
// Nesterov-Todd scaling, Mehrotra predictor-corrector, infeasible start.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "npa/error.hpp"

namespace npa {

struct SymEntry {
    int block = 0;
    int row = 0;
    int col = 0;  // row <= col; the entry stands for both (row,col) and (col,row)
    double value = 0.0;
};

struct LmiProblem {
    std::vector<int> block_sizes;
    std::vector<Eigen::MatrixXd> g0;
    std::vector<std::vector<SymEntry>> g;  // one sparse symmetric matrix per parameter
    Eigen::VectorXd b;
    double b0 = 0.0;

    int num_params() const { return int(g.size()); }
};

enum class SolveStatus { Optimal, NearOptimal, Infeasible, NumericalTrouble };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "Optimal";
        case SolveStatus::NearOptimal: return "NearOptimal";
        case SolveStatus::Infeasible: return "Infeasible";
        case SolveStatus::NumericalTrouble: return "NumericalTrouble";
    }
    return "NumericalTrouble";
}

struct SolverOptions {
    double gap_tol = 1e-8;
    double feas_tol = 1e-8;
    int max_iters = 200;
    double step_fraction = 0.98;
    bool verbose = false;
    /// Throw npa::Error for Infeasible / NumericalTrouble instead of returning the status.
    bool throw_on_failure = true;

    void check() const {
        if (!(gap_tol > 0) || !(feas_tol > 0)) fail(ErrorKind::InvalidArgument, "tolerances must be positive");
        if (max_iters < 1) fail(ErrorKind::InvalidArgument, "max_iters must be >= 1");
        if (!(step_fraction > 0 && step_fraction < 1)) fail(ErrorKind::InvalidArgument, "step_fraction must be in (0,1)");
    }
};

struct LmiResult {
    SolveStatus status = SolveStatus::NumericalTrouble;
    Eigen::VectorXd y;
    std::vector<Eigen::MatrixXd> x;  // dual matrices
    std::vector<Eigen::MatrixXd> s;  // slack S(y)
    double primal_value = 0.0;       // b'y + b0
    double dual_value = 0.0;         // <G0,X> + b0
    double primal_infeasibility = 0.0;  // of S(y) = G0 + sum y G (relative)
    double dual_infeasibility = 0.0;    // of <G_k,X> = -b_k (relative)
    double relative_gap = 0.0;
    int iterations = 0;
};

namespace lmi_detail {

using Blocks = std::vector<Eigen::MatrixXd>;

inline double inner(const Blocks& a, const Blocks& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i].cwiseProduct(b[i]).sum();
    return s;
}

inline double fro(const Blocks& a) { return std::sqrt(inner(a, a)); }

inline double inner_sparse(const std::vector<SymEntry>& gk, const Blocks& m) {
    double s = 0.0;
    for (const auto& e : gk) s += e.row == e.col ? e.value * m[e.block](e.row, e.row)
                                                 : e.value * (m[e.block](e.row, e.col) + m[e.block](e.col, e.row));
    return s;
}

inline void add_sparse(Blocks& m, const std::vector<SymEntry>& gk, double f) {
    for (const auto& e : gk) {
        m[e.block](e.row, e.col) += f * e.value;
        if (e.row != e.col) m[e.block](e.col, e.row) += f * e.value;
    }
}

inline Blocks zeros_like(const std::vector<int>& sizes) {
    Blocks out;
    for (int n : sizes) out.push_back(Eigen::MatrixXd::Zero(n, n));
    return out;
}

/// Largest alpha <= 1/frac-limit with M + alpha D PSD, using the Cholesky factor of M.
inline double max_step(const std::vector<Eigen::MatrixXd>& chol_l, const Blocks& d) {
    double alpha = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i].rows() == 0) continue;
        Eigen::MatrixXd t = chol_l[i].triangularView<Eigen::Lower>().solve(d[i]);
        t = chol_l[i].triangularView<Eigen::Lower>().solve(t.transpose().eval());
        t = 0.5 * (t + t.transpose()).eval();
        double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
        if (lmin < 0) alpha = std::min(alpha, -1.0 / lmin);
    }
    return alpha;
}

inline bool cholesky_blocks(const Blocks& m, std::vector<Eigen::MatrixXd>& l) {
    l.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        Eigen::LLT<Eigen::MatrixXd> llt(m[i]);
        if (llt.info() != Eigen::Success) return false;
        l[i] = llt.matrixL();
    }
    return true;
}

}  // namespace lmi_detail

inline LmiResult solve_lmi(const LmiProblem& p, const SolverOptions& opt) {
    using namespace lmi_detail;
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    opt.check();
    const int m = p.num_params();
    const std::size_t nb = p.block_sizes.size();
    int total_dim = 0;
    for (int n : p.block_sizes) total_dim += n;

    LmiResult res;
    res.y = VectorXd::Zero(m);
    if (total_dim == 0) {
        res.status = m == 0 || p.b.norm() == 0 ? SolveStatus::Optimal : SolveStatus::NumericalTrouble;
        res.primal_value = res.dual_value = p.b0;
        return res;
    }
    if (m == 0) {
        // nothing to optimize: feasibility of G0 alone
        res.s = p.g0;
        res.x = zeros_like(p.block_sizes);
        double lmin = 0.0;
        for (const auto& g : p.g0)
            if (g.rows()) lmin = std::min(lmin, Eigen::SelfAdjointEigenSolver<MatrixXd>(g, Eigen::EigenvaluesOnly).eigenvalues().minCoeff());
        res.status = lmin >= -opt.feas_tol ? SolveStatus::Optimal : SolveStatus::Infeasible;
        res.primal_value = res.dual_value = p.b0;
        res.primal_infeasibility = std::max(0.0, -lmin);
        return res;
    }

    // scaling for the starting point
    double norm_c = fro(p.g0);
    std::vector<double> norm_g(m, 0.0);
    for (int k = 0; k < m; ++k) {
        double s = 0.0;
        for (const auto& e : p.g[k]) s += (e.row == e.col ? 1.0 : 2.0) * e.value * e.value;
        norm_g[k] = std::sqrt(s);
    }
    double xi = std::max(10.0, std::sqrt(double(total_dim)));
    double eta = xi;
    for (int k = 0; k < m; ++k) xi = std::max(xi, double(total_dim) * (1.0 + std::abs(p.b[k])) / (1.0 + norm_g[k]));
    eta = std::max(eta, (1.0 + std::max(norm_c, *std::max_element(norm_g.begin(), norm_g.end()))) / std::sqrt(double(total_dim)));

    Blocks X, Z;
    for (int n : p.block_sizes) {
        X.push_back(xi * MatrixXd::Identity(n, n));
        Z.push_back(eta * MatrixXd::Identity(n, n));
    }
    VectorXd y = VectorXd::Zero(m);
    const double norm_b = p.b.norm();

    auto a_op = [&](const Blocks& mtx) {  // A(M)_k = <A_k, M> = -<G_k, M>
        VectorXd v(m);
        for (int k = 0; k < m; ++k) v[k] = -inner_sparse(p.g[k], mtx);
        return v;
    };

    // per-parameter data for the Schur complement: dense restriction of G_k to
    // the indices it touches in each block, and G_k as weights on a flat
    // column-major layout of all blocks
    struct Piece {
        int block = 0;
        std::vector<int> idx;
        MatrixXd dense;
    };
    std::vector<std::size_t> offset(nb + 1, 0);
    for (std::size_t i = 0; i < nb; ++i) offset[i + 1] = offset[i] + std::size_t(p.block_sizes[i]) * p.block_sizes[i];
    std::vector<double> flat(offset[nb], 0.0);
    std::vector<std::vector<Piece>> pieces(m);
    std::vector<std::vector<std::pair<std::size_t, double>>> flat_g(m);
    for (int k = 0; k < m; ++k) {
        std::vector<std::vector<int>> touched(nb);
        for (const auto& e : p.g[k]) {
            touched[e.block].push_back(e.row);
            touched[e.block].push_back(e.col);
            std::size_t n = std::size_t(p.block_sizes[e.block]);
            flat_g[k].push_back({offset[e.block] + std::size_t(e.col) * n + e.row, e.row == e.col ? e.value : 2.0 * e.value});
        }
        std::sort(flat_g[k].begin(), flat_g[k].end());
        for (std::size_t b = 0; b < nb; ++b) {
            auto& t = touched[b];
            if (t.empty()) continue;
            std::sort(t.begin(), t.end());
            t.erase(std::unique(t.begin(), t.end()), t.end());
            Piece pc{int(b), t, MatrixXd::Zero(int(t.size()), int(t.size()))};
            pieces[k].push_back(std::move(pc));
        }
        for (const auto& e : p.g[k]) {
            for (auto& pc : pieces[k]) {
                if (pc.block != e.block) continue;
                int r = int(std::lower_bound(pc.idx.begin(), pc.idx.end(), e.row) - pc.idx.begin());
                int c = int(std::lower_bound(pc.idx.begin(), pc.idx.end(), e.col) - pc.idx.begin());
                pc.dense(r, c) += e.value;
                if (r != c) pc.dense(c, r) += e.value;
            }
        }
    }

    double best_score = std::numeric_limits<double>::infinity();
    LmiResult best;
    int stall = 0;

    for (int iter = 0; iter <= opt.max_iters; ++iter) {
        // residuals
        VectorXd rp = p.b - a_op(X);
        Blocks rd = p.g0;
        for (std::size_t i = 0; i < nb; ++i) rd[i] -= Z[i];
        for (int k = 0; k < m; ++k) add_sparse(rd, p.g[k], y[k]);
        double pobj = inner(p.g0, X);
        double dobj = p.b.dot(y);
        double mu = inner(X, Z) / total_dim;
        double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        double xinf = rp.norm() / (1.0 + norm_b);
        double sinf = fro(rd) / (1.0 + norm_c);
        if (opt.verbose)
            std::fprintf(stderr, "iter %3d  pobj %+.10e  dobj %+.10e  gap %.2e  xinf %.2e  sinf %.2e  mu %.2e\n", iter, pobj,
                         dobj, relgap, xinf, sinf, mu);

        double score = std::max({relgap / opt.gap_tol, xinf / opt.feas_tol, sinf / opt.feas_tol});
        if (score < best_score) {
            best_score = score;
            best.y = y;
            best.x = X;
            best.s = Z;
            best.relative_gap = relgap;
            best.dual_infeasibility = xinf;
            best.primal_infeasibility = sinf;
            best.iterations = iter;
            stall = 0;
        } else {
            ++stall;
        }
        if (relgap < opt.gap_tol && xinf < opt.feas_tol && sinf < opt.feas_tol) {
            best.status = SolveStatus::Optimal;
            break;
        }
        // divergence: X unbounded with A(X) ~ b means S(y) infeasible
        double xn = fro(X), zn = fro(Z);
        if (xn > 1e8 * (1.0 + norm_b) && sinf > 1e3 * opt.feas_tol && xinf < 1e-3) {
            best.status = SolveStatus::Infeasible;
            best.y = y;
            best.x = X;
            best.s = Z;
            best.iterations = iter;
            break;
        }
        if (y.norm() > 1e8 * (1.0 + norm_c) || zn > 1e12) {
            best.status = SolveStatus::NumericalTrouble;
            break;
        }
        if (iter == opt.max_iters || stall > 15) break;

        // NT scaling
        std::vector<MatrixXd> lx;
        if (!cholesky_blocks(X, lx)) break;
        std::vector<MatrixXd> gmat(nb), ginv(nb), w(nb);
        std::vector<VectorXd> d(nb);
        bool ok = true;
        for (std::size_t i = 0; i < nb; ++i) {
            if (p.block_sizes[i] == 0) continue;
            MatrixXd t = lx[i].transpose() * Z[i] * lx[i];
            t = 0.5 * (t + t.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(t);
            VectorXd lam = es.eigenvalues();
            if (lam.minCoeff() <= 0) {
                ok = false;
                break;
            }
            d[i] = lam.cwiseSqrt();
            VectorXd q = lam.array().pow(-0.25);
            gmat[i] = lx[i] * es.eigenvectors() * q.asDiagonal();
            // G^{-1} = Lam^{1/4} U' L^{-1}
            MatrixXd linv = lx[i].triangularView<Eigen::Lower>().solve(MatrixXd::Identity(p.block_sizes[i], p.block_sizes[i]));
            ginv[i] = lam.array().pow(0.25).matrix().asDiagonal() * es.eigenvectors().transpose() * linv;
            w[i] = gmat[i] * gmat[i].transpose();
        }
        if (!ok) break;

        // Schur complement M_ij = <G_i, W G_j W>; W G_j W is formed blockwise
        // from the columns of W that G_j touches
        MatrixXd schur(m, m);
        for (int j = 0; j < m; ++j) {
            for (const auto& pc : pieces[j]) {
                MatrixXd ws(p.block_sizes[pc.block], pc.idx.size());
                for (std::size_t c = 0; c < pc.idx.size(); ++c) ws.col(c) = w[pc.block].col(pc.idx[c]);
                MatrixXd t = ws * pc.dense;
                Eigen::Map<MatrixXd>(flat.data() + offset[pc.block], p.block_sizes[pc.block], p.block_sizes[pc.block]).noalias() =
                    t * ws.transpose();
            }
            for (int i = 0; i <= j; ++i) {
                double v = 0.0;
                for (const auto& [pos, c] : flat_g[i]) v += c * flat[pos];
                schur(i, j) = v;
                schur(j, i) = v;
            }
            for (const auto& pc : pieces[j])
                std::fill(flat.begin() + offset[pc.block],
                          flat.begin() + offset[pc.block] + std::size_t(p.block_sizes[pc.block]) * p.block_sizes[pc.block], 0.0);
        }
        Eigen::LLT<MatrixXd> llt(schur);
        if (llt.info() != Eigen::Success) {
            double reg = 1e-13 * schur.diagonal().cwiseAbs().maxCoeff();
            schur.diagonal().array() += reg;
            llt.compute(schur);
            if (llt.info() != Eigen::Success) break;
        }

        auto direction = [&](const Blocks& rc, VectorXd& dy, Blocks& dx, Blocks& dz) {
            Blocks wrdw(nb);
            for (std::size_t i = 0; i < nb; ++i) wrdw[i] = w[i] * rd[i] * w[i];
            VectorXd rhs = rp - a_op(rc) + a_op(wrdw);
            dy = llt.solve(rhs);
            // a few rounds of refinement against the unassembled operator keep
            // A(dX) = Rp accurate when the Schur matrix is badly conditioned
            for (int round = 0; round < 4; ++round) {
                dz = rd;
                for (int k = 0; k < m; ++k) add_sparse(dz, p.g[k], dy[k]);
                dx.resize(nb);
                for (std::size_t i = 0; i < nb; ++i) {
                    dx[i] = rc[i] - w[i] * dz[i] * w[i];
                    dx[i] = 0.5 * (dx[i] + dx[i].transpose()).eval();
                }
                if (round == 3) break;
                VectorXd r = rp - a_op(dx);
                if (r.norm() <= 1e-15 * (1.0 + rp.norm() + rhs.norm())) break;
                dy += llt.solve(r);
            }
        };

        std::vector<MatrixXd> lz;
        if (!cholesky_blocks(Z, lz)) break;

        // predictor
        Blocks rc(nb);
        for (std::size_t i = 0; i < nb; ++i) rc[i] = -X[i];
        VectorXd dy;
        Blocks dx, dz;
        direction(rc, dy, dx, dz);
        double ap = std::min(1.0, max_step(lx, dx));
        double ad = std::min(1.0, max_step(lz, dz));
        double mu_aff = 0.0;
        for (std::size_t i = 0; i < nb; ++i) mu_aff += ((X[i] + ap * dx[i]).cwiseProduct(Z[i] + ad * dz[i])).sum();
        mu_aff /= total_dim;
        double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

        // corrector
        for (std::size_t i = 0; i < nb; ++i) {
            int n = p.block_sizes[i];
            if (n == 0) continue;
            MatrixXd dxs = ginv[i] * dx[i] * ginv[i].transpose();
            MatrixXd dzs = gmat[i].transpose() * dz[i] * gmat[i];
            MatrixXd prod = dxs * dzs;
            MatrixXd r = -0.5 * (prod + prod.transpose());
            for (int a = 0; a < n; ++a) r(a, a) += sigma * mu - d[i][a] * d[i][a];
            MatrixXd h(n, n);
            for (int a = 0; a < n; ++a)
                for (int c = 0; c < n; ++c) h(a, c) = 2.0 * r(a, c) / (d[i][a] + d[i][c]);
            rc[i] = gmat[i] * h * gmat[i].transpose();
        }
        direction(rc, dy, dx, dz);
        ap = std::min(1.0, opt.step_fraction * max_step(lx, dx));
        ad = std::min(1.0, opt.step_fraction * max_step(lz, dz));
        for (std::size_t i = 0; i < nb; ++i) {
            X[i] += ap * dx[i];
            Z[i] += ad * dz[i];
            X[i] = 0.5 * (X[i] + X[i].transpose()).eval();
            Z[i] = 0.5 * (Z[i] + Z[i].transpose()).eval();
        }
        y += ad * dy;
        if (opt.verbose) std::fprintf(stderr, "          sigma %.2e  ap %.3f  ad %.3f  |y| %.2e  |X| %.2e\n", sigma, ap, ad, y.norm(), fro(X));
        if (std::max(ap, ad) < 1e-10) break;
    }

    if (best.status != SolveStatus::Optimal && best.status != SolveStatus::Infeasible &&
        best.status != SolveStatus::NumericalTrouble)
        best.status = SolveStatus::NumericalTrouble;
    if (best.status == SolveStatus::NumericalTrouble && best_score < 1e3)
        best.status = SolveStatus::NearOptimal;
    if (best.y.size() != m) {
        best.y = y;
        best.x = X;
        best.s = Z;
    }
    // report S(y) exactly as implied by y
    best.s = p.g0;
    for (int k = 0; k < m; ++k) add_sparse(best.s, p.g[k], best.y[k]);
    best.primal_value = p.b.dot(best.y) + p.b0;
    best.dual_value = inner(p.g0, best.x) + p.b0;
    return best;
}

}  // namespace npa
