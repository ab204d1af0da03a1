#pragma once

// Rank-loop detection on sequential solutions and reconstruction of a finite
// dimensional model from flat moment data.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npa/error.hpp"
#include "npa/relax.hpp"
#include "npa/scenario.hpp"
#include "npa/sdp.hpp"

namespace npa {

/// Eigenvalues above rel_tol * max(lambda_max, 1).
inline int numerical_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-7) {
    if (m.rows() != m.cols()) fail(ErrorKind::ShapeMismatch, "numerical_rank needs a square matrix");
    if (m.rows() == 0) return 0;
    Eigen::MatrixXd s = 0.5 * (m + m.transpose());
    Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s, Eigen::EigenvaluesOnly).eigenvalues();
    double cut = rel_tol * std::max(ev.maxCoeff(), 1.0);
    return int((ev.array() > cut).count());
}

struct FlatnessReport {
    int rank_full = 0;
    int rank_trunc = 0;
    std::vector<bool> per_ax_flat;  // indexed like the sequential blocks, x * nA + a
    double tol_used = 0.0;
    bool is_flat = false;
    /// flat at one of 1e-6 / 1e-8 but not the other
    bool borderline = false;
    std::string diagnostics;
};

namespace extract_detail {

inline void require_sequential(const MomentProblem& p, const MomentSolution& sol) {
    if (p.kind != Hierarchy::Sequential || !p.scenario) fail(ErrorKind::InvalidArgument, "expected a sequential problem");
    if (p.level < 2) fail(ErrorKind::LevelTooSmall, "flatness needs level >= 2");
    if (sol.values.size() != p.blocks.size()) fail(ErrorKind::ShapeMismatch, "solution does not match the problem");
    for (std::size_t b = 0; b < p.blocks.size(); ++b)
        if (sol.values[b].rows() != p.blocks[b].size) fail(ErrorKind::ShapeMismatch, "solution block has the wrong size");
}

/// Theta = sum_a Theta(a|0)
inline Eigen::MatrixXd theta(const MomentProblem& p, const MomentSolution& sol) {
    const Scenario& s = *p.scenario;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(p.blocks[0].size, p.blocks[0].size);
    for (int a = 0; a < s.alice_outputs(); ++a) t += sol.values[sequential_block(s, a, 0)];
    return 0.5 * (t + t.transpose());
}

inline bool flat_at(const Eigen::MatrixXd& full, int k, double tol) {
    return numerical_rank(full, tol) == numerical_rank(full.topLeftCorner(k, k), tol);
}

/// Symmetric square root and inverse square root of a positive definite matrix.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sqrt_pair(const Eigen::MatrixXd& g) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (g + g.transpose()));
    Eigen::VectorXd l = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd& u = es.eigenvectors();
    Eigen::MatrixXd r = u * l.asDiagonal() * u.transpose();
    Eigen::MatrixXd ri = u * l.cwiseInverse().asDiagonal() * u.transpose();
    return {r, ri};
}

inline double min_eig(const Eigen::MatrixXd& m) {
    if (m.rows() == 0) return 0.0;
    Eigen::MatrixXd s = 0.5 * (m + m.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace extract_detail

inline FlatnessReport check_flat(const MomentProblem& p, const MomentSolution& sol, double rel_tol = 1e-7,
                                 bool require_per_ax = false) {
    using namespace extract_detail;
    require_sequential(p, sol);
    const WordBasis& basis = p.blocks[0].basis;
    int k = int(basis.count_up_to(p.level - 1));
    Eigen::MatrixXd t = theta(p, sol);
    FlatnessReport rep;
    rep.tol_used = rel_tol;
    rep.rank_full = numerical_rank(t, rel_tol);
    rep.rank_trunc = numerical_rank(t.topLeftCorner(k, k), rel_tol);
    bool all_ax = true;
    for (const auto& v : sol.values) {
        Eigen::MatrixXd s = 0.5 * (v + v.transpose());
        bool f = numerical_rank(s, rel_tol) == numerical_rank(s.topLeftCorner(k, k), rel_tol);
        rep.per_ax_flat.push_back(f);
        all_ax = all_ax && f;
    }
    rep.is_flat = rep.rank_full == rep.rank_trunc && (!require_per_ax || all_ax);
    rep.borderline = flat_at(t, k, 1e-6) != flat_at(t, k, 1e-8);
    std::ostringstream d;
    d << "rank(Theta) = " << rep.rank_full << ", rank(Theta truncated to degree " << p.level - 1 << ") = " << rep.rank_trunc
      << " at rel_tol " << rel_tol;
    if (rep.borderline) d << "; ranks disagree between rel_tol 1e-6 and 1e-8";
    rep.diagnostics = d.str();
    return rep;
}

/// [[A, B], [B^T, Z^T A Z]] with Z = A^+ B; requires range(B) inside range(A).
inline Eigen::MatrixXd flat_extend(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double rel_tol = 1e-10) {
    if (a.rows() != a.cols() || b.rows() != a.rows()) fail(ErrorKind::ShapeMismatch, "flat_extend: incompatible shapes");
    const Eigen::Index n = a.rows(), m = b.cols();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n + m, n + m);
    if (n == 0) return out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    const Eigen::VectorXd& l = es.eigenvalues();
    double cut = rel_tol * std::max(l.maxCoeff(), 1.0);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd range_proj = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (l[i] > cut) {
            inv[i] = 1.0 / l[i];
            range_proj += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
        }
    double bn = b.norm();
    if ((b - range_proj * b).norm() > 1e-8 * std::max(bn, 1e-300) && bn > 0)
        fail(ErrorKind::RangeViolation, "flat_extend: border leaves the range of A");
    Eigen::MatrixXd z = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * b;
    Eigen::MatrixXd c = z.transpose() * a * z;
    out.topLeftCorner(n, n) = a;
    out.topRightCorner(n, m) = b;
    out.bottomLeftCorner(m, n) = b.transpose();
    out.bottomRightCorner(m, m) = 0.5 * (c + c.transpose());
    return out;
}

/// Finite dimensional model in the (non-orthonormal) basis of selected Bob
/// words. Inner product <u, v> = u^T gram v.
struct GnsModel {
    Scenario scenario{1, 1, 1, 1};
    int dim = 0;
    std::vector<Word> basis_words;
    Eigen::VectorXd omega;
    std::vector<Eigen::MatrixXd> bob_ops;    // index y * nB + b
    std::vector<Eigen::MatrixXd> alice_ops;  // index x * nA + a
    Eigen::MatrixXd gram;

    const Eigen::MatrixXd& bob(int b, int y) const { return bob_ops.at(std::size_t(y) * scenario.bob_outputs() + b); }
    const Eigen::MatrixXd& alice(int a, int x) const { return alice_ops.at(std::size_t(x) * scenario.alice_outputs() + a); }
};

struct ModelReport {
    Correlation born{Scenario(1, 1, 1, 1)};
    double score = 0.0;
    double omega_norm_residual = 0.0;        // | <omega, omega> - 1 |
    double bob_projection_residual = 0.0;    // max ||P^2 - P||_F
    double bob_completeness_residual = 0.0;  // max_y ||sum_b P - 1||_F
    double bob_min_eig = 0.0;
    double alice_completeness_residual = 0.0;  // max_x ||sum_a A - 1||_F
    double alice_min_eig = 0.0;
    double alice_sum_x_spread = 0.0;           // max_x ||sum_a A(.|x) - sum_a A(.|0)||_F
    double commutant_residual = 0.0;           // max ||[A, P]||_F
};

/// Operators moved to an orthonormal frame by the Gram square root.
struct OrthonormalModel {
    Eigen::VectorXd omega;
    std::vector<Eigen::MatrixXd> bob_ops, alice_ops;
};

inline OrthonormalModel orthonormal(const GnsModel& m) {
    auto [r, ri] = extract_detail::sqrt_pair(m.gram);
    OrthonormalModel o;
    o.omega = r * m.omega;
    for (const auto& b : m.bob_ops) o.bob_ops.push_back(r * b * ri);
    for (const auto& a : m.alice_ops) o.alice_ops.push_back(r * a * ri);
    return o;
}

inline ModelReport verify_model(const GnsModel& m, const BellFunctional& f) {
    using extract_detail::min_eig;
    if (!(m.scenario == f.scenario())) fail(ErrorKind::ScenarioMismatch, "model and game scenarios differ");
    const Scenario& s = m.scenario;
    OrthonormalModel o = orthonormal(m);
    const int d = m.dim;
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    ModelReport rep;
    rep.born = Correlation(s);
    rep.omega_norm_residual = std::abs(o.omega.squaredNorm() - 1.0);
    rep.bob_min_eig = rep.alice_min_eig = std::numeric_limits<double>::infinity();
    for (int y = 0; y < s.bob_inputs(); ++y) {
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
        for (int b = 0; b < s.bob_outputs(); ++b) {
            const Eigen::MatrixXd& p = o.bob_ops[std::size_t(y) * s.bob_outputs() + b];
            rep.bob_projection_residual = std::max(rep.bob_projection_residual, (p * p - p).norm());
            rep.bob_min_eig = std::min(rep.bob_min_eig, min_eig(p));
            sum += p;
        }
        rep.bob_completeness_residual = std::max(rep.bob_completeness_residual, (sum - id).norm());
    }
    Eigen::MatrixXd sum0;
    for (int x = 0; x < s.alice_inputs(); ++x) {
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
        for (int a = 0; a < s.alice_outputs(); ++a) {
            const Eigen::MatrixXd& q = o.alice_ops[std::size_t(x) * s.alice_outputs() + a];
            rep.alice_min_eig = std::min(rep.alice_min_eig, min_eig(q));
            sum += q;
            for (const auto& p : o.bob_ops) rep.commutant_residual = std::max(rep.commutant_residual, (q * p - p * q).norm());
            for (int y = 0; y < s.bob_inputs(); ++y)
                for (int b = 0; b < s.bob_outputs(); ++b)
                    rep.born(a, b, x, y) = o.omega.dot(q * o.bob_ops[std::size_t(y) * s.bob_outputs() + b] * o.omega);
        }
        rep.alice_completeness_residual = std::max(rep.alice_completeness_residual, (sum - id).norm());
        if (x == 0)
            sum0 = sum;
        else
            rep.alice_sum_x_spread = std::max(rep.alice_sum_x_spread, (sum - sum0).norm());
    }
    if (d == 0) rep.bob_min_eig = rep.alice_min_eig = 0.0;
    rep.score = f.score(rep.born);
    return rep;
}

/// Names of the model invariants the report violates, empty when all hold.
inline std::string model_violations(const ModelReport& r) {
    std::string out;
    auto check = [&](bool ok, const char* what) {
        if (!ok) out += (out.empty() ? "" : ", ") + std::string(what);
    };
    check(r.omega_norm_residual <= 1e-8, "omega norm");
    check(r.bob_projection_residual <= 1e-8, "Bob projectivity");
    check(r.bob_completeness_residual <= 1e-8, "Bob completeness");
    check(r.alice_min_eig >= -1e-8, "Alice positivity");
    check(r.alice_completeness_residual <= 1e-8, "Alice completeness");
    check(r.commutant_residual <= 1e-6, "commutation");
    return out;
}

/// GNS model from a flat sequential solution.
inline GnsModel gns_build(const MomentProblem& p, const MomentSolution& sol, double rel_tol = 1e-7) {
    using namespace extract_detail;
    FlatnessReport fr = check_flat(p, sol, rel_tol);
    if (!fr.is_flat || fr.borderline) fail(ErrorKind::NotFlat, fr.diagnostics);
    const Scenario& s = *p.scenario;
    const WordBasis& basis = p.blocks[0].basis;
    int k = int(basis.count_up_to(p.level - 1));
    Eigen::MatrixXd t = theta(p, sol);

    // greedy pivoted Cholesky on the truncated block, identity first
    std::vector<int> sel;
    {
        Eigen::MatrixXd r = t.topLeftCorner(k, k);
        std::vector<char> used(k, 0);
        for (int step = 0; step < fr.rank_trunc; ++step) {
            int piv = 0;
            if (step > 0) {
                double best = -1.0;
                for (int i = 0; i < k; ++i)
                    if (!used[i] && r(i, i) > best) {
                        best = r(i, i);
                        piv = i;
                    }
            }
            if (r(piv, piv) <= 0.0) fail(ErrorKind::IllConditioned, "pivoted factorization broke down");
            used[piv] = 1;
            sel.push_back(piv);
            Eigen::VectorXd c = r.col(piv) / std::sqrt(r(piv, piv));
            r -= c * c.transpose();
        }
    }
    const int d = int(sel.size());
    Eigen::MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = t(sel[i], sel[j]);
    Eigen::VectorXd gl = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g, Eigen::EigenvaluesOnly).eigenvalues();
    if (gl.minCoeff() <= 0 || gl.maxCoeff() / gl.minCoeff() > 1e12)
        fail(ErrorKind::IllConditioned, "Gram matrix of the selected words is ill-conditioned");
    Eigen::LDLT<Eigen::MatrixXd> gs(g);

    GnsModel m;
    m.scenario = s;
    m.dim = d;
    m.gram = g;
    for (int i : sel) m.basis_words.push_back(basis[i]);
    m.omega = Eigen::VectorXd::Zero(d);
    m.omega[0] = 1.0;

    // coordinates of w|Omega> for any basis word w
    auto coords = [&](const Word& w) -> Eigen::VectorXd {
        if (w.is_zero()) return Eigen::VectorXd::Zero(d);
        auto idx = basis.find(w);
        if (!idx) fail(ErrorKind::InvalidArgument, "word " + to_string(w) + " outside the block basis");
        Eigen::VectorXd rhs(d);
        for (int i = 0; i < d; ++i) rhs[i] = t(sel[i], int(*idx));
        return gs.solve(rhs);
    };
    for (int y = 0; y < s.bob_inputs(); ++y)
        for (int b = 0; b < s.bob_outputs(); ++b) {
            Eigen::MatrixXd op(d, d);
            for (int j = 0; j < d; ++j) op.col(j) = coords(multiply(Word::raw({B(b, y)}), basis[sel[j]], false));
            m.bob_ops.push_back(op);
        }
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int a = 0; a < s.alice_outputs(); ++a) {
            const Eigen::MatrixXd& v = sol.values[sequential_block(s, a, x)];
            Eigen::MatrixXd ta(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) ta(i, j) = 0.5 * (v(sel[i], sel[j]) + v(sel[j], sel[i]));
            m.alice_ops.push_back(gs.solve(ta));
        }
    std::string bad = model_violations(verify_model(m, BellFunctional(s)));
    if (!bad.empty()) fail(ErrorKind::NumericalTrouble, "extracted model violates: " + bad);
    return m;
}

inline std::string to_text(const GnsModel& m) {
    std::ostringstream out;
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto mat = [&](const Eigen::MatrixXd& a) {
        for (int i = 0; i < a.rows(); ++i) {
            for (int j = 0; j < a.cols(); ++j) out << (j ? " " : "") << num(a(i, j));
            out << "\n";
        }
    };
    const Scenario& s = m.scenario;
    out << "gns-model\n";
    out << "scenario " << s.alice_inputs() << " " << s.bob_inputs() << " " << s.alice_outputs() << " " << s.bob_outputs() << "\n";
    out << "dim " << m.dim << "\n";
    out << "basis";
    for (const auto& w : m.basis_words) out << " " << to_string(w);
    out << "\nomega";
    for (int i = 0; i < m.omega.size(); ++i) out << " " << num(m.omega[i]);
    out << "\ngram\n";
    mat(m.gram);
    for (int y = 0; y < s.bob_inputs(); ++y)
        for (int b = 0; b < s.bob_outputs(); ++b) {
            out << "bob " << b << " " << y << "\n";
            mat(m.bob(b, y));
        }
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int a = 0; a < s.alice_outputs(); ++a) {
            out << "alice " << a << " " << x << "\n";
            mat(m.alice(a, x));
        }
    return out.str();
}

inline GnsModel gns_from_text(const std::string& text) {
    std::istringstream in(text);
    auto bad = [](const std::string& why) { fail(ErrorKind::Parse, "gns model: " + why); };
    std::string tag;
    auto expect = [&](const char* want) {
        if (!(in >> tag) || tag != want) bad(std::string("expected '") + want + "'");
    };
    expect("gns-model");
    expect("scenario");
    int nx, ny, na, nb;
    if (!(in >> nx >> ny >> na >> nb)) bad("scenario");
    GnsModel m;
    m.scenario = Scenario(nx, ny, na, nb);
    expect("dim");
    if (!(in >> m.dim) || m.dim < 0) bad("dim");
    expect("basis");
    for (int i = 0; i < m.dim; ++i) {
        std::string w;
        if (!(in >> w)) bad("basis words");
        m.basis_words.push_back(parse_word(w));
    }
    auto read_mat = [&](Eigen::MatrixXd& a) {
        a.resize(m.dim, m.dim);
        for (int i = 0; i < m.dim; ++i)
            for (int j = 0; j < m.dim; ++j)
                if (!(in >> a(i, j))) bad("matrix entries");
    };
    expect("omega");
    m.omega.resize(m.dim);
    for (int i = 0; i < m.dim; ++i)
        if (!(in >> m.omega[i])) bad("omega");
    expect("gram");
    read_mat(m.gram);
    for (int k = 0; k < ny * nb; ++k) {
        int b, y;
        expect("bob");
        if (!(in >> b >> y) || y * nb + b != k) bad("bob operator order");
        m.bob_ops.emplace_back();
        read_mat(m.bob_ops.back());
    }
    for (int k = 0; k < nx * na; ++k) {
        int a, x;
        expect("alice");
        if (!(in >> a >> x) || x * na + a != k) bad("alice operator order");
        m.alice_ops.emplace_back();
        read_mat(m.alice_ops.back());
    }
    return m;
}

}  // namespace npa
