#pragma once

// Finite strategies read off standard NPA moment matrices, their sequential
// form, and commutator / signaling residuals.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npa/error.hpp"
#include "npa/extract.hpp"
#include "npa/relax.hpp"
#include "npa/scenario.hpp"
#include "npa/sdp.hpp"

namespace npa {

struct FiniteStrategy {
    Scenario scenario{1, 1, 1, 1};
    int dim = 0;
    int level = 0;
    Eigen::VectorXd state;
    std::vector<Eigen::MatrixXd> alice_ops;  // x * nA + a
    std::vector<Eigen::MatrixXd> bob_ops;    // y * nB + b

    const Eigen::MatrixXd& alice(int a, int x) const { return alice_ops.at(std::size_t(x) * scenario.alice_outputs() + a); }
    const Eigen::MatrixXd& bob(int b, int y) const { return bob_ops.at(std::size_t(y) * scenario.bob_outputs() + b); }
    Eigen::MatrixXd density() const { return state * state.transpose(); }
    const Eigen::MatrixXd& op(const Letter& l) const { return l.party == Party::Alice ? alice(l.outcome, l.input) : bob(l.outcome, l.input); }
};

struct SequentialStrategy {
    Scenario scenario{1, 1, 1, 1};
    int dim = 0;
    Eigen::MatrixXd state;                     // density of the source state
    std::vector<Eigen::MatrixXd> post_states;  // x * nA + a
    std::vector<Eigen::MatrixXd> bob_ops;

    const Eigen::MatrixXd& post(int a, int x) const { return post_states.at(std::size_t(x) * scenario.alice_outputs() + a); }
    const Eigen::MatrixXd& bob(int b, int y) const { return bob_ops.at(std::size_t(y) * scenario.bob_outputs() + b); }
};

inline Correlation born(const FiniteStrategy& s) {
    const Scenario& sc = s.scenario;
    Correlation p(sc);
    for (int x = 0; x < sc.alice_inputs(); ++x)
        for (int y = 0; y < sc.bob_inputs(); ++y)
            for (int a = 0; a < sc.alice_outputs(); ++a)
                for (int b = 0; b < sc.bob_outputs(); ++b) p(a, b, x, y) = s.state.dot(s.alice(a, x) * s.bob(b, y) * s.state);
    return p;
}

inline Correlation born(const SequentialStrategy& s) {
    const Scenario& sc = s.scenario;
    Correlation p(sc);
    for (int x = 0; x < sc.alice_inputs(); ++x)
        for (int y = 0; y < sc.bob_inputs(); ++y)
            for (int a = 0; a < sc.alice_outputs(); ++a)
                for (int b = 0; b < sc.bob_outputs(); ++b) p(a, b, x, y) = (s.post(a, x) * s.bob(b, y)).trace();
    return p;
}

inline double score(const BellFunctional& f, const FiniteStrategy& s) { return f.score(born(s)); }
inline double score(const BellFunctional& f, const SequentialStrategy& s) { return f.score(born(s)); }

/// <state, w(ops) state> for a word read as an operator product.
inline double moment(const FiniteStrategy& s, const Word& w) {
    if (w.is_zero()) return 0.0;
    Eigen::VectorXd v = s.state;
    const auto& ls = w.letters();
    for (auto it = ls.rbegin(); it != ls.rend(); ++it) v = s.op(*it) * v;
    return s.state.dot(v);
}

namespace strategy_detail {

/// Orthonormal basis of the column span of m, with the part already covered
/// by `taken` removed first.
inline Eigen::MatrixXd span_basis(const Eigen::MatrixXd& m, const Eigen::MatrixXd& taken, double rel_tol) {
    Eigen::MatrixXd r = m;
    if (taken.cols() > 0) r -= taken * (taken.transpose() * m);
    if (r.cols() == 0) return Eigen::MatrixXd(m.rows(), 0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r, Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();
    double ref = std::max(m.norm(), 1.0);
    int k = 0;
    while (k < sv.size() && sv[k] > std::sqrt(rel_tol) * ref) ++k;
    return svd.matrixU().leftCols(k);
}

}  // namespace strategy_detail

/// Strategy whose Born values reproduce every moment of degree <= 2n of a
/// standard level-n solution. Vectors of words up to degree n come from a
/// factorization of the moment matrix; A(a|x) for a >= 1 projects onto the span
/// of A(a|x)w with deg w <= n-1, and outcome 0 takes the rest.
inline FiniteStrategy almost_commuting_from_npa(const MomentProblem& p, const MomentSolution& sol, double rel_tol = 1e-7) {
    if (p.kind != Hierarchy::Standard || !p.scenario) fail(ErrorKind::InvalidArgument, "expected a standard NPA problem");
    if (sol.values.size() != 1 || sol.values[0].rows() != p.blocks[0].size)
        fail(ErrorKind::ShapeMismatch, "solution does not match the problem");
    const Scenario& s = *p.scenario;
    const WordBasis& basis = p.blocks[0].basis;
    const int n = p.level;
    Eigen::MatrixXd g = 0.5 * (sol.values[0] + sol.values[0].transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    const Eigen::VectorXd& l = es.eigenvalues();
    double cut = rel_tol * std::max(l.maxCoeff(), 1.0);
    std::vector<int> keep;
    for (int i = 0; i < l.size(); ++i)
        if (l[i] > cut) keep.push_back(i);
    const int r = int(keep.size());
    if (r == 0 || g(0, 0) <= 0.5) fail(ErrorKind::IllConditioned, "moment matrix has no usable state vector");
    // column i is the vector of basis word i
    Eigen::MatrixXd vec(r, g.rows());
    for (int k = 0; k < r; ++k) vec.row(k) = std::sqrt(l[keep[k]]) * es.eigenvectors().col(keep[k]).transpose();

    const std::size_t low = basis.count_up_to(n - 1);
    auto image = [&](const Letter& let) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(r, Eigen::Index(low));
        for (std::size_t j = 0; j < low; ++j) {
            Word w = multiply(Word::raw({let}), basis[j], true);
            if (w.is_zero()) continue;
            m.col(Eigen::Index(j)) = vec.col(Eigen::Index(*basis.find(w)));
        }
        return m;
    };
    auto measurement = [&](bool alice, int input, int outcomes) {
        std::vector<Eigen::MatrixXd> ops(outcomes);
        Eigen::MatrixXd taken(r, 0);
        Eigen::MatrixXd rest = Eigen::MatrixXd::Identity(r, r);
        for (int o = 1; o < outcomes; ++o) {
            Eigen::MatrixXd q = strategy_detail::span_basis(image(alice ? A(o, input) : B(o, input)), taken, rel_tol);
            ops[o] = q * q.transpose();
            rest -= ops[o];
            Eigen::MatrixXd t(r, taken.cols() + q.cols());
            t << taken, q;
            taken = t;
        }
        ops[0] = rest;
        return ops;
    };

    FiniteStrategy out;
    out.scenario = s;
    out.dim = r;
    out.level = n;
    out.state = vec.col(0) / vec.col(0).norm();
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (auto& m : measurement(true, x, s.alice_outputs())) out.alice_ops.push_back(std::move(m));
    for (int y = 0; y < s.bob_inputs(); ++y)
        for (auto& m : measurement(false, y, s.bob_outputs())) out.bob_ops.push_back(std::move(m));
    return out;
}

inline double projection_residual(const FiniteStrategy& s) {
    double worst = 0.0;
    for (const auto* ops : {&s.alice_ops, &s.bob_ops})
        for (const auto& m : *ops) worst = std::max(worst, (m * m - m).norm());
    return worst;
}

/// POVM residuals: largest completeness defect and most negative eigenvalue.
inline std::pair<double, double> povm_residuals(const FiniteStrategy& s) {
    double sum_err = 0.0, min_eig = 0.0;
    auto run = [&](const std::vector<Eigen::MatrixXd>& ops, int outs) {
        for (std::size_t i = 0; i < ops.size(); i += outs) {
            Eigen::MatrixXd t = Eigen::MatrixXd::Zero(s.dim, s.dim);
            for (int o = 0; o < outs; ++o) {
                t += ops[i + o];
                min_eig = std::min(min_eig, extract_detail::min_eig(ops[i + o]));
            }
            sum_err = std::max(sum_err, (t - Eigen::MatrixXd::Identity(s.dim, s.dim)).norm());
        }
    };
    run(s.alice_ops, s.scenario.alice_outputs());
    run(s.bob_ops, s.scenario.bob_outputs());
    return {sum_err, min_eig};
}

inline SequentialStrategy sequentialize(const FiniteStrategy& s, double proj_tol = 1e-6) {
    double res = projection_residual(s);
    if (res > proj_tol) {
        std::ostringstream msg;
        msg << "operators are not projective (max ||X^2 - X|| = " << res << ")";
        fail(ErrorKind::NotProjective, msg.str());
    }
    SequentialStrategy out;
    out.scenario = s.scenario;
    out.dim = s.dim;
    out.state = s.density();
    for (const auto& a : s.alice_ops) out.post_states.push_back(a * out.state * a);
    out.bob_ops = s.bob_ops;
    return out;
}

/// Sequential form of an extracted model: sigma(a|x) = A^1/2 sigma A^1/2 in
/// the orthonormal frame.
inline SequentialStrategy sequential_from_model(const GnsModel& m) {
    OrthonormalModel o = orthonormal(m);
    SequentialStrategy out;
    out.scenario = m.scenario;
    out.dim = m.dim;
    out.state = o.omega * o.omega.transpose();
    for (const auto& a : o.alice_ops) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
        Eigen::MatrixXd h = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                            es.eigenvectors().transpose();
        out.post_states.push_back(h * out.state * h);
    }
    out.bob_ops = o.bob_ops;
    return out;
}

/// max over x and Bob words P with deg P <= max_deg of |Tr((sum_a sigma(a|x) - sigma) P)|.
inline double signaling_residual(const SequentialStrategy& s, int max_deg) {
    if (max_deg < 0) fail(ErrorKind::InvalidArgument, "max_deg must be >= 0");
    const Scenario& sc = s.scenario;
    WordBasis words = enumerate_basis(sc, PartySet::Bob, max_deg, false);
    double worst = 0.0;
    for (int x = 0; x < sc.alice_inputs(); ++x) {
        Eigen::MatrixXd d = -s.state;
        for (int a = 0; a < sc.alice_outputs(); ++a) d += s.post(a, x);
        for (const Word& w : words.words()) {
            Eigen::MatrixXd m = d;
            for (const Letter& l : w.letters()) m = m * s.bob(l.outcome, l.input);
            worst = std::max(worst, std::abs(m.trace()));
        }
    }
    return worst;
}

struct CommutatorReport {
    double weighted = 0.0;  // max |<state, [A, B] P state>| over the degree budget
    double raw = 0.0;       // max ||[A, B]||_F
};

/// The commutator counts as degree 2, so P runs over words of degree <= max_deg - 2.
inline CommutatorReport commutator_residuals(const FiniteStrategy& s, int max_deg) {
    if (max_deg < 0) fail(ErrorKind::InvalidArgument, "max_deg must be >= 0");
    CommutatorReport rep;
    std::vector<Eigen::VectorXd> tails;  // P|state>
    WordBasis words;
    if (max_deg >= 2) words = enumerate_basis(s.scenario, PartySet::Both, max_deg - 2, false);
    for (const Word& w : words.words()) {
        Eigen::VectorXd v = s.state;
        const auto& ls = w.letters();
        for (auto it = ls.rbegin(); it != ls.rend(); ++it) v = s.op(*it) * v;
        tails.push_back(std::move(v));
    }
    for (const auto& a : s.alice_ops)
        for (const auto& b : s.bob_ops) {
            Eigen::MatrixXd c = a * b - b * a;
            rep.raw = std::max(rep.raw, c.norm());
            Eigen::RowVectorXd lc = s.state.transpose() * c;
            for (const auto& t : tails) rep.weighted = std::max(rep.weighted, std::abs(lc.dot(t)));
        }
    return rep;
}

inline std::string to_text(const FiniteStrategy& st) {
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
    const Scenario& s = st.scenario;
    out << "finite-strategy\n";
    out << "scenario " << s.alice_inputs() << " " << s.bob_inputs() << " " << s.alice_outputs() << " " << s.bob_outputs() << "\n";
    out << "dim " << st.dim << "\nlevel " << st.level << "\nstate";
    for (int i = 0; i < st.state.size(); ++i) out << " " << num(st.state[i]);
    out << "\n";
    for (int y = 0; y < s.bob_inputs(); ++y)
        for (int b = 0; b < s.bob_outputs(); ++b) {
            out << "bob " << b << " " << y << "\n";
            mat(st.bob(b, y));
        }
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int a = 0; a < s.alice_outputs(); ++a) {
            out << "alice " << a << " " << x << "\n";
            mat(st.alice(a, x));
        }
    return out.str();
}

}  // namespace npa
