#pragma once

// Splitting families of Alice operators into a no-signaling part, a
// signaling part and a residual by averaging over outcomes and inputs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npa/error.hpp"
#include "npa/extract.hpp"
#include "npa/ncalgebra.hpp"
#include "npa/scenario.hpp"

namespace npa {

struct OperatorFamily {
    Scenario scenario{1, 1, 1, 1};
    int dim = 0;
    std::vector<Eigen::MatrixXd> ops;      // x * nA + a
    std::optional<Eigen::MatrixXd> state;  // density matrix
    std::vector<Eigen::MatrixXd> bob_ops;  // y * nB + b, empty when absent
    int level = 1;

    const Eigen::MatrixXd& op(int a, int x) const { return ops.at(std::size_t(x) * scenario.alice_outputs() + a); }
    Eigen::MatrixXd& op(int a, int x) { return ops.at(std::size_t(x) * scenario.alice_outputs() + a); }

    void check() const {
        if (ops.size() != std::size_t(scenario.alice_inputs()) * scenario.alice_outputs())
            fail(ErrorKind::ShapeMismatch, "family needs one operator per (a,x)");
        for (const auto& m : ops)
            if (m.rows() != dim || m.cols() != dim) fail(ErrorKind::ShapeMismatch, "family operator has the wrong side");
        if (state && (state->rows() != dim || state->cols() != dim)) fail(ErrorKind::ShapeMismatch, "state has the wrong side");
        if (!bob_ops.empty() && bob_ops.size() != std::size_t(scenario.bob_inputs()) * scenario.bob_outputs())
            fail(ErrorKind::ShapeMismatch, "need one Bob operator per (b,y)");
        for (const auto& m : bob_ops)
            if (m.rows() != dim || m.cols() != dim) fail(ErrorKind::ShapeMismatch, "Bob operator has the wrong side");
    }
};

/// Alice operators, state and Bob operators of a model in its orthonormal frame.
inline OperatorFamily family_from_model(const GnsModel& m, int level) {
    OrthonormalModel o = orthonormal(m);
    OperatorFamily f;
    f.scenario = m.scenario;
    f.dim = m.dim;
    f.ops = o.alice_ops;
    f.state = o.omega * o.omega.transpose();
    f.bob_ops = o.bob_ops;
    f.level = level;
    return f;
}

enum class Axis { Outcome, Input };
enum class Part { Invariant, Complement };

/// Invariant part averages over the chosen index; complement is the rest.
inline OperatorFamily symmetrize(const OperatorFamily& fam, Axis axis, Part part) {
    fam.check();
    const int na = fam.scenario.alice_outputs(), nx = fam.scenario.alice_inputs();
    OperatorFamily out = fam;
    for (int x = 0; x < nx; ++x)
        for (int a = 0; a < na; ++a) {
            Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(fam.dim, fam.dim);
            if (axis == Axis::Outcome) {
                for (int b = 0; b < na; ++b) avg += fam.op(b, x);
                avg /= na;
            } else {
                for (int y = 0; y < nx; ++y) avg += fam.op(a, y);
                avg /= nx;
            }
            out.op(a, x) = part == Part::Invariant ? avg : Eigen::MatrixXd(fam.op(a, x) - avg);
        }
    return out;
}

struct DecompositionChecks {
    bool computed = false;
    double no_signaling = 0.0;   // max |<P1* (sum_a ns) P2> - <P1* P2>|, deg P <= n
    double min_eig_low = 0.0;    // min eigenvalue of ns compressed to span{P|state>, deg P <= n}
    double signaling = 0.0;      // max |<si P>|, deg P <= 2n
};

struct DecompositionResult {
    std::vector<Eigen::MatrixXd> ns, si, res;
    double scale = 1.0;  // 1 / (1 + D eta)
    double eta_used = 0.0;
    int dim_vn = 1;
    DecompositionChecks checks;

    /// ns + si + (D eta / (1 + D eta)) res
    std::vector<Eigen::MatrixXd> reconstruct() const {
        std::vector<Eigen::MatrixXd> out;
        for (std::size_t i = 0; i < ns.size(); ++i) out.push_back(ns[i] + si[i] + (1.0 - scale) * res[i]);
        return out;
    }
};

/// Number of Bob words of degree <= n.
inline int low_degree_dimension(const Scenario& s, int n) { return int(enumerate_basis(s, PartySet::Bob, n, false).size()); }

namespace decompose_detail {

struct LowDegree {
    std::vector<Eigen::MatrixXd> words;  // P(B) as matrices
    std::vector<int> degree;
};

inline LowDegree bob_words(const OperatorFamily& fam, int max_deg) {
    if (!fam.state || fam.bob_ops.empty()) fail(ErrorKind::MissingContext, "family carries no state or Bob operators");
    LowDegree out;
    const int nb = fam.scenario.bob_outputs();
    WordBasis basis = enumerate_basis(fam.scenario, PartySet::Bob, std::max(max_deg, 0), false);
    for (const Word& w : basis.words()) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(fam.dim, fam.dim);
        for (const Letter& l : w.letters()) m = m * fam.bob_ops[std::size_t(l.input) * nb + l.outcome];
        out.words.push_back(std::move(m));
        out.degree.push_back(w.length());
    }
    return out;
}

/// M(i,j) = Tr(rho P_i^T X P_j) over words of degree <= n.
inline Eigen::MatrixXd sandwich(const Eigen::MatrixXd& rho, const LowDegree& w, int n, const Eigen::MatrixXd& x) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < w.words.size(); ++i)
        if (w.degree[i] <= n) idx.push_back(int(i));
    Eigen::MatrixXd m(idx.size(), idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::MatrixXd left = rho * w.words[idx[i]].transpose() * x;
        for (std::size_t j = 0; j < idx.size(); ++j) m(i, j) = (left * w.words[idx[j]]).trace();
    }
    return m;
}

}  // namespace decompose_detail

/// max over x and word pairs of degree <= max_deg of |<P1* (sum_a op - 1) P2>|.
inline double marginal_deviation(const OperatorFamily& fam, int max_deg) {
    fam.check();
    if (max_deg < 0) fail(ErrorKind::InvalidArgument, "max_deg must be >= 0");
    auto words = decompose_detail::bob_words(fam, max_deg);
    double worst = 0.0;
    for (int x = 0; x < fam.scenario.alice_inputs(); ++x) {
        Eigen::MatrixXd d = -Eigen::MatrixXd::Identity(fam.dim, fam.dim);
        for (int a = 0; a < fam.scenario.alice_outputs(); ++a) d += fam.op(a, x);
        worst = std::max(worst, decompose_detail::sandwich(*fam.state, words, max_deg, d).cwiseAbs().maxCoeff());
    }
    return worst;
}

inline DecompositionChecks verify_decomposition(const DecompositionResult& r, const OperatorFamily& fam) {
    using namespace decompose_detail;
    fam.check();
    const int n = fam.level, na = fam.scenario.alice_outputs();
    auto words = bob_words(fam, 2 * n);
    const Eigen::MatrixXd& rho = *fam.state;
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(fam.dim, fam.dim);
    Eigen::MatrixXd g = sandwich(rho, words, n, id);

    // orthonormal frame of the low-degree span
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (g + g.transpose()));
    double cut = 1e-12 * std::max(es.eigenvalues().maxCoeff(), 1.0);
    std::vector<int> keep;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] > cut) keep.push_back(i);
    Eigen::MatrixXd frame(g.rows(), Eigen::Index(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k)
        frame.col(Eigen::Index(k)) = es.eigenvectors().col(keep[k]) / std::sqrt(es.eigenvalues()[keep[k]]);

    DecompositionChecks c;
    c.computed = true;
    c.min_eig_low = std::numeric_limits<double>::infinity();
    for (int x = 0; x < fam.scenario.alice_inputs(); ++x) {
        Eigen::MatrixXd total = Eigen::MatrixXd::Zero(fam.dim, fam.dim);
        for (int a = 0; a < na; ++a) {
            const Eigen::MatrixXd& ns = r.ns[std::size_t(x) * na + a];
            total += ns;
            Eigen::MatrixXd comp = frame.transpose() * sandwich(rho, words, n, ns) * frame;
            if (comp.rows() > 0) {
                comp = 0.5 * (comp + comp.transpose());
                c.min_eig_low = std::min(c.min_eig_low,
                                         Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(comp, Eigen::EigenvaluesOnly).eigenvalues().minCoeff());
            }
            Eigen::MatrixXd rs = rho * r.si[std::size_t(x) * na + a];
            for (const auto& p : words.words) c.signaling = std::max(c.signaling, std::abs((rs * p).trace()));
        }
        c.no_signaling = std::max(c.no_signaling, (sandwich(rho, words, n, total) - g).cwiseAbs().maxCoeff());
    }
    if (!std::isfinite(c.min_eig_low)) c.min_eig_low = 0.0;
    return c;
}

/// ns = P0a P0x + P1a / (1 + D eta), si = P0a P1x, res = P1a.
inline DecompositionResult decompose(const OperatorFamily& fam, double eta, int dim_vn) {
    if (!(eta >= 0)) fail(ErrorKind::InvalidArgument, "eta must be >= 0");
    if (dim_vn < 1) fail(ErrorKind::InvalidArgument, "dim(V_n) must be >= 1");
    OperatorFamily avg_a = symmetrize(fam, Axis::Outcome, Part::Invariant);
    OperatorFamily p00 = symmetrize(avg_a, Axis::Input, Part::Invariant);
    OperatorFamily p01 = symmetrize(avg_a, Axis::Input, Part::Complement);
    OperatorFamily p1 = symmetrize(fam, Axis::Outcome, Part::Complement);
    DecompositionResult r;
    r.eta_used = eta;
    r.dim_vn = dim_vn;
    r.scale = 1.0 / (1.0 + dim_vn * eta);
    for (std::size_t i = 0; i < fam.ops.size(); ++i) {
        r.ns.push_back(p00.ops[i] + r.scale * p1.ops[i]);
        r.si.push_back(p01.ops[i]);
        r.res.push_back(p1.ops[i]);
    }
    if (fam.state && !fam.bob_ops.empty()) r.checks = verify_decomposition(r, fam);
    return r;
}

inline std::string to_text(const DecompositionResult& r, const Scenario& s) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "decomposition\n";
    out << "scenario " << s.alice_inputs() << " " << s.bob_inputs() << " " << s.alice_outputs() << " " << s.bob_outputs() << "\n";
    out << "eta " << num(r.eta_used) << "\ndim_vn " << r.dim_vn << "\nscale " << num(r.scale) << "\n";
    if (r.checks.computed)
        out << "checks no_signaling " << num(r.checks.no_signaling) << " min_eig_low " << num(r.checks.min_eig_low)
            << " signaling " << num(r.checks.signaling) << "\n";
    const int na = s.alice_outputs();
    auto dump = [&](const char* tag, const std::vector<Eigen::MatrixXd>& ops) {
        for (std::size_t i = 0; i < ops.size(); ++i) {
            out << tag << " " << i % na << " " << i / na << "\n";
            for (Eigen::Index r = 0; r < ops[i].rows(); ++r) {
                for (Eigen::Index c = 0; c < ops[i].cols(); ++c) out << (c ? " " : "") << num(ops[i](r, c));
                out << "\n";
            }
        }
    };
    dump("ns", r.ns);
    dump("si", r.si);
    dump("res", r.res);
    return out.str();
}

}  // namespace npa
