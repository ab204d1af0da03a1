#pragma once

// Sum-of-squares certificates read off the dual of the sequential relaxation,
// and an independent coefficient-wise check of the certificate identity
//
//   m 1 - beta = s + sum lambda_abxy (A(a|x) B(b|y) - p(ab|xy) 1)
//                  + sum_x u_x* (1 - sum_a A(a|x)) v_x,
//
// s = sum over blocks of Gram-weighted products (L u_i)* (L u_j), L = A(a|x).
// Polynomials live in the span of Bob words and Alice-letter-times-Bob-word,
// reduced modulo projectivity and Bob completeness.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npa/error.hpp"
#include "npa/ncalgebra.hpp"
#include "npa/relax.hpp"
#include "npa/scenario.hpp"
#include "npa/sdp.hpp"

namespace npa {

struct GramBlock {
    Letter alice;             // the block squares A(a|x) u
    std::vector<Word> words;  // Bob words u
    Eigen::MatrixXd gram;
};

struct LambdaTerm {
    int a = 0, b = 0, x = 0, y = 0;
    double lambda = 0.0;
    double p = 0.0;
};

/// coeff * u* (1 - sum_a A(a|x)) v
struct CompletenessTerm {
    int x = 0;
    Word u, v;
    double coeff = 0.0;
};

struct SosCertificate {
    Scenario scenario{1, 1, 1, 1};
    int level = 0;
    double m = 0.0;
    std::vector<GramBlock> gram_blocks;
    std::vector<LambdaTerm> lambda;
    std::vector<CompletenessTerm> completeness;
};

struct CertificateCheck {
    double coefficient_residual = 0.0;
    Word worst_word;  // monomial with the largest mismatch
    double min_gram_eig = 0.0;
    int monomials = 0;
};

namespace sos_detail {

using Poly = std::map<Word, double>;

/// Adds c * w after expanding Bob last-outcome letters, leftmost first.
inline void add_reduced(Poly& out, const Scenario& s, const Word& w, double c) {
    if (w.is_zero() || c == 0.0) return;
    const auto& ls = w.letters();
    const int last = s.bob_outputs() - 1;
    std::size_t pos = ls.size();
    for (std::size_t i = 0; i < ls.size(); ++i)
        if (ls[i].party == Party::Bob && ls[i].outcome == last) {
            pos = i;
            break;
        }
    if (pos == ls.size()) {
        out[symmetric_key(w, true)] += c;
        return;
    }
    std::vector<Letter> rest;
    for (std::size_t i = 0; i < ls.size(); ++i)
        if (i != pos) rest.push_back(ls[i]);
    add_reduced(out, s, canonicalize(rest, true), c);
    for (int b = 0; b < last; ++b) {
        std::vector<Letter> alt = ls;
        alt[pos].outcome = b;
        add_reduced(out, s, canonicalize(alt, true), -c);
    }
}

inline Word product(const Word& u_adj_of, const Letter* mid, const Word& v) {
    std::vector<Letter> cat(u_adj_of.letters().rbegin(), u_adj_of.letters().rend());
    if (mid) cat.push_back(*mid);
    cat.insert(cat.end(), v.letters().begin(), v.letters().end());
    return canonicalize(cat, true);
}

/// Splits a Bob word w as u* v with deg u, deg v <= ceil(deg w / 2).
inline std::pair<Word, Word> split(const Word& w) {
    const auto& ls = w.letters();
    std::size_t h = (ls.size() + 1) / 2;
    std::vector<Letter> left(ls.begin(), ls.begin() + h);
    std::reverse(left.begin(), left.end());
    return {Word::raw(left), Word::raw(std::vector<Letter>(ls.begin() + h, ls.end()))};
}

/// Polynomial of a sequential moment variable: A(a|x) times its Bob word.
inline Word monomial(const MomentProblem& p, const MomentVariable& v) {
    if (v.word.is_zero()) return v.word;
    const BlockInfo& b = p.blocks[v.cells.at(0).block];
    std::vector<Letter> ls{*b.alice};
    ls.insert(ls.end(), v.word.letters().begin(), v.word.letters().end());
    return canonicalize(ls, true);
}

}  // namespace sos_detail

/// Certificate from an optimal sequential solution; lambda terms are zero for
/// a score bound and record the primal probabilities.
inline SosCertificate dual_to_certificate(const MomentProblem& p, const MomentSolution& sol) {
    using namespace sos_detail;
    if (p.kind != Hierarchy::Sequential || !p.scenario) fail(ErrorKind::InvalidArgument, "expected a sequential problem");
    if (sol.status != SolveStatus::Optimal) fail(ErrorKind::NotOptimal, std::string("solution status is ") + to_string(sol.status));
    if (sol.dual_blocks.size() != p.blocks.size() || sol.dual_multipliers.size() != p.constraints.size())
        fail(ErrorKind::ShapeMismatch, "solution carries no dual data for this problem");
    const Scenario& s = *p.scenario;
    SosCertificate c;
    c.scenario = s;
    c.level = p.level;
    c.m = sol.dual_value;
    for (std::size_t b = 0; b < p.blocks.size(); ++b)
        c.gram_blocks.push_back({*p.blocks[b].alice, p.blocks[b].basis.words(), sol.dual_blocks[b]});

    const WordBasis& basis = p.blocks[0].basis;
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int y = 0; y < s.bob_inputs(); ++y)
            for (int a = 0; a < s.alice_outputs(); ++a)
                for (int b = 0; b < s.bob_outputs(); ++b) {
                    int j = int(*basis.find(Word::raw({B(b, y)})));
                    c.lambda.push_back({a, b, x, y, 0.0, sol.values[sequential_block(s, a, x)](0, j)});
                }

    // each row polynomial is sum_x (1 - sum_a A(a|x)) h_x modulo Bob completeness;
    // h_x is read off the A(0|x) coefficients
    std::map<std::pair<int, Word>, double> h;
    for (std::size_t r = 0; r < p.constraints.size(); ++r) {
        double lam = sol.dual_multipliers[r];
        if (lam == 0.0) continue;
        const auto& row = p.constraints[r];
        Poly poly;
        for (auto [v, coef] : row.terms) add_reduced(poly, s, monomial(p, p.variables[v]), coef);
        if (row.rhs != 0.0) poly[Word::identity()] -= row.rhs;
        for (auto [w, coef] : poly) {
            if (coef == 0.0 || w.is_identity() || w.letters()[0].party != Party::Alice) continue;
            const Letter& al = w.letters()[0];
            if (al.outcome != 0) continue;
            Word rest = Word::raw(std::vector<Letter>(w.letters().begin() + 1, w.letters().end()));
            h[{al.input, rest}] += lam * coef;  // m - beta = s - sum lam R, and R carries -h on A(0|x)
        }
    }
    for (auto [key, coef] : h) {
        if (coef == 0.0) continue;
        auto [u, v] = split(key.second);
        c.completeness.push_back({key.first, u, v, coef});
    }
    return c;
}

inline CertificateCheck verify_certificate(const SosCertificate& c, const BellFunctional& f, int n) {
    using namespace sos_detail;
    const Scenario& s = c.scenario;
    if (!(s == f.scenario())) fail(ErrorKind::ShapeMismatch, "certificate and game scenarios differ");
    if (n != c.level) fail(ErrorKind::ShapeMismatch, "certificate level differs from the requested level");
    for (const auto& g : c.gram_blocks) {
        if (g.gram.rows() != Eigen::Index(g.words.size()) || g.gram.cols() != g.gram.rows())
            fail(ErrorKind::ShapeMismatch, "Gram block side differs from its word list");
        for (const Word& w : g.words)
            if (w.length() > n) fail(ErrorKind::ShapeMismatch, "Gram word above the level");
    }
    for (const auto& t : c.completeness)
        if (t.u.length() > n || t.v.length() > n) fail(ErrorKind::ShapeMismatch, "completeness word above the level");

    // diff = (m 1 - beta) - rhs
    Poly diff;
    add_reduced(diff, s, Word::identity(), c.m - f.constant());
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int y = 0; y < s.bob_inputs(); ++y)
            for (int a = 0; a < s.alice_outputs(); ++a)
                for (int b = 0; b < s.bob_outputs(); ++b)
                    add_reduced(diff, s, Word::raw({A(a, x), B(b, y)}), -f.coeff(a, b, x, y));
    CertificateCheck out;
    out.min_gram_eig = std::numeric_limits<double>::infinity();
    for (const auto& g : c.gram_blocks) {
        for (std::size_t i = 0; i < g.words.size(); ++i)
            for (std::size_t j = 0; j < g.words.size(); ++j)
                add_reduced(diff, s, product(g.words[i], &g.alice, g.words[j]), -g.gram(Eigen::Index(i), Eigen::Index(j)));
        if (g.gram.rows() > 0) {
            Eigen::MatrixXd sym = 0.5 * (g.gram + g.gram.transpose());
            out.min_gram_eig = std::min(
                out.min_gram_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff());
        }
    }
    if (!std::isfinite(out.min_gram_eig)) out.min_gram_eig = 0.0;
    for (const auto& t : c.lambda) {
        add_reduced(diff, s, Word::raw({A(t.a, t.x), B(t.b, t.y)}), -t.lambda);
        add_reduced(diff, s, Word::identity(), t.lambda * t.p);
    }
    for (const auto& t : c.completeness) {
        add_reduced(diff, s, product(t.u, nullptr, t.v), -t.coeff);
        for (int a = 0; a < s.alice_outputs(); ++a) {
            Letter al = A(a, t.x);
            add_reduced(diff, s, product(t.u, &al, t.v), t.coeff);
        }
    }
    out.monomials = int(diff.size());
    for (auto [w, coef] : diff)
        if (std::abs(coef) > out.coefficient_residual) {
            out.coefficient_residual = std::abs(coef);
            out.worst_word = w;
        }
    return out;
}

struct GapReport {
    double gap = 0.0;
    bool level_mismatch = false;
};

inline GapReport duality_gap(const MomentSolution& primal, int primal_level, const SosCertificate& c) {
    return {std::abs(primal.primal_value - c.m), primal_level != c.level};
}

inline std::string to_text(const SosCertificate& c) {
    std::ostringstream out;
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    const Scenario& s = c.scenario;
    out << "sos-certificate\n";
    out << "scenario " << s.alice_inputs() << " " << s.bob_inputs() << " " << s.alice_outputs() << " " << s.bob_outputs() << "\n";
    out << "level " << c.level << "\nm " << num(c.m) << "\n";
    out << "lambda " << c.lambda.size() << "\n";
    for (const auto& t : c.lambda)
        out << t.a << " " << t.b << " " << t.x << " " << t.y << " " << num(t.lambda) << " " << num(t.p) << "\n";
    out << "blocks " << c.gram_blocks.size() << "\n";
    for (const auto& g : c.gram_blocks) {
        out << "block " << to_string(g.alice) << " " << g.words.size() << "\n";
        for (std::size_t i = 0; i < g.words.size(); ++i) out << (i ? " " : "") << to_string(g.words[i]);
        out << "\n";
        for (int i = 0; i < g.gram.rows(); ++i) {
            for (int j = 0; j < g.gram.cols(); ++j) out << (j ? " " : "") << num(g.gram(i, j));
            out << "\n";
        }
    }
    out << "completeness " << c.completeness.size() << "\n";
    for (const auto& t : c.completeness) out << t.x << " " << to_string(t.u) << " " << to_string(t.v) << " " << num(t.coeff) << "\n";
    return out.str();
}

/// Reads the format written by to_text. A "pairs" section (one multiplier per
/// monomial pair u_x, v_x) is accepted in place of "completeness"; both carry
/// the same terms.
inline SosCertificate certificate_from_text(const std::string& text) {
    std::istringstream in(text);
    auto bad = [](const std::string& why) { fail(ErrorKind::Parse, "certificate: " + why); };
    std::string tag;
    auto expect = [&](const char* want) {
        if (!(in >> tag) || tag != want) bad(std::string("expected '") + want + "'");
    };
    auto word = [&]() {
        std::string w;
        if (!(in >> w)) bad("missing word");
        return parse_word(w);
    };
    expect("sos-certificate");
    expect("scenario");
    int nx, ny, na, nb;
    if (!(in >> nx >> ny >> na >> nb)) bad("scenario");
    SosCertificate c;
    c.scenario = Scenario(nx, ny, na, nb);
    expect("level");
    if (!(in >> c.level)) bad("level");
    expect("m");
    if (!(in >> c.m)) bad("m");
    expect("lambda");
    std::size_t k;
    if (!(in >> k)) bad("lambda count");
    for (std::size_t i = 0; i < k; ++i) {
        LambdaTerm t;
        if (!(in >> t.a >> t.b >> t.x >> t.y >> t.lambda >> t.p)) bad("lambda entry");
        c.scenario.index(t.a, t.b, t.x, t.y);
        c.lambda.push_back(t);
    }
    expect("blocks");
    if (!(in >> k)) bad("block count");
    for (std::size_t i = 0; i < k; ++i) {
        expect("block");
        Word al = word();
        std::size_t size;
        if (al.length() != 1 || al.letters()[0].party != Party::Alice || !(in >> size)) bad("block header");
        GramBlock g;
        g.alice = al.letters()[0];
        for (std::size_t j = 0; j < size; ++j) g.words.push_back(word());
        g.gram.resize(Eigen::Index(size), Eigen::Index(size));
        for (std::size_t r = 0; r < size; ++r)
            for (std::size_t q = 0; q < size; ++q)
                if (!(in >> g.gram(Eigen::Index(r), Eigen::Index(q)))) bad("gram entries");
        c.gram_blocks.push_back(std::move(g));
    }
    if (!(in >> tag) || (tag != "completeness" && tag != "pairs")) bad("expected 'completeness'");
    if (!(in >> k)) bad("completeness count");
    for (std::size_t i = 0; i < k; ++i) {
        CompletenessTerm t;
        if (!(in >> t.x)) bad("completeness entry");
        t.u = word();
        t.v = word();
        if (!(in >> t.coeff)) bad("completeness coefficient");
        c.completeness.push_back(std::move(t));
    }
    return c;
}

}  // namespace npa
