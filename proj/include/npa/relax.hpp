#pragma once

// Moment relaxations as block SDPs. Cells of a block that carry the same moment
// share one variable; everything else (completeness, no-signaling,
// normalization) is a linear equality over variables.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "npa/error.hpp"
#include "npa/ncalgebra.hpp"
#include "npa/scenario.hpp"

namespace npa {

enum class Hierarchy { Sequential, Standard, Modified, Custom };

inline std::string to_string(Hierarchy h) {
    switch (h) {
        case Hierarchy::Sequential: return "sequential";
        case Hierarchy::Standard: return "standard";
        case Hierarchy::Modified: return "modified";
        case Hierarchy::Custom: return "custom";
    }
    return "custom";
}

inline Hierarchy parse_hierarchy(const std::string& s) {
    if (s == "sequential" || s == "seq") return Hierarchy::Sequential;
    if (s == "standard" || s == "npa") return Hierarchy::Standard;
    if (s == "modified" || s == "mod") return Hierarchy::Modified;
    fail(ErrorKind::InvalidArgument, "unknown hierarchy '" + s + "'");
}

struct CellRef {
    int block = 0;
    int row = 0;
    int col = 0;  // row <= col
    friend auto operator<=>(const CellRef&, const CellRef&) = default;
};

/// A class of upper-triangle cells forced equal. `word` is the moment it
/// represents (empty identity for custom problems).
struct MomentVariable {
    int group = 0;
    Word word;
    std::vector<CellRef> cells;
};

enum class ConstraintKind { Normalization, Completeness, NoSignaling, WeakCompleteness, Zero, Affine };

inline std::string to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::Normalization: return "normalization";
        case ConstraintKind::Completeness: return "completeness";
        case ConstraintKind::NoSignaling: return "no-signaling";
        case ConstraintKind::WeakCompleteness: return "weak-completeness";
        case ConstraintKind::Zero: return "zero";
        case ConstraintKind::Affine: return "affine";
    }
    return "affine";
}

/// sum coef * var = rhs
struct LinearConstraint {
    std::vector<std::pair<int, double>> terms;
    double rhs = 0.0;
    ConstraintKind kind = ConstraintKind::Affine;
    std::string label;
};

/// Vector v on a block such that <v, S v> = 0 is expected to hold identically on
/// the affine feasible set. The solver verifies this; PSD then forces S v = 0.
struct KernelHint {
    int block = 0;
    std::vector<std::pair<int, double>> vec;
};

struct BlockInfo {
    std::string label;
    int size = 0;
    WordBasis basis;                 // empty for custom blocks
    std::optional<Letter> alice;     // sequential blocks: the A(a|x) they belong to
};

class MomentProblem {
public:
    std::optional<Scenario> scenario;
    Hierarchy kind = Hierarchy::Custom;
    int level = 0;
    std::vector<BlockInfo> blocks;
    std::vector<MomentVariable> variables;
    std::vector<LinearConstraint> constraints;
    std::map<int, double> objective;  // over variables; maximized
    double objective_constant = 0.0;
    std::vector<KernelHint> kernel_hints;

    int variable_at(int block, int row, int col) const {
        if (block < 0 || block >= int(blocks.size())) fail(ErrorKind::IndexOutOfBounds, "block index");
        int n = blocks[block].size;
        if (row < 0 || col < 0 || row >= n || col >= n) fail(ErrorKind::IndexOutOfBounds, "cell index");
        return cell_var_[block][std::size_t(row) * n + col];
    }

    std::optional<int> find_variable(int group, const Word& w) const {
        auto it = lookup_.find({group, w});
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }

    /// Rebuilds the cell->variable tables after `variables` changed.
    void index_cells() {
        cell_var_.assign(blocks.size(), {});
        for (std::size_t b = 0; b < blocks.size(); ++b)
            cell_var_[b].assign(std::size_t(blocks[b].size) * blocks[b].size, -1);
        lookup_.clear();
        for (std::size_t v = 0; v < variables.size(); ++v) {
            const auto& var = variables[v];
            if (kind != Hierarchy::Custom) lookup_.emplace(std::make_pair(var.group, var.word), int(v));
            for (const CellRef& c : var.cells) {
                if (c.block < 0 || c.block >= int(blocks.size())) fail(ErrorKind::IndexOutOfBounds, "cell block");
                int n = blocks[c.block].size;
                if (c.row < 0 || c.col < 0 || c.row >= n || c.col >= n || c.row > c.col)
                    fail(ErrorKind::IndexOutOfBounds, "cell outside upper triangle of its block");
                auto& slot = cell_var_[c.block][std::size_t(c.row) * n + c.col];
                if (slot != -1) fail(ErrorKind::InvalidArgument, "cell assigned to two variables");
                slot = int(v);
                cell_var_[c.block][std::size_t(c.col) * n + c.row] = int(v);
            }
        }
    }

    /// Structural checks: every cell covered exactly once, references in range.
    void validate() const {
        if (cell_var_.size() != blocks.size()) fail(ErrorKind::InvalidArgument, "cells not indexed");
        for (std::size_t b = 0; b < blocks.size(); ++b)
            for (int v : cell_var_[b])
                if (v < 0) fail(ErrorKind::InvalidArgument, "uncovered cell in block " + std::to_string(b));
        for (const auto& var : variables)
            if (var.cells.empty() && kind != Hierarchy::Custom) fail(ErrorKind::InvalidArgument, "variable without cells");
        int nv = int(variables.size());
        for (const auto& c : constraints)
            for (auto [v, coef] : c.terms)
                if (v < 0 || v >= nv) fail(ErrorKind::IndexOutOfBounds, "constraint refers to unknown variable");
        for (auto [v, coef] : objective)
            if (v < 0 || v >= nv) fail(ErrorKind::IndexOutOfBounds, "objective refers to unknown variable");
    }

    std::size_t total_cells() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += std::size_t(b.size) * (b.size + 1) / 2;
        return n;
    }

    /// Custom problem with every upper-triangle cell its own variable.
    static MomentProblem with_blocks(const std::vector<int>& sizes) {
        MomentProblem p;
        for (std::size_t b = 0; b < sizes.size(); ++b) {
            if (sizes[b] < 1) fail(ErrorKind::InvalidArgument, "block size must be >= 1");
            p.blocks.push_back({"block" + std::to_string(b), sizes[b], {}, std::nullopt});
            for (int i = 0; i < sizes[b]; ++i)
                for (int j = i; j < sizes[b]; ++j) p.variables.push_back({int(b), Word(), {{int(b), i, j}}});
        }
        p.index_cells();
        return p;
    }

private:
    std::vector<std::vector<int>> cell_var_;
    std::map<std::pair<int, Word>, int> lookup_;
};

namespace detail {

inline bool imposed_last(const Scenario& s, const Letter& l, bool alice_too) {
    if (l.party == Party::Bob) return l.outcome == s.bob_outputs() - 1;
    return alice_too && l.outcome == s.alice_outputs() - 1;
}

inline int imposed_count(const Scenario& s, const Word& w, bool alice_too) {
    int c = 0;
    for (const auto& l : w.letters()) c += imposed_last(s, l, alice_too);
    return c;
}

/// Fills variables from the blocks' bases: cells whose products w*v agree up to
/// adjoint share a variable. Variables are ordered by (group, length, count of
/// last-outcome letters, word) so that completeness rows are triangular.
inline void assign_variables(MomentProblem& p, bool commute, bool alice_too, const std::vector<int>& group_of_block) {
    const Scenario& s = *p.scenario;
    std::map<std::tuple<int, int, int, Word>, std::vector<CellRef>> classes;
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        const auto& basis = p.blocks[b].basis;
        int g = group_of_block[b];
        std::vector<Word> adj(basis.size());
        for (std::size_t i = 0; i < basis.size(); ++i) adj[i] = adjoint(basis[i], commute);
        for (int i = 0; i < int(basis.size()); ++i)
            for (int j = i; j < int(basis.size()); ++j) {
                Word key = symmetric_key(multiply(adj[i], basis[j], commute), commute);
                int len = key.is_zero() ? -1 : key.length();
                classes[{g, len, imposed_count(s, key, alice_too), key}].push_back({int(b), i, j});
            }
    }
    p.variables.clear();
    p.variables.reserve(classes.size());
    for (auto& [k, cells] : classes) p.variables.push_back({std::get<0>(k), std::get<3>(k), std::move(cells)});
    p.index_cells();
}

inline int var_of(const MomentProblem& p, int group, const Word& w, bool commute) {
    Word key = symmetric_key(w, commute);
    auto v = p.find_variable(group, key);
    if (!v) fail(ErrorKind::InvalidArgument, "moment " + to_string(key) + " not represented");
    return *v;
}

inline void add_zero_rows(MomentProblem& p) {
    for (std::size_t v = 0; v < p.variables.size(); ++v)
        if (p.variables[v].word.is_zero())
            p.constraints.push_back({{{int(v), 1.0}}, 0.0, ConstraintKind::Zero, "zero g" + std::to_string(p.variables[v].group)});
}

/// One completeness row per variable containing an imposed last-outcome letter,
/// expanded at its leftmost such letter:
/// s(u L v) - s(u v) + sum_{c != last} s(u L_c v) = 0.
inline void add_completeness_rows(MomentProblem& p, bool commute, bool alice_too) {
    const Scenario& s = *p.scenario;
    std::size_t nvars = p.variables.size();
    for (std::size_t v = 0; v < nvars; ++v) {
        const auto& var = p.variables[v];
        if (var.word.is_zero()) continue;
        const auto& ls = var.word.letters();
        std::size_t pos = ls.size();
        for (std::size_t i = 0; i < ls.size(); ++i)
            if (imposed_last(s, ls[i], alice_too)) {
                pos = i;
                break;
            }
        if (pos == ls.size()) continue;
        LinearConstraint row;
        row.kind = ConstraintKind::Completeness;
        row.label = "completeness g" + std::to_string(var.group) + " " + to_string(var.word);
        std::map<int, double> terms;
        terms[int(v)] += 1.0;
        std::vector<Letter> rest = ls;
        rest.erase(rest.begin() + pos);
        Word shorter = canonicalize(rest, commute);
        if (!shorter.is_zero()) terms[var_of(p, var.group, shorter, commute)] -= 1.0;
        int n_out = ls[pos].party == Party::Alice ? s.alice_outputs() : s.bob_outputs();
        for (int c = 0; c < n_out - 1; ++c) {
            std::vector<Letter> alt = ls;
            alt[pos].outcome = c;
            Word w = canonicalize(alt, commute);
            if (!w.is_zero()) terms[var_of(p, var.group, w, commute)] += 1.0;
        }
        for (auto [k, c] : terms)
            if (c != 0.0) row.terms.push_back({k, c});
        p.constraints.push_back(std::move(row));
    }
}

inline void check_level(int n) {
    if (n < 1) fail(ErrorKind::LevelTooSmall, "hierarchy level must be >= 1");
}

}  // namespace detail

inline int sequential_block(const Scenario& s, int a, int x) { return x * s.alice_outputs() + a; }

/// One block Theta(a|x) per Alice letter, indexed by Bob words of degree <= n.
inline MomentProblem build_sequential(const BellFunctional& f, int n) {
    detail::check_level(n);
    const Scenario& s = f.scenario();
    MomentProblem p;
    p.scenario = s;
    p.kind = Hierarchy::Sequential;
    p.level = n;
    WordBasis basis = enumerate_basis(s, PartySet::Bob, n, false);
    std::vector<int> groups;
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int a = 0; a < s.alice_outputs(); ++a) {
            p.blocks.push_back({"Theta" + to_string(A(a, x)).substr(1), int(basis.size()), basis, A(a, x)});
            groups.push_back(sequential_block(s, a, x));
        }
    detail::assign_variables(p, false, false, groups);
    detail::add_zero_rows(p);
    detail::add_completeness_rows(p, false, false);

    for (int x = 1; x < s.alice_inputs(); ++x)
        for (int i = 0; i < int(basis.size()); ++i)
            for (int j = i; j < int(basis.size()); ++j) {
                std::map<int, double> terms;
                for (int a = 0; a < s.alice_outputs(); ++a) {
                    terms[p.variable_at(sequential_block(s, a, x), i, j)] += 1.0;
                    terms[p.variable_at(sequential_block(s, a, 0), i, j)] -= 1.0;
                }
                LinearConstraint row;
                row.kind = ConstraintKind::NoSignaling;
                row.label = "no-signaling x=" + std::to_string(x) + " (" + to_string(basis[i]) + "," +
                            to_string(basis[j]) + ")";
                for (auto [k, c] : terms)
                    if (c != 0.0) row.terms.push_back({k, c});
                p.constraints.push_back(std::move(row));
            }

    LinearConstraint norm;
    norm.kind = ConstraintKind::Normalization;
    norm.label = "normalization";
    norm.rhs = 1.0;
    for (int a = 0; a < s.alice_outputs(); ++a) norm.terms.push_back({p.variable_at(sequential_block(s, a, 0), 0, 0), 1.0});
    p.constraints.push_back(std::move(norm));

    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int y = 0; y < s.bob_inputs(); ++y)
            for (int a = 0; a < s.alice_outputs(); ++a)
                for (int b = 0; b < s.bob_outputs(); ++b) {
                    double c = f.coeff(a, b, x, y);
                    if (c == 0.0) continue;
                    int g = sequential_block(s, a, x);
                    p.objective[detail::var_of(p, g, Word::raw({B(b, y)}), false)] += c;
                }
    p.objective_constant = f.constant();
    p.validate();
    return p;
}

namespace detail {

inline MomentProblem build_commuting(const BellFunctional& f, int n, Hierarchy kind) {
    check_level(n);
    const Scenario& s = f.scenario();
    bool alice_completeness = kind == Hierarchy::Standard;
    MomentProblem p;
    p.scenario = s;
    p.kind = kind;
    p.level = n;
    WordBasis basis = enumerate_basis(s, PartySet::Both, n, true);
    p.blocks.push_back({kind == Hierarchy::Standard ? "Gamma" : "GammaTilde", int(basis.size()), basis, std::nullopt});
    assign_variables(p, true, alice_completeness, {0});
    add_zero_rows(p);
    add_completeness_rows(p, true, alice_completeness);

    if (kind == Hierarchy::Modified) {
        // sum_a s(b1* A(a|x) b2) = s(b1* b2) for Bob words deg b1 <= n, deg b2 <= n-1
        WordBasis bob = enumerate_basis(s, PartySet::Bob, n, true);
        std::size_t n_short = bob.count_up_to(n - 1);
        std::map<Word, bool> seen;
        for (std::size_t i = 0; i < bob.size(); ++i)
            for (std::size_t j = 0; j < n_short; ++j) {
                Word u = multiply(adjoint(bob[i], true), bob[j], true);
                if (u.is_zero()) continue;
                Word key = symmetric_key(u, true);
                if (seen.count(key)) continue;
                seen[key] = true;
                for (int x = 0; x < s.alice_inputs(); ++x) {
                    std::map<int, double> terms;
                    for (int a = 0; a < s.alice_outputs(); ++a)
                        terms[var_of(p, 0, multiply(Word::raw({A(a, x)}), u, true), true)] += 1.0;
                    terms[var_of(p, 0, u, true)] -= 1.0;
                    LinearConstraint row;
                    row.kind = ConstraintKind::WeakCompleteness;
                    row.label = "weak-completeness x=" + std::to_string(x) + " u=" + to_string(key);
                    for (auto [k, c] : terms)
                        if (c != 0.0) row.terms.push_back({k, c});
                    p.constraints.push_back(std::move(row));
                }
            }
        // (1 - sum_a A(a|x)) b has zero norm under the weak rows for deg b <= n-1.
        // Once it is in the kernel, so is alpha (1 - sum_a A(a|x)) b for Alice
        // words alpha, as long as everything stays inside the basis.
        WordBasis alice = enumerate_basis(s, PartySet::Alice, n - 1, true);
        for (std::size_t ia = 0; ia < alice.size(); ++ia)
            for (std::size_t j = 0; j < bob.count_up_to(n - 1 - alice[ia].length()); ++j)
                for (int x = 0; x < s.alice_inputs(); ++x) {
                    std::map<int, double> vec;
                    auto add = [&](const Word& w, double c) {
                        if (w.is_zero()) return;
                        vec[int(*basis.find(w))] += c;
                    };
                    add(multiply(alice[ia], bob[j], true), 1.0);
                    for (int a = 0; a < s.alice_outputs(); ++a)
                        add(multiply(multiply(alice[ia], Word::raw({A(a, x)}), true), bob[j], true), -1.0);
                    KernelHint h;
                    h.block = 0;
                    for (auto [k, c] : vec)
                        if (c != 0.0) h.vec.push_back({k, c});
                    if (!h.vec.empty()) p.kernel_hints.push_back(std::move(h));
                }
    }

    p.constraints.push_back({{{p.variable_at(0, 0, 0), 1.0}}, 1.0, ConstraintKind::Normalization, "normalization"});

    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int y = 0; y < s.bob_inputs(); ++y)
            for (int a = 0; a < s.alice_outputs(); ++a)
                for (int b = 0; b < s.bob_outputs(); ++b) {
                    double c = f.coeff(a, b, x, y);
                    if (c == 0.0) continue;
                    p.objective[var_of(p, 0, Word::raw({A(a, x), B(b, y)}), true)] += c;
                }
    p.objective_constant = f.constant();
    p.validate();
    return p;
}

}  // namespace detail

/// Single block indexed by commuting two-party words of degree <= n.
inline MomentProblem build_standard(const BellFunctional& f, int n) {
    return detail::build_commuting(f, n, Hierarchy::Standard);
}

/// As build_standard, but Alice completeness only holds in the weak form
/// sum_a G(b1, A(a|x) b2) = G(b1, b2).
inline MomentProblem build_modified(const BellFunctional& f, int n) {
    return detail::build_commuting(f, n, Hierarchy::Modified);
}

inline MomentProblem build(const BellFunctional& f, Hierarchy h, int n) {
    switch (h) {
        case Hierarchy::Sequential: return build_sequential(f, n);
        case Hierarchy::Standard: return build_standard(f, n);
        case Hierarchy::Modified: return build_modified(f, n);
        case Hierarchy::Custom: break;
    }
    fail(ErrorKind::InvalidArgument, "cannot build a custom hierarchy from a game");
}

}  // namespace npa
