#pragma once

// Sparse Gaussian elimination of linear equalities over moment variables.
// Every independent row gets the largest variable it still contains as its
// pivot, so variable order controls fill-in. Non-pivot variables are free.

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <utility>
#include <vector>

#include "npa/error.hpp"

namespace npa {

using SparseTerms = std::vector<std::pair<int, double>>;  // sorted by index

/// Affine form const + sum coef*y[k] over free parameters.
struct AffineExpr {
    double constant = 0.0;
    SparseTerms terms;
};

class Elimination {
public:
    struct Row {
        int pivot = -1;
        double pivot_coef = 1.0;
        SparseTerms rest;  // other variables, all smaller than pivot
        double rhs = 0.0;
        int source = -1;   // original constraint index
        std::vector<std::pair<int, double>> mu;  // (echelon row, factor) subtracted while reducing
    };

    Elimination() = default;

    /// rows: (terms, rhs) pairs; variables in [0, nvars).
    Elimination(int nvars, const std::vector<std::pair<SparseTerms, double>>& rows, double tol = 1e-9)
        : nvars_(nvars), row_of_pivot_(nvars, -1), status_(rows.size(), -1) {
        for (std::size_t i = 0; i < rows.size(); ++i) reduce(int(i), rows[i].first, rows[i].second, tol);
        free_index_.assign(nvars, -1);
        for (int v = 0; v < nvars; ++v)
            if (row_of_pivot_[v] < 0) {
                free_index_[v] = int(free_vars_.size());
                free_vars_.push_back(v);
            }
    }

    int num_vars() const { return nvars_; }
    int num_free() const { return int(free_vars_.size()); }
    const std::vector<int>& free_vars() const { return free_vars_; }
    int free_index(int var) const { return free_index_[var]; }
    const std::vector<Row>& rows() const { return echelon_; }
    /// Echelon row for an original constraint, -1 when it was redundant.
    int echelon_of(int constraint) const { return status_[constraint]; }

    /// Values of all variables given the free parameters.
    std::vector<double> evaluate(const std::vector<double>& y) const {
        std::vector<double> v(nvars_, 0.0);
        for (int i = 0; i < nvars_; ++i) {
            int r = row_of_pivot_[i];
            if (r < 0) {
                v[i] = y[free_index_[i]];
                continue;
            }
            const Row& row = echelon_[r];
            double s = row.rhs;
            for (auto [k, c] : row.rest) s -= c * v[k];
            v[i] = s / row.pivot_coef;
        }
        return v;
    }

    /// Affine expressions in the free parameters for the requested variables
    /// (and, as a by-product, everything they depend on).
    std::unordered_map<int, AffineExpr> expressions(const std::vector<int>& wanted) const {
        std::vector<char> need(nvars_, 0);
        std::vector<int> stack(wanted.begin(), wanted.end());
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            if (need[v]) continue;
            need[v] = 1;
            int r = row_of_pivot_[v];
            if (r >= 0)
                for (auto [k, c] : echelon_[r].rest)
                    if (!need[k]) stack.push_back(k);
        }
        std::unordered_map<int, AffineExpr> out;
        std::vector<double> acc;
        std::vector<int> touched;
        acc.assign(free_vars_.size(), 0.0);
        for (int v = 0; v < nvars_; ++v) {
            if (!need[v]) continue;
            int r = row_of_pivot_[v];
            AffineExpr e;
            if (r < 0) {
                e.terms.push_back({free_index_[v], 1.0});
            } else {
                const Row& row = echelon_[r];
                e.constant = row.rhs / row.pivot_coef;
                for (auto [k, c] : row.rest) {
                    const AffineExpr& sub = out.at(k);
                    double f = -c / row.pivot_coef;
                    e.constant += f * sub.constant;
                    for (auto [j, d] : sub.terms) {
                        if (acc[j] == 0.0) touched.push_back(j);
                        acc[j] += f * d;
                        if (acc[j] == 0.0) acc[j] = 1e-300;  // keep slot marked
                    }
                }
                std::sort(touched.begin(), touched.end());
                for (int j : touched) {
                    if (std::abs(acc[j]) > 1e-13) e.terms.push_back({j, acc[j]});
                    acc[j] = 0.0;
                }
                touched.clear();
            }
            out.emplace(v, std::move(e));
        }
        return out;
    }

    /// Multipliers lambda with E^T lambda = g for the original rows, given g on
    /// all variables (g must vanish on the free directions for exactness).
    std::vector<double> multipliers(const std::vector<double>& g, std::size_t n_constraints) const {
        std::vector<double> acc(nvars_, 0.0), alpha(echelon_.size(), 0.0);
        for (std::size_t k = 0; k < echelon_.size(); ++k) {
            const Row& row = echelon_[k];
            alpha[k] = (g[row.pivot] - acc[row.pivot]) / row.pivot_coef;
            for (auto [v, c] : row.rest) acc[v] += alpha[k] * c;
        }
        std::vector<double> lambda(n_constraints, 0.0);
        for (std::size_t k = echelon_.size(); k-- > 0;) {
            const Row& row = echelon_[k];
            lambda[row.source] = alpha[k];
            for (auto [j, m] : row.mu) alpha[j] -= alpha[k] * m;
        }
        return lambda;
    }

private:
    void reduce(int source, const SparseTerms& terms, double rhs, double tol) {
        std::map<int, double> r;
        for (auto [v, c] : terms) {
            if (v < 0 || v >= nvars_) fail(ErrorKind::IndexOutOfBounds, "constraint variable out of range");
            r[v] += c;
        }
        double scale = 1.0;
        for (auto& [v, c] : r) scale = std::max(scale, std::abs(c));
        Row out;
        out.source = source;
        // descending sweep; substitutions only introduce smaller variables
        auto it = r.end();
        while (it != r.begin()) {
            --it;
            int v = it->first;
            double c = it->second;
            if (std::abs(c) <= tol * scale) {
                it = r.erase(it);
                continue;
            }
            int pr = row_of_pivot_[v];
            if (pr < 0) continue;
            const Row& p = echelon_[pr];
            double f = c / p.pivot_coef;
            out.mu.push_back({pr, f});
            rhs -= f * p.rhs;
            for (auto [k, d] : p.rest) r[k] -= f * d;
            it = r.erase(it);
        }
        for (auto it2 = r.begin(); it2 != r.end();)
            it2 = std::abs(it2->second) <= tol * scale ? r.erase(it2) : std::next(it2);
        if (r.empty()) {
            if (std::abs(rhs) > tol * std::max(1.0, scale))
                fail(ErrorKind::Infeasible, "linear constraints are contradictory (row " + std::to_string(source) + ")");
            return;
        }
        auto top = std::prev(r.end());
        out.pivot = top->first;
        out.pivot_coef = top->second;
        r.erase(top);
        out.rest.assign(r.begin(), r.end());
        out.rhs = rhs;
        status_[source] = int(echelon_.size());
        row_of_pivot_[out.pivot] = int(echelon_.size());
        echelon_.push_back(std::move(out));
    }

    int nvars_ = 0;
    std::vector<int> row_of_pivot_;
    std::vector<int> status_;
    std::vector<Row> echelon_;
    std::vector<int> free_vars_;
    std::vector<int> free_index_;
};

}  // namespace npa
