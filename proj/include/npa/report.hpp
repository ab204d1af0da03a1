#pragma once

// Hierarchy comparison table and the compiled-score bound statement built
// from it.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "npa/error.hpp"
#include "npa/extract.hpp"
#include "npa/relax.hpp"
#include "npa/scenario.hpp"
#include "npa/sdp.hpp"

namespace npa {

struct LevelRow {
    int n = 0;
    std::optional<double> sequential, standard, modified;
    std::optional<bool> flat;  // sequential levels >= 2
    std::optional<double> eps;
    std::vector<std::string> failures;  // "hierarchy: error"
};

struct FlatExtraction {
    int level = 0;
    int dim = 0;
    double score = 0.0;
};

struct BoundReport {
    std::string game;
    std::vector<LevelRow> levels;
    std::optional<double> reference;
    bool reference_from_user = false;
    std::optional<FlatExtraction> flat_extraction;
    std::string bound_statement;
};

struct ReportOptions {
    SolverOptions solver;
    /// Sequential solves run tighter so that rank decisions are not blurred by
    /// interior-point residue.
    double flat_gap_tol = 1e-10;
    double rank_tol = 1e-7;
};

inline constexpr const char* kNegligibleToken = "negl_{S,n}(λ)";

namespace report_detail {

inline std::string fmt(double v, const char* f = "%.10f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline MomentSolution solve_sequential(const MomentProblem& p, const ReportOptions& o) {
    SolverOptions tight = o.solver;
    tight.gap_tol = std::min(tight.gap_tol, o.flat_gap_tol);
    tight.feas_tol = std::min(tight.feas_tol, o.flat_gap_tol);
    try {
        MomentSolution s = solve(p, tight);
        if (s.status == SolveStatus::Optimal) return s;
    } catch (const Error&) {
    }
    return solve(p, o.solver);
}

}  // namespace report_detail

inline BoundReport build_report(const BellFunctional& f, int max_level, std::optional<double> reference = std::nullopt,
                                const ReportOptions& opt = {}) {
    using namespace report_detail;
    if (max_level < 1) fail(ErrorKind::LevelTooSmall, "report needs max_level >= 1");
    BoundReport r;
    r.game = f.name();
    for (int n = 1; n <= max_level; ++n) {
        LevelRow row;
        row.n = n;
        try {
            MomentProblem p = build_sequential(f, n);
            MomentSolution s = solve_sequential(p, opt);
            row.sequential = s.primal_value;
            if (n >= 2) {
                FlatnessReport fr = check_flat(p, s, opt.rank_tol);
                row.flat = fr.is_flat && !fr.borderline;
                if (*row.flat && !r.flat_extraction) {
                    try {
                        GnsModel m = gns_build(p, s, opt.rank_tol);
                        r.flat_extraction = FlatExtraction{n, m.dim, verify_model(m, f).score};
                    } catch (const Error& e) {
                        row.failures.push_back(std::string("extraction: ") + e.what());
                    }
                }
            }
        } catch (const Error& e) {
            row.failures.push_back(std::string("sequential: ") + e.what());
        }
        for (Hierarchy h : {Hierarchy::Standard, Hierarchy::Modified}) {
            try {
                double v = solve(build(f, h, n), opt.solver).primal_value;
                (h == Hierarchy::Standard ? row.standard : row.modified) = v;
            } catch (const Error& e) {
                row.failures.push_back(to_string(h) + ": " + e.what());
            }
        }
        r.levels.push_back(std::move(row));
    }

    r.reference_from_user = reference.has_value();
    r.reference = reference;
    if (!reference)
        for (auto it = r.levels.rbegin(); it != r.levels.rend(); ++it)
            if (it->sequential) {
                r.reference = it->sequential;
                break;
            }
    if (r.reference)
        for (auto& row : r.levels)
            if (row.sequential) row.eps = *row.sequential - *r.reference;

    std::optional<double> best;
    int best_n = 0;
    for (const auto& row : r.levels)
        if (row.sequential && (!best || *row.sequential < *best)) {
            best = row.sequential;
            best_n = row.n;
        }
    std::string neg = kNegligibleToken;
    if (r.flat_extraction)
        r.bound_statement = "omega_comp <= omega_q = " + fmt(r.flat_extraction->score, "%.7f") + " + " + neg +
                            "  (flat at level " + std::to_string(r.flat_extraction->level) + ", optimal)";
    else if (best)
        r.bound_statement = "omega_comp <= " + fmt(*best, "%.7f") + " + " + neg + "  (sequential level " +
                            std::to_string(best_n) + ")";
    else
        r.bound_statement = "no bound: every sequential level failed";
    return r;
}

inline std::string render_table(const BoundReport& r) {
    using report_detail::fmt;
    std::ostringstream out;
    auto cell = [&](const std::optional<double>& v) { return v ? fmt(*v) : std::string("      failed"); };
    out << "game: " << r.game << "\n";
    out << " n   sequential      standard        modified        flat   eps\n";
    for (const auto& row : r.levels) {
        char n[8];
        std::snprintf(n, sizeof n, "%2d", row.n);
        out << " " << n << "  " << cell(row.sequential) << "  " << cell(row.standard) << "  " << cell(row.modified) << "  "
            << (row.flat ? (*row.flat ? "yes " : "no  ") : "-   ") << "  " << (row.eps ? fmt(*row.eps, "%.3e") : "-") << "\n";
    }
    if (r.reference)
        out << "eps reference: " << fmt(*r.reference)
            << (r.reference_from_user ? " (supplied)" : " (deepest sequential level; upper-bound gap, not true eps)") << "\n";
    if (r.flat_extraction)
        out << "extracted model: level " << r.flat_extraction->level << ", dimension " << r.flat_extraction->dim
            << ", score " << fmt(r.flat_extraction->score) << "\n";
    for (const auto& row : r.levels)
        for (const auto& f : row.failures) out << "level " << row.n << " " << f << "\n";
    out << "\n" << r.bound_statement << "\n";
    out << "  " << kNegligibleToken << ": negligible function of the security parameter of the compiled game; symbolic, never evaluated\n";
    return out.str();
}

/// Line-oriented key/value mirror of the table.
inline std::string to_structured(const BoundReport& r) {
    using report_detail::fmt;
    std::ostringstream out;
    auto opt = [&](const std::optional<double>& v) { return v ? fmt(*v, "%.17g") : std::string("failed"); };
    out << "bound-report\n";
    out << "game " << (r.game.empty() ? "-" : r.game) << "\n";
    out << "levels " << r.levels.size() << "\n";
    for (const auto& row : r.levels) {
        out << "level " << row.n << " sequential " << opt(row.sequential) << " standard " << opt(row.standard) << " modified "
            << opt(row.modified) << " flat " << (row.flat ? (*row.flat ? "1" : "0") : "-") << " eps "
            << (row.eps ? fmt(*row.eps, "%.17g") : "-") << " failures " << row.failures.size() << "\n";
        for (const auto& f : row.failures) out << "failure " << row.n << " " << f << "\n";
    }
    out << "reference " << (r.reference ? fmt(*r.reference, "%.17g") : "-") << " " << (r.reference_from_user ? "supplied" : "deepest")
        << "\n";
    if (r.flat_extraction)
        out << "flat-extraction level " << r.flat_extraction->level << " dim " << r.flat_extraction->dim << " score "
            << fmt(r.flat_extraction->score, "%.17g") << "\n";
    out << "bound " << r.bound_statement << "\n";
    return out.str();
}

}  // namespace npa
