#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "npa/sdp.hpp"

using namespace npa;

namespace {

std::string game_path(const std::string& name) { return std::string(NPA_DATA_DIR) + "/games/" + name; }

const BellFunctional& chsh() {
    static const BellFunctional f = load_game(game_path("chsh.json"));
    return f;
}

const BellFunctional& i3322() {
    static const BellFunctional f = load_game(game_path("i3322.json"));
    return f;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an npa::Error";
    return ErrorKind::InvalidArgument;
}

constexpr double kChshQuantum = 0.85355339059327373;

std::vector<std::string> lines_of(const std::string& text, std::size_t n) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (out.size() < n && std::getline(in, line)) out.push_back(line);
    return out;
}

}  // namespace

TEST(Solve, ChshSequentialLevelOne) {
    auto sol = solve(build_sequential(chsh(), 1));
    EXPECT_EQ(sol.status, SolveStatus::Optimal);
    EXPECT_NEAR(sol.primal_value, kChshQuantum, 1e-6);
    EXPECT_NEAR(sol.dual_value, kChshQuantum, 1e-6);
}

TEST(Solve, ContradictoryClassesAreInfeasible) {
    auto p = MomentProblem::with_blocks({1});
    p.constraints.push_back({{{0, 1.0}}, 1.0, ConstraintKind::Normalization, "one"});
    p.constraints.push_back({{{0, 1.0}}, 2.0, ConstraintKind::Affine, "two"});
    EXPECT_EQ(kind_of([&] { solve(p); }), ErrorKind::Infeasible);
}

TEST(Solve, NegativeFixedBlockIsInfeasible) {
    auto p = MomentProblem::with_blocks({2});
    p.constraints.push_back({{{0, 1.0}}, -1.0, ConstraintKind::Affine, "negative diagonal"});
    p.constraints.push_back({{{2, 1.0}}, 1.0, ConstraintKind::Affine, ""});
    p.constraints.push_back({{{1, 1.0}}, 0.0, ConstraintKind::Affine, ""});
    EXPECT_EQ(kind_of([&] { solve(p); }), ErrorKind::Infeasible);
    SolverOptions o;
    o.throw_on_failure = false;
    EXPECT_EQ(solve(p, o).status, SolveStatus::Infeasible);
}

TEST(Solve, PsdInfeasibleWithFreeEntries) {
    // [[-1, t], [t, s]] is never PSD
    auto p = MomentProblem::with_blocks({2});
    p.constraints.push_back({{{0, 1.0}}, -1.0, ConstraintKind::Affine, ""});
    p.objective[1] = 1.0;
    SolverOptions o;
    o.throw_on_failure = false;
    auto st = solve(p, o).status;
    EXPECT_TRUE(st == SolveStatus::Infeasible || st == SolveStatus::NumericalTrouble) << to_string(st);
    EXPECT_THROW(solve(p), Error);
}

TEST(Solve, ZeroObjective) {
    auto p = build_sequential(chsh(), 1);
    p.objective.clear();
    auto sol = solve(p);
    EXPECT_EQ(sol.status, SolveStatus::Optimal);
    EXPECT_NEAR(sol.primal_value, 0.0, 1e-9);
}

TEST(Solve, UnboundedDirectionRejected) {
    // objective moves an entry no block constrains through PSD-ness of a 1x1
    auto p = MomentProblem::with_blocks({1, 1});
    p.variables.push_back({-1, Word(), {}});
    p.index_cells();
    p.objective[2] = 1.0;
    EXPECT_EQ(kind_of([&] { solve(p); }), ErrorKind::NumericalTrouble);
}

TEST(Solve, OptionsValidated) {
    SolverOptions o;
    o.gap_tol = 0.0;
    EXPECT_EQ(kind_of([&] { solve(build_sequential(chsh(), 1), o); }), ErrorKind::InvalidArgument);
    o = {};
    o.max_iters = 0;
    EXPECT_THROW(o.check(), Error);
    o = {};
    o.step_fraction = 1.0;
    EXPECT_THROW(o.check(), Error);
}

TEST(Solve, WeakDuality) {
    for (const BellFunctional* f : {&chsh(), &i3322()})
        for (auto h : {Hierarchy::Sequential, Hierarchy::Standard, Hierarchy::Modified})
            for (int n = 1; n <= 2; ++n) {
                auto sol = solve(build(*f, h, n));
                EXPECT_GE(sol.dual_value, sol.primal_value - 10 * SolverOptions{}.gap_tol) << to_string(h) << n;
            }
}

TEST(Solve, MultipliersSatisfyStationarity) {
    // objective + sum over cells of X = sum_r lambda_r * row_r, and the dual
    // value equals lambda . rhs + constant
    for (auto h : {Hierarchy::Sequential, Hierarchy::Standard}) {
        auto p = build(chsh(), h, 2);
        auto sol = solve(p);
        std::vector<double> lhs(p.variables.size(), 0.0), rhs(p.variables.size(), 0.0);
        for (auto [v, c] : p.objective) lhs[v] += c;
        for (std::size_t v = 0; v < p.variables.size(); ++v)
            for (const auto& c : p.variables[v].cells)
                lhs[v] += (c.row == c.col ? 1.0 : 2.0) * sol.dual_blocks[c.block](c.row, c.col);
        double bound = p.objective_constant;
        ASSERT_EQ(sol.dual_multipliers.size(), p.constraints.size());
        for (std::size_t r = 0; r < p.constraints.size(); ++r) {
            for (auto [v, a] : p.constraints[r].terms) rhs[v] += sol.dual_multipliers[r] * a;
            bound += sol.dual_multipliers[r] * p.constraints[r].rhs;
        }
        double worst = 0.0;
        for (std::size_t v = 0; v < lhs.size(); ++v) worst = std::max(worst, std::abs(lhs[v] - rhs[v]));
        EXPECT_LT(worst, 1e-6) << to_string(h);
        EXPECT_NEAR(bound, sol.dual_value, 1e-6) << to_string(h);
    }
}

TEST(Certify, OptimalChshLevelOne) {
    auto p = build_sequential(chsh(), 1);
    auto rep = certify(p, solve(p));
    for (double e : rep.min_eig_per_block) EXPECT_GE(e, -1e-8);
    EXPECT_LE(rep.max_constraint_residual, 1e-8);
    EXPECT_NEAR(rep.objective_recomputed, kChshQuantum, 1e-6);
    EXPECT_LE(rep.duality_gap, 1e-7);
}

TEST(Certify, BundledGamesWithinTolerances) {
    SolverOptions o;
    for (const BellFunctional* f : {&chsh(), &i3322()})
        for (auto h : {Hierarchy::Sequential, Hierarchy::Standard, Hierarchy::Modified})
            for (int n = 1; n <= 3; ++n) {
                auto p = build(*f, h, n);
                auto sol = solve(p, o);
                auto rep = certify(p, sol);
                for (double e : rep.min_eig_per_block) EXPECT_GE(e, -10 * o.feas_tol) << to_string(h) << n;
                EXPECT_LE(rep.max_constraint_residual, 10 * o.feas_tol) << to_string(h) << n;
                EXPECT_NEAR(rep.objective_recomputed, sol.primal_value, 10 * o.gap_tol);
            }
}

TEST(Certify, IdentityBlocksOnUnnormalizedProblem) {
    auto p = MomentProblem::with_blocks({2});
    p.constraints.push_back({{{0, 1.0}}, 2.0, ConstraintKind::Normalization, "(0,0) = 2"});
    MomentSolution sol;
    sol.values = {Eigen::MatrixXd::Identity(2, 2)};
    auto rep = certify(p, sol);
    EXPECT_EQ(rep.max_constraint_residual, 1.0);
    EXPECT_EQ(rep.min_eig_per_block[0], 1.0);

    p.constraints[0].rhs = 1.0;
    EXPECT_EQ(certify(p, sol).max_constraint_residual, 0.0);
}

TEST(Certify, NegatedBlockReported) {
    auto p = build_sequential(chsh(), 1);
    auto sol = solve(p);
    sol.values[2] = -sol.values[2];
    auto rep = certify(p, sol);
    EXPECT_LT(rep.min_eig_per_block[2], -1e-3);
    EXPECT_GE(rep.min_eig_per_block[0], -1e-8);
}

TEST(Certify, ShapeMismatch) {
    auto p = build_sequential(chsh(), 1);
    MomentSolution sol;
    sol.values = {Eigen::MatrixXd::Identity(5, 5)};
    EXPECT_EQ(kind_of([&] { certify(p, sol); }), ErrorKind::ShapeMismatch);
    sol.values.assign(4, Eigen::MatrixXd::Identity(4, 4));
    EXPECT_EQ(kind_of([&] { certify(p, sol); }), ErrorKind::ShapeMismatch);
}

TEST(Sdpa, ChshSequentialHeader) {
    auto text = export_sdpa(build_sequential(chsh(), 1));
    auto head = lines_of(text, 3);
    EXPECT_EQ(head[1], "4");
    EXPECT_EQ(head[2], "5 5 5 5");
    auto parsed = parse_sdpa(text);
    EXPECT_EQ(parsed.m, std::stoi(head[0]));
}

TEST(Sdpa, ChshStandardHeader) {
    auto head = lines_of(export_sdpa(build_standard(chsh(), 1)), 3);
    EXPECT_EQ(head[1], "1");
    EXPECT_EQ(head[2], "9");
}

TEST(Sdpa, FixedScalarBlock) {
    auto p = MomentProblem::with_blocks({1});
    p.constraints.push_back({{{0, 1.0}}, 1.0, ConstraintKind::Normalization, ""});
    p.objective[0] = 3.0;
    double offset = 0.0;
    auto text = export_sdpa(p, &offset);
    EXPECT_EQ(text, "0\n1\n1\n\n0 1 1 1 -1\n");
    EXPECT_EQ(offset, 3.0);
    auto back = sdpa_to_moment_problem(parse_sdpa(text), offset);
    EXPECT_NEAR(solve(back).primal_value, 3.0, 1e-12);
}

TEST(Sdpa, EntriesAreUpperTriangleOneBased) {
    auto s = parse_sdpa(export_sdpa(build_standard(chsh(), 2)));
    for (const auto& e : s.entries) {
        EXPECT_LE(e.row, e.col);
        EXPECT_GE(e.row, 0);
        EXPECT_LT(e.col, s.block_sizes[e.block]);
        EXPECT_GE(e.k, 0);
        EXPECT_LE(e.k, s.m);
    }
}

TEST(Sdpa, Deterministic) {
    for (auto h : {Hierarchy::Sequential, Hierarchy::Standard, Hierarchy::Modified}) {
        auto a = export_sdpa(build(i3322(), h, 2));
        auto b = export_sdpa(build(i3322(), h, 2));
        EXPECT_EQ(a, b);
    }
}

TEST(Sdpa, RoundTripReproducesValue) {
    struct Case {
        const BellFunctional* f;
        Hierarchy h;
        int n;
    };
    for (auto c : {Case{&chsh(), Hierarchy::Sequential, 1}, Case{&chsh(), Hierarchy::Standard, 2},
                   Case{&i3322(), Hierarchy::Sequential, 1}, Case{&i3322(), Hierarchy::Standard, 1}}) {
        auto p = build(*c.f, c.h, c.n);
        double offset = 0.0;
        auto text = export_sdpa(p, &offset);
        auto back = sdpa_to_moment_problem(parse_sdpa(text), offset);
        EXPECT_NEAR(solve(back).primal_value, solve(p).primal_value, 1e-6) << to_string(c.h) << c.n;
    }
}

TEST(Sdpa, ParserToleratesCommentsAndPunctuation) {
    std::string text =
        "\"a comment\n"
        "* another\n"
        "1 =mdim\n"
        "1 =nblock\n"
        "{2}\n"
        "(-1.0)\n"
        "0,1,1,1,-1\n"
        "0 1 2 2 -1\n"
        "1 1 1 2 1\n";
    auto s = parse_sdpa(text);
    EXPECT_EQ(s.m, 1);
    ASSERT_EQ(s.block_sizes.size(), 1u);
    EXPECT_EQ(s.block_sizes[0], 2);
    EXPECT_EQ(s.c[0], -1.0);
    EXPECT_EQ(s.entries.size(), 3u);
    // max t s.t. [[1, t], [t, 1]] PSD
    EXPECT_NEAR(solve(sdpa_to_moment_problem(s)).primal_value, 1.0, 1e-7);
}

TEST(Sdpa, MalformedInput) {
    EXPECT_EQ(kind_of([] { parse_sdpa("1\n"); }), ErrorKind::Parse);
    EXPECT_EQ(kind_of([] { parse_sdpa("1\n1\n2\n1\n0 2 1 1 1\n"); }), ErrorKind::Parse);
}
