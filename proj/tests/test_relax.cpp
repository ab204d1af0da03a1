#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "npa/relax.hpp"
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

double value(const BellFunctional& f, Hierarchy h, int n) { return solve(build(f, h, n)).primal_value; }

int count_kind(const MomentProblem& p, ConstraintKind k) {
    int c = 0;
    for (const auto& row : p.constraints) c += row.kind == k;
    return c;
}

// reference values from an independent cvxpy/Clarabel formulation
constexpr double kChshQuantum = 0.85355339059327373;  // (2 + sqrt 2) / 4
constexpr double kI3322Seq1 = 0.3620768;
constexpr double kI3322Seq2 = 0.2550007;
constexpr double kI3322Npa1 = 0.375;
constexpr double kI3322Mod2 = 0.2509397196;

}  // namespace

TEST(Sequential, ChshLevelOneShape) {
    auto p = build_sequential(chsh(), 1);
    ASSERT_EQ(p.blocks.size(), 4u);
    for (const auto& b : p.blocks) EXPECT_EQ(b.size, 5);
    std::vector<std::string> words;
    for (const auto& w : p.blocks[0].basis.words()) words.push_back(to_string(w));
    EXPECT_EQ(words, (std::vector<std::string>{"1", "B(0|0)", "B(1|0)", "B(0|1)", "B(1|1)"}));
}

TEST(Sequential, ChshLevelOneNoSignalingRows) {
    auto p = build_sequential(chsh(), 1);
    EXPECT_EQ(count_kind(p, ConstraintKind::NoSignaling), 15);
}

TEST(Sequential, NormalizationTargetsOne) {
    for (const BellFunctional* f : {&chsh(), &i3322()}) {
        auto p = build_sequential(*f, 1);
        int found = 0;
        for (const auto& row : p.constraints) {
            if (row.kind != ConstraintKind::Normalization) continue;
            ++found;
            EXPECT_EQ(row.rhs, 1.0);
            ASSERT_EQ(row.terms.size(), std::size_t(f->scenario().alice_outputs()));
            for (int a = 0; a < f->scenario().alice_outputs(); ++a)
                EXPECT_EQ(row.terms[a].first, p.variable_at(sequential_block(f->scenario(), a, 0), 0, 0));
        }
        EXPECT_EQ(found, 1);
    }
}

TEST(Sequential, LevelZeroRejected) {
    try {
        build_sequential(chsh(), 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::LevelTooSmall);
    }
    EXPECT_THROW(build_standard(chsh(), 0), Error);
    EXPECT_THROW(build_modified(chsh(), -1), Error);
}

TEST(Sequential, CellsWithEqualProductsShareAVariable) {
    auto p = build_sequential(chsh(), 2);
    const auto& basis = p.blocks[0].basis;
    // (B00, B01) and (1, B00 B01) both carry B00*B01
    int i = int(*basis.find(parse_word("B(0|0)")));
    int j = int(*basis.find(parse_word("B(0|1)")));
    int k = int(*basis.find(parse_word("B(0|0)·B(0|1)")));
    EXPECT_EQ(p.variable_at(0, i, j), p.variable_at(0, 0, k));
    // different blocks never share
    EXPECT_NE(p.variable_at(0, i, j), p.variable_at(1, i, j));
}

TEST(Sequential, ObjectiveReadsFirstRow) {
    auto p = build_sequential(chsh(), 1);
    double total = 0.0;
    for (auto [v, c] : p.objective) {
        const auto& var = p.variables[v];
        EXPECT_EQ(var.word.length(), 1);
        total += c;
    }
    EXPECT_NEAR(total, 2.0, 1e-15);  // 8 winning cells of weight 1/4
}

TEST(Standard, ChshLevelOneShape) {
    auto p = build_standard(chsh(), 1);
    ASSERT_EQ(p.blocks.size(), 1u);
    EXPECT_EQ(p.blocks[0].size, 9);
}

TEST(Standard, ProjectivityIdentifiesDiagonal) {
    auto p = build_standard(chsh(), 1);
    int a = int(*p.blocks[0].basis.find(parse_word("A(0|0)")));
    EXPECT_EQ(p.variable_at(0, a, a), p.variable_at(0, 0, a));
}

TEST(Standard, LevelTwoCellOutsideObjective) {
    auto p = build_standard(chsh(), 2);
    const auto& basis = p.blocks[0].basis;
    auto i = basis.find(parse_word("A(0|0)"));
    auto j = basis.find(parse_word("B(0|0)·B(0|1)"));
    ASSERT_TRUE(i && j);
    int v = p.variable_at(0, int(*i), int(*j));
    EXPECT_EQ(p.objective.count(v), 0u);
    for (auto [k, c] : p.objective) EXPECT_EQ(p.variables[k].word.length(), 2);
}

TEST(Modified, ChshLevelTwoWeakRowPresent) {
    auto p = build_modified(chsh(), 2);
    const auto& basis = p.blocks[0].basis;
    auto idx = [&](const char* w) { return int(*basis.find(parse_word(w))); };
    int b00 = idx("B(0|0)");
    std::set<std::pair<int, double>> want = {
        {p.variable_at(0, b00, idx("A(0|0)·B(0|1)")), 1.0},
        {p.variable_at(0, b00, idx("A(1|0)·B(0|1)")), 1.0},
        {p.variable_at(0, b00, idx("B(0|1)")), -1.0},
    };
    bool found = false;
    for (const auto& row : p.constraints) {
        if (row.kind != ConstraintKind::WeakCompleteness) continue;
        std::set<std::pair<int, double>> have(row.terms.begin(), row.terms.end());
        if (have == want && row.rhs == 0.0) found = true;
    }
    EXPECT_TRUE(found);
}

TEST(Modified, NoAliceCompletenessRows) {
    // standard NPA expands A(1|0)A(0|1) = A(0|1) - A(0|0)A(0|1); the weak rows
    // only sandwich Alice sums between Bob words
    auto has_row = [](const MomentProblem& p) {
        std::set<int> want = {*p.find_variable(0, parse_word("A(1|0)·A(0|1)")), *p.find_variable(0, parse_word("A(0|1)")),
                              *p.find_variable(0, parse_word("A(0|0)·A(0|1)"))};
        for (const auto& row : p.constraints) {
            std::set<int> have;
            for (auto [v, c] : row.terms) have.insert(v);
            if (have == want) return true;
        }
        return false;
    };
    EXPECT_TRUE(has_row(build_standard(chsh(), 2)));
    EXPECT_FALSE(has_row(build_modified(chsh(), 2)));
}

TEST(Relax, ConstraintsAreConsistent) {
    // elimination throws Infeasible on contradictory rows
    for (const BellFunctional* f : {&chsh(), &i3322()})
        for (auto h : {Hierarchy::Sequential, Hierarchy::Standard, Hierarchy::Modified})
            for (int n = 1; n <= 2; ++n) {
                auto p = build(*f, h, n);
                EXPECT_NO_THROW(Elimination(int(p.variables.size()), sdp_detail::constraint_rows(p)));
            }
}

TEST(Relax, EveryCellCoveredOnce) {
    for (auto h : {Hierarchy::Sequential, Hierarchy::Standard, Hierarchy::Modified}) {
        auto p = build(i3322(), h, 2);
        std::size_t cells = 0;
        for (const auto& v : p.variables) cells += v.cells.size();
        EXPECT_EQ(cells, p.total_cells());
    }
}

TEST(Relax, ChshLevelOneValues) {
    EXPECT_NEAR(value(chsh(), Hierarchy::Sequential, 1), kChshQuantum, 1e-6);
    EXPECT_NEAR(value(chsh(), Hierarchy::Standard, 1), kChshQuantum, 1e-6);
    EXPECT_NEAR(value(chsh(), Hierarchy::Modified, 1), kChshQuantum, 1e-6);
}

TEST(Relax, I3322ReferenceValues) {
    EXPECT_NEAR(value(i3322(), Hierarchy::Sequential, 1), kI3322Seq1, 1e-6);
    EXPECT_NEAR(value(i3322(), Hierarchy::Sequential, 2), kI3322Seq2, 1e-6);
    EXPECT_NEAR(value(i3322(), Hierarchy::Standard, 1), kI3322Npa1, 1e-6);
    EXPECT_NEAR(value(i3322(), Hierarchy::Modified, 2), kI3322Mod2, 1e-6);
}

TEST(Relax, SequentialNonincreasing) {
    for (const BellFunctional* f : {&chsh(), &i3322()}) {
        double prev = value(*f, Hierarchy::Sequential, 1);
        for (int n = 2; n <= 3; ++n) {
            double v = value(*f, Hierarchy::Sequential, n);
            EXPECT_LE(v, prev + 2e-8) << n;
            prev = v;
        }
    }
}

TEST(Relax, ModifiedRelaxesStandard) {
    for (const BellFunctional* f : {&chsh(), &i3322()})
        for (int n = 1; n <= 2; ++n)
            EXPECT_LE(value(*f, Hierarchy::Standard, n), value(*f, Hierarchy::Modified, n) + 2e-8) << n;
}

TEST(Relax, ModifiedBelowLowerSequentialLevel) {
    for (const BellFunctional* f : {&chsh(), &i3322()})
        EXPECT_LE(value(*f, Hierarchy::Modified, 2), value(*f, Hierarchy::Sequential, 1) + 2e-8);
}

TEST(Relax, ChshSandwichAtLevelTwo) {
    double mod2 = value(chsh(), Hierarchy::Modified, 2);
    EXPECT_LE(value(chsh(), Hierarchy::Sequential, 3), mod2 + 2e-8);
    EXPECT_LE(mod2, value(chsh(), Hierarchy::Sequential, 1) + 2e-8);
}

// With projective Alice letters the modified relaxation is tighter than the
// next sequential level on I3322.
TEST(Relax, I3322ProjectiveModifiedBelowNextSequential) {
    EXPECT_GT(value(i3322(), Hierarchy::Sequential, 3), value(i3322(), Hierarchy::Modified, 2) + 1e-5);
}

TEST(Relax, LevelOneSequentialVersusStandard) {
    EXPECT_NEAR(value(chsh(), Hierarchy::Sequential, 1), value(chsh(), Hierarchy::Standard, 1), 2e-8);
    // sequential level 1 already sees B*B' moments under each Alice outcome
    EXPECT_LT(value(i3322(), Hierarchy::Sequential, 1), value(i3322(), Hierarchy::Standard, 1) - 1e-3);
}

TEST(Relax, ParseHierarchyNames) {
    EXPECT_EQ(parse_hierarchy("seq"), Hierarchy::Sequential);
    EXPECT_EQ(parse_hierarchy("standard"), Hierarchy::Standard);
    EXPECT_EQ(parse_hierarchy("mod"), Hierarchy::Modified);
    EXPECT_THROW(parse_hierarchy("fancy"), Error);
}
