#include <gtest/gtest.h>

#include <cmath>

#include "npa/report.hpp"

using namespace npa;

namespace {

std::string game_path(const std::string& name) { return std::string(NPA_DATA_DIR) + "/games/" + name; }

const BellFunctional& chsh() {
    static const BellFunctional f = load_game(game_path("chsh.json"));
    return f;
}

const double kCos2 = std::pow(std::cos(M_PI / 8), 2);

}  // namespace

TEST(Report, ChshWithReference) {
    auto r = build_report(chsh(), 2, kCos2);
    ASSERT_EQ(r.levels.size(), 2u);
    EXPECT_TRUE(r.reference_from_user);
    for (const auto& row : r.levels) {
        ASSERT_TRUE(row.eps);
        EXPECT_LE(std::abs(*row.eps), 1e-6);
        EXPECT_TRUE(row.failures.empty());
    }
    EXPECT_FALSE(r.levels[0].flat);
    // the level-2 optimum is unique and has rank growth, so no extraction yet
    ASSERT_TRUE(r.levels[1].flat);
    EXPECT_FALSE(*r.levels[1].flat);
    EXPECT_NE(r.bound_statement.find(kNegligibleToken), std::string::npos);
}

TEST(Report, ChshFlatAtLevelThreeUsesOptimalForm) {
    auto r = build_report(chsh(), 3, kCos2);
    ASSERT_TRUE(r.levels[2].flat);
    EXPECT_TRUE(*r.levels[2].flat);
    ASSERT_TRUE(r.flat_extraction);
    EXPECT_EQ(r.flat_extraction->level, 3);
    EXPECT_LE(r.flat_extraction->dim, 4);
    EXPECT_NEAR(r.flat_extraction->score, kCos2, 1e-6);
    EXPECT_EQ(r.bound_statement.rfind("omega_comp <= omega_q = 0.8535534 + ", 0), 0u);
}

TEST(Report, ColumnsRespectOrderRelations) {
    auto r = build_report(chsh(), 3);
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
        const auto& row = r.levels[i];
        EXPECT_LE(*row.standard, *row.modified + 1e-6);
        if (i > 0) EXPECT_LE(*row.sequential, *r.levels[i - 1].sequential + 1e-6);
        if (i + 1 < r.levels.size()) EXPECT_LE(*r.levels[i + 1].sequential, *row.modified + 1e-6);
        if (i >= 1) EXPECT_LE(*row.modified, *r.levels[i - 1].sequential + 2e-6);
    }
    EXPECT_FALSE(r.reference_from_user);
    EXPECT_EQ(*r.levels.back().eps, 0.0);
    for (const auto& row : r.levels) EXPECT_GE(*row.eps, -1e-6);
}

TEST(Report, SingleQuestionFunctional) {
    // all weight on (x,y) = (0,0): a deterministic strategy scores 1
    BellFunctional f(Scenario(2, 2, 2, 2), "one-question");
    f.set_coeff(0, 0, 0, 0, 1.0);
    f.set_coeff(1, 1, 0, 0, 1.0);
    auto r = build_report(f, 2, 1.0);
    EXPECT_LE(std::abs(*r.levels[0].eps), 1e-6);
    EXPECT_NEAR(*r.levels[1].sequential, 1.0, 1e-6);
}

TEST(Report, LevelZeroRejected) {
    try {
        build_report(chsh(), 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::LevelTooSmall);
    }
}

TEST(Report, RenderingIsDeterministic) {
    auto a = build_report(chsh(), 2, kCos2);
    auto b = build_report(chsh(), 2, kCos2);
    EXPECT_EQ(to_structured(a), to_structured(b));
    EXPECT_EQ(render_table(a), render_table(b));
    std::string s = to_structured(a);
    EXPECT_EQ(s.rfind("bound-report\ngame CHSH\nlevels 2\nlevel 1 sequential 0.85355339", 0), 0u);
    EXPECT_NE(render_table(a).find("(supplied)"), std::string::npos);
    EXPECT_NE(render_table(build_report(chsh(), 1)).find("not true eps"), std::string::npos);
}
