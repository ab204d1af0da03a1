#include <gtest/gtest.h>

#include <set>

#include "npa/ncalgebra.hpp"

using namespace npa;

namespace {

const Scenario kChsh(2, 2, 2, 2);

// Canonical one-party words of length k: first letter free, each next letter
// must come from a different input.
long count_one_party(int inputs, int outputs, int k) {
    if (k == 0) return 1;
    long c = long(inputs) * outputs;
    for (int i = 1; i < k; ++i) c *= long(inputs - 1) * outputs;
    return c;
}

// Brute force over raw letter sequences, reduced with the rules applied to a fixed point.
std::set<std::vector<Letter>> brute_force_words(const std::vector<Letter>& alphabet, int n, bool commute) {
    std::set<std::vector<Letter>> out;
    std::vector<std::vector<Letter>> layer{{}};
    for (int len = 0; len <= n; ++len) {
        std::vector<std::vector<Letter>> next;
        for (auto w : layer) {
            auto v = w;
            if (commute)
                std::stable_sort(v.begin(), v.end(), [](const Letter& a, const Letter& b) { return a.party < b.party; });
            bool zero = false, changed = true;
            while (changed && !zero) {
                changed = false;
                for (std::size_t i = 0; i + 1 < v.size(); ++i) {
                    if (v[i] == v[i + 1]) {
                        v.erase(v.begin() + i + 1);
                        changed = true;
                        break;
                    }
                    if (v[i].party == v[i + 1].party && v[i].input == v[i + 1].input) zero = true;
                }
            }
            if (!zero) out.insert(v);
            if (len < n)
                for (const auto& l : alphabet) {
                    auto e = w;
                    e.push_back(l);
                    next.push_back(e);
                }
        }
        layer = std::move(next);
    }
    return out;
}

}  // namespace

TEST(Words, Idempotent) {
    EXPECT_EQ(canonicalize({B(0, 0), B(0, 0)}, false), Word::raw({B(0, 0)}));
}

TEST(Words, OrthogonalOutcomesAnnihilate) { EXPECT_TRUE(canonicalize({B(0, 0), B(1, 0)}, false).is_zero()); }

TEST(Words, CommutePartiesMovesAliceFirst) {
    EXPECT_EQ(canonicalize({B(0, 1), A(0, 0)}, true), Word::raw({A(0, 0), B(0, 1)}));
    EXPECT_EQ(canonicalize({B(0, 1), A(0, 0)}, false), Word::raw({B(0, 1), A(0, 0)}));
    // commuting exposes a projector square
    EXPECT_EQ(canonicalize({A(1, 0), B(0, 0), A(1, 0)}, true), Word::raw({A(1, 0), B(0, 0)}));
}

TEST(Words, OutOfScenarioLetter) {
    try {
        canonicalize(kChsh, {B(2, 0)}, false);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IndexOutOfBounds);
    }
}

TEST(Words, MultiplyExamples) {
    Word b00 = Word::raw({B(0, 0)});
    EXPECT_EQ(multiply(Word::identity(), b00, false), b00);
    EXPECT_EQ(multiply(b00, b00, false), b00);
    EXPECT_TRUE(multiply(b00, Word::raw({B(1, 0)}), false).is_zero());
    EXPECT_TRUE(multiply(Word::zero(), b00, false).is_zero());
}

TEST(Words, AdjointExamples) {
    EXPECT_EQ(adjoint(Word::raw({B(0, 0), B(0, 1)}), false), Word::raw({B(0, 1), B(0, 0)}));
    EXPECT_EQ(adjoint(Word::identity(), false), Word::identity());
    EXPECT_EQ(adjoint(Word::raw({A(0, 0), B(0, 1)}), true), Word::raw({A(0, 0), B(0, 1)}));
}

TEST(Words, RenderAndParse) {
    Word w = Word::raw({A(1, 0), B(0, 1), B(1, 0)});
    EXPECT_EQ(to_string(w), "A(1|0)·B(0|1)·B(1|0)");
    EXPECT_EQ(parse_word(to_string(w)), w);
    EXPECT_EQ(to_string(Word::identity()), "1");
    EXPECT_EQ(to_string(Word::zero()), "0");
    EXPECT_EQ(parse_word("1"), Word::identity());
    EXPECT_TRUE(parse_word("0").is_zero());
    EXPECT_EQ(parse_word("B(0|1)*A(1|0)"), Word::raw({B(0, 1), A(1, 0)}));
}

TEST(Basis, ChshBobLevelOne) {
    auto basis = enumerate_basis(kChsh, PartySet::Bob, 1, false);
    ASSERT_EQ(basis.size(), 5u);
    EXPECT_TRUE(basis[0].is_identity());
    EXPECT_EQ(basis[1], Word::raw({B(0, 0)}));
    EXPECT_EQ(basis[2], Word::raw({B(1, 0)}));
    EXPECT_EQ(basis[3], Word::raw({B(0, 1)}));
    EXPECT_EQ(basis[4], Word::raw({B(1, 1)}));
}

TEST(Basis, DegreeZeroIsIdentity) {
    for (auto parties : {PartySet::Alice, PartySet::Bob, PartySet::Both}) {
        auto basis = enumerate_basis(Scenario(3, 2, 4, 3), parties, 0, true);
        ASSERT_EQ(basis.size(), 1u);
        EXPECT_TRUE(basis[0].is_identity());
    }
}

TEST(Basis, ChshBothPartiesCommuting) { EXPECT_EQ(enumerate_basis(kChsh, PartySet::Both, 1, true).size(), 9u); }

TEST(Basis, CountsMatchBruteForce) {
    for (Scenario s : {kChsh, Scenario(3, 3, 2, 2), Scenario(2, 3, 3, 2)})
        for (bool commute : {false, true})
            for (int n = 0; n <= 3; ++n) {
                auto basis = enumerate_basis(s, PartySet::Both, n, commute);
                auto oracle = brute_force_words(letters_of(s, PartySet::Both), n, commute);
                EXPECT_EQ(basis.size(), oracle.size()) << "n=" << n << " commute=" << commute;
                for (const auto& w : oracle) EXPECT_TRUE(basis.find(Word::raw(w)).has_value());
            }
}

TEST(Basis, ClosedFormCounts) {
    Scenario s(3, 3, 2, 2);
    for (int n = 0; n <= 4; ++n) {
        long bob = 0;
        for (int k = 0; k <= n; ++k) bob += count_one_party(3, 2, k);
        EXPECT_EQ(long(enumerate_basis(s, PartySet::Bob, n, false).size()), bob);
        long both = 0;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n; ++j) both += count_one_party(3, 2, i) * count_one_party(3, 2, j);
        EXPECT_EQ(long(enumerate_basis(s, PartySet::Both, n, true).size()), both);
    }
}

TEST(Basis, SortedPrefixClosedNoDuplicates) {
    WordBasis prev = enumerate_basis(kChsh, PartySet::Both, 0, false);
    for (int n = 1; n <= 4; ++n) {
        auto basis = enumerate_basis(kChsh, PartySet::Both, n, false);
        EXPECT_GE(basis.size(), prev.size());
        for (std::size_t i = 0; i < prev.size(); ++i) EXPECT_EQ(basis[i], prev[i]);
        for (std::size_t i = 1; i < basis.size(); ++i) EXPECT_LT(basis[i - 1], basis[i]);
        for (const auto& w : basis.words()) {
            EXPECT_FALSE(w.is_zero());
            EXPECT_EQ(canonicalize(w, false), w);
        }
        prev = basis;
    }
}

TEST(Properties, CanonicalizeIdempotent) {
    auto oracle = brute_force_words(letters_of(kChsh, PartySet::Both), 3, false);
    auto alphabet = letters_of(kChsh, PartySet::Both);
    for (const auto& a : alphabet)
        for (const auto& b : alphabet)
            for (const auto& c : alphabet)
                for (bool commute : {false, true}) {
                    Word w = canonicalize({a, b, c}, commute);
                    EXPECT_EQ(canonicalize(w, commute), w);
                }
}

TEST(Properties, MultiplyAssociativeAndAdjointAntiHomomorphism) {
    for (bool commute : {false, true}) {
        auto words = enumerate_basis(kChsh, PartySet::Both, 2, commute).words();
        words.push_back(Word::zero());
        for (const auto& u : words)
            for (const auto& v : words) {
                EXPECT_EQ(adjoint(multiply(u, v, commute), commute),
                          multiply(adjoint(v, commute), adjoint(u, commute), commute));
                for (const auto& w : words)
                    EXPECT_EQ(multiply(multiply(u, v, commute), w, commute), multiply(u, multiply(v, w, commute), commute));
            }
        for (const auto& u : words) EXPECT_EQ(adjoint(adjoint(u, commute), commute), u);
    }
}
