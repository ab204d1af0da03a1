#pragma once

// Noncommutative words in projective measurement letters A(a|x), B(b|y).

#include <algorithm>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "npa/error.hpp"
#include "npa/scenario.hpp"

namespace npa {

enum class Party : int { Alice = 0, Bob = 1 };

struct Letter {
    Party party = Party::Alice;
    int input = 0;
    int outcome = 0;

    friend auto operator<=>(const Letter&, const Letter&) = default;
};

inline Letter A(int a, int x) { return {Party::Alice, x, a}; }
inline Letter B(int b, int y) { return {Party::Bob, y, b}; }

class Word {
public:
    Word() = default;

    static Word identity() { return Word(); }
    static Word zero() {
        Word w;
        w.zero_ = true;
        return w;
    }
    /// Stores letters as given. Use canonicalize() for reduction.
    static Word raw(std::vector<Letter> letters) {
        Word w;
        w.letters_ = std::move(letters);
        return w;
    }

    const std::vector<Letter>& letters() const { return letters_; }
    bool is_zero() const { return zero_; }
    bool is_identity() const { return !zero_ && letters_.empty(); }
    int length() const { return zero_ ? 0 : int(letters_.size()); }

    /// Length first, then lexicographic on letters. Zero sorts before everything.
    friend std::strong_ordering operator<=>(const Word& u, const Word& v) {
        if (u.zero_ != v.zero_) return u.zero_ ? std::strong_ordering::less : std::strong_ordering::greater;
        if (u.letters_.size() != v.letters_.size()) return u.letters_.size() <=> v.letters_.size();
        return std::lexicographical_compare_three_way(u.letters_.begin(), u.letters_.end(), v.letters_.begin(),
                                                      v.letters_.end());
    }
    friend bool operator==(const Word& u, const Word& v) { return (u <=> v) == 0; }

private:
    std::vector<Letter> letters_;
    bool zero_ = false;
};

inline void check_letter(const Scenario& s, const Letter& l) {
    int ni = l.party == Party::Alice ? s.alice_inputs() : s.bob_inputs();
    int no = l.party == Party::Alice ? s.alice_outputs() : s.bob_outputs();
    if (l.input < 0 || l.input >= ni || l.outcome < 0 || l.outcome >= no)
        fail(ErrorKind::IndexOutOfBounds, "letter outside scenario alphabet");
}

/// Reduces with P·P = P and orthogonality of outcomes of one measurement. With
/// commute_parties, Alice letters are moved in front of Bob letters first.
inline Word canonicalize(const std::vector<Letter>& raw, bool commute_parties) {
    std::vector<Letter> in = raw;
    if (commute_parties)
        std::stable_partition(in.begin(), in.end(), [](const Letter& l) { return l.party == Party::Alice; });
    std::vector<Letter> out;
    out.reserve(in.size());
    for (const Letter& l : in) {
        if (!out.empty()) {
            const Letter& top = out.back();
            if (top == l) continue;
            if (top.party == l.party && top.input == l.input) return Word::zero();
        }
        out.push_back(l);
    }
    return Word::raw(std::move(out));
}

inline Word canonicalize(const Scenario& s, const std::vector<Letter>& raw, bool commute_parties) {
    for (const auto& l : raw) check_letter(s, l);
    return canonicalize(raw, commute_parties);
}

inline Word canonicalize(const Word& w, bool commute_parties) {
    if (w.is_zero()) return w;
    return canonicalize(w.letters(), commute_parties);
}

inline Word multiply(const Word& u, const Word& v, bool commute_parties) {
    if (u.is_zero() || v.is_zero()) return Word::zero();
    std::vector<Letter> cat = u.letters();
    cat.insert(cat.end(), v.letters().begin(), v.letters().end());
    return canonicalize(cat, commute_parties);
}

inline Word adjoint(const Word& w, bool commute_parties) {
    if (w.is_zero()) return w;
    std::vector<Letter> r(w.letters().rbegin(), w.letters().rend());
    return canonicalize(r, commute_parties);
}

/// Representative of {w, w*}: moments of real symmetric solutions agree on both.
inline Word symmetric_key(const Word& w, bool commute_parties) {
    Word a = adjoint(w, commute_parties);
    return a < w ? a : w;
}

inline std::string to_string(const Letter& l) {
    return std::string(l.party == Party::Alice ? "A(" : "B(") + std::to_string(l.outcome) + "|" +
           std::to_string(l.input) + ")";
}

inline std::string to_string(const Word& w) {
    if (w.is_zero()) return "0";
    if (w.letters().empty()) return "1";
    std::string s;
    for (std::size_t i = 0; i < w.letters().size(); ++i) {
        if (i) s += "·";
        s += to_string(w.letters()[i]);
    }
    return s;
}

/// Inverse of to_string. Also accepts '*' as the separator.
inline Word parse_word(const std::string& text) {
    std::string t;
    for (char c : text)
        if (c != ' ') t += c;
    if (t == "1") return Word::identity();
    if (t == "0") return Word::zero();
    std::vector<Letter> letters;
    std::size_t i = 0;
    auto bad = [&]() { fail(ErrorKind::Parse, "malformed word '" + text + "'"); };
    while (i < t.size()) {
        if (t[i] != 'A' && t[i] != 'B') bad();
        Letter l;
        l.party = t[i] == 'A' ? Party::Alice : Party::Bob;
        std::size_t close = t.find(')', i);
        std::size_t bar = t.find('|', i);
        if (i + 1 >= t.size() || t[i + 1] != '(' || close == std::string::npos || bar == std::string::npos || bar > close)
            bad();
        try {
            l.outcome = std::stoi(t.substr(i + 2, bar - i - 2));
            l.input = std::stoi(t.substr(bar + 1, close - bar - 1));
        } catch (const std::exception&) {
            bad();
        }
        letters.push_back(l);
        i = close + 1;
        if (i < t.size()) {
            if (t.compare(i, 2, "·") == 0)
                i += 2;
            else if (t[i] == '*')
                i += 1;
            else
                bad();
        }
    }
    return Word::raw(std::move(letters));
}

enum class PartySet { Alice, Bob, Both };

inline std::vector<Letter> letters_of(const Scenario& s, PartySet parties) {
    std::vector<Letter> out;
    if (parties != PartySet::Bob)
        for (int x = 0; x < s.alice_inputs(); ++x)
            for (int a = 0; a < s.alice_outputs(); ++a) out.push_back(A(a, x));
    if (parties != PartySet::Alice)
        for (int y = 0; y < s.bob_inputs(); ++y)
            for (int b = 0; b < s.bob_outputs(); ++b) out.push_back(B(b, y));
    std::sort(out.begin(), out.end());
    return out;
}

class WordBasis {
public:
    WordBasis() = default;
    WordBasis(std::vector<Word> words, int degree) : words_(std::move(words)), degree_(degree) {
        for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
    }

    const std::vector<Word>& words() const { return words_; }
    const Word& operator[](std::size_t i) const { return words_[i]; }
    std::size_t size() const { return words_.size(); }
    int degree() const { return degree_; }

    std::optional<std::size_t> find(const Word& w) const {
        auto it = index_.find(w);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// Number of words of length <= k (a prefix, since words are sorted by length).
    std::size_t count_up_to(int k) const {
        std::size_t n = 0;
        while (n < words_.size() && words_[n].length() <= k) ++n;
        return n;
    }

private:
    std::vector<Word> words_;
    std::map<Word, std::size_t> index_;
    int degree_ = 0;
};

inline WordBasis enumerate_basis(const Scenario& s, PartySet parties, int degree, bool commute_parties) {
    if (degree < 0) fail(ErrorKind::InvalidArgument, "basis degree must be >= 0");
    auto alphabet = letters_of(s, parties);
    std::vector<Word> all{Word::identity()};
    std::vector<Word> frontier{Word::identity()};
    for (int k = 1; k <= degree; ++k) {
        std::set<Word> next;
        for (const Word& w : frontier)
            for (const Letter& l : alphabet) {
                Word p = multiply(w, Word::raw({l}), commute_parties);
                if (!p.is_zero() && p.length() == k) next.insert(p);
            }
        frontier.assign(next.begin(), next.end());
        all.insert(all.end(), frontier.begin(), frontier.end());
    }
    return WordBasis(std::move(all), degree);
}

}  // namespace npa
