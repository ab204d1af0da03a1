#pragma once

// Bell scenarios, Bell functionals and correlations, plus the JSON game card
// format used to ship games as data files.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "npa/error.hpp"

namespace npa {

class Scenario {
public:
    Scenario(int n_x, int n_y, int n_a, int n_b) : nx_(n_x), ny_(n_y), na_(n_a), nb_(n_b) {
        if (n_x < 1 || n_y < 1 || n_a < 1 || n_b < 1)
            fail(ErrorKind::Schema, "scenario alphabets must be nonempty");
    }

    int alice_inputs() const { return nx_; }
    int bob_inputs() const { return ny_; }
    int alice_outputs() const { return na_; }
    int bob_outputs() const { return nb_; }

    /// Number of (a,b,x,y) cells.
    std::size_t cells() const { return std::size_t(nx_) * ny_ * na_ * nb_; }

    std::size_t index(int a, int b, int x, int y) const {
        if (a < 0 || a >= na_ || b < 0 || b >= nb_ || x < 0 || x >= nx_ || y < 0 || y >= ny_)
            fail(ErrorKind::IndexOutOfBounds, "cell (" + std::to_string(a) + "," + std::to_string(b) + "," +
                                                  std::to_string(x) + "," + std::to_string(y) + ") out of range");
        return ((std::size_t(x) * ny_ + y) * na_ + a) * nb_ + b;
    }

    friend bool operator==(const Scenario&, const Scenario&) = default;

private:
    int nx_, ny_, na_, nb_;
};

/// Joint outcome distribution p(ab|xy). Validity is queryable, not enforced.
class Correlation {
public:
    explicit Correlation(Scenario s) : scenario_(s), p_(s.cells(), 0.0) {}

    const Scenario& scenario() const { return scenario_; }
    double operator()(int a, int b, int x, int y) const { return p_[scenario_.index(a, b, x, y)]; }
    double& operator()(int a, int b, int x, int y) { return p_[scenario_.index(a, b, x, y)]; }
    const std::vector<double>& values() const { return p_; }

    bool is_valid(double tol = 1e-9) const {
        const auto& s = scenario_;
        for (int x = 0; x < s.alice_inputs(); ++x)
            for (int y = 0; y < s.bob_inputs(); ++y) {
                double total = 0.0;
                for (int a = 0; a < s.alice_outputs(); ++a)
                    for (int b = 0; b < s.bob_outputs(); ++b) {
                        double v = (*this)(a, b, x, y);
                        if (v < -tol) return false;
                        total += v;
                    }
                if (std::abs(total - 1.0) > tol) return false;
            }
        return true;
    }

    static Correlation uniform(Scenario s) {
        Correlation c(s);
        for (auto& v : c.p_) v = 1.0 / (double(s.alice_outputs()) * s.bob_outputs());
        return c;
    }

    /// Deterministic local strategy: Alice answers alice[x], Bob answers bob[y].
    static Correlation deterministic(Scenario s, const std::vector<int>& alice, const std::vector<int>& bob) {
        Correlation c(s);
        for (int x = 0; x < s.alice_inputs(); ++x)
            for (int y = 0; y < s.bob_inputs(); ++y) c(alice.at(x), bob.at(y), x, y) = 1.0;
        return c;
    }

private:
    Scenario scenario_;
    std::vector<double> p_;
};

/// score(p) = constant + sum coeffs[a,b,x,y] p(ab|xy).
class BellFunctional {
public:
    explicit BellFunctional(Scenario s, std::string name = "", double constant = 0.0)
        : scenario_(s), name_(std::move(name)), constant_(constant), coeffs_(s.cells(), 0.0) {}

    const Scenario& scenario() const { return scenario_; }
    const std::string& name() const { return name_; }
    /// Free-text normalization convention, e.g. "winning-probability" or "bell-expression".
    const std::string& convention() const { return convention_; }
    void set_convention(std::string c) { convention_ = std::move(c); }
    double constant() const { return constant_; }
    void set_constant(double c) { constant_ = c; }

    double coeff(int a, int b, int x, int y) const { return coeffs_[scenario_.index(a, b, x, y)]; }
    void set_coeff(int a, int b, int x, int y, double c) { coeffs_[scenario_.index(a, b, x, y)] = c; }
    const std::vector<double>& coeffs() const { return coeffs_; }

    double score(const Correlation& p) const {
        if (!(p.scenario() == scenario_)) fail(ErrorKind::ScenarioMismatch, "correlation scenario differs from functional");
        double total = constant_;
        for (std::size_t i = 0; i < coeffs_.size(); ++i) total += coeffs_[i] * p.values()[i];
        return total;
    }

    friend bool operator==(const BellFunctional&, const BellFunctional&) = default;

private:
    Scenario scenario_;
    std::string name_;
    std::string convention_ = "bell-expression";
    double constant_;
    std::vector<double> coeffs_;
};

inline double score(const BellFunctional& f, const Correlation& p) { return f.score(p); }

namespace detail {

inline int require_int(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) fail(ErrorKind::Schema, std::string("missing field '") + key + "'");
    if (!j.at(key).is_number_integer()) fail(ErrorKind::Schema, std::string("field '") + key + "' must be an integer");
    return j.at(key).get<int>();
}

inline double require_number(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) fail(ErrorKind::Schema, std::string("missing field '") + key + "'");
    if (!j.at(key).is_number()) fail(ErrorKind::Schema, std::string("field '") + key + "' must be a number");
    return j.at(key).get<double>();
}

inline void check_range(int v, int n, const char* what) {
    if (v < 0 || v >= n)
        fail(ErrorKind::Schema, std::string(what) + " index " + std::to_string(v) + " outside [0," + std::to_string(n) + ")");
}

}  // namespace detail

/// Builds a functional from the game card JSON. Two forms are accepted: explicit
/// "coeffs", or a "questions" distribution with a "wins" predicate list, which is
/// normalized into coeffs[a,b,x,y] = pi(x,y) * V(a,b,x,y).
inline BellFunctional game_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorKind::Schema, "game card must be a JSON object");
    int nx = detail::require_int(j, "nX"), ny = detail::require_int(j, "nY");
    int na = detail::require_int(j, "nA"), nb = detail::require_int(j, "nB");
    if (nx < 1 || ny < 1 || na < 1 || nb < 1) fail(ErrorKind::Schema, "alphabet sizes must be >= 1");
    Scenario s(nx, ny, na, nb);
    std::string name = j.value("name", std::string{});
    double constant = j.contains("constant") ? detail::require_number(j, "constant") : 0.0;
    BellFunctional f(s, name, constant);
    if (j.contains("convention")) f.set_convention(j.at("convention").get<std::string>());

    auto read_cell = [&](const nlohmann::json& e, int& a, int& b, int& x, int& y) {
        a = detail::require_int(e, "a");
        b = detail::require_int(e, "b");
        x = detail::require_int(e, "x");
        y = detail::require_int(e, "y");
        detail::check_range(a, na, "a");
        detail::check_range(b, nb, "b");
        detail::check_range(x, nx, "x");
        detail::check_range(y, ny, "y");
    };

    if (j.contains("coeffs")) {
        if (!j.at("coeffs").is_array()) fail(ErrorKind::Schema, "'coeffs' must be an array");
        for (const auto& e : j.at("coeffs")) {
            int a, b, x, y;
            read_cell(e, a, b, x, y);
            double c = detail::require_number(e, "c");
            f.set_coeff(a, b, x, y, f.coeff(a, b, x, y) + c);
        }
    } else if (j.contains("questions") && j.contains("wins")) {
        std::vector<double> pi(std::size_t(nx) * ny, 0.0);
        for (const auto& q : j.at("questions")) {
            int x = detail::require_int(q, "x"), y = detail::require_int(q, "y");
            detail::check_range(x, nx, "x");
            detail::check_range(y, ny, "y");
            pi[std::size_t(x) * ny + y] += detail::require_number(q, "p");
        }
        for (const auto& e : j.at("wins")) {
            int a, b, x, y;
            read_cell(e, a, b, x, y);
            f.set_coeff(a, b, x, y, pi[std::size_t(x) * ny + y]);
        }
        if (!j.contains("convention")) f.set_convention("winning-probability");
    } else {
        fail(ErrorKind::Schema, "game card needs 'coeffs' or 'questions'+'wins'");
    }
    return f;
}

inline BellFunctional parse_game(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, e.what());
    }
    return game_from_json(j);
}

inline BellFunctional load_game(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Parse, "cannot open game file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_game(ss.str());
}

/// Coefficient form; zero cells are omitted.
inline nlohmann::json game_to_json(const BellFunctional& f) {
    const auto& s = f.scenario();
    nlohmann::json j;
    j["name"] = f.name();
    j["convention"] = f.convention();
    j["nX"] = s.alice_inputs();
    j["nY"] = s.bob_inputs();
    j["nA"] = s.alice_outputs();
    j["nB"] = s.bob_outputs();
    j["constant"] = f.constant();
    nlohmann::json cells = nlohmann::json::array();
    for (int x = 0; x < s.alice_inputs(); ++x)
        for (int y = 0; y < s.bob_inputs(); ++y)
            for (int a = 0; a < s.alice_outputs(); ++a)
                for (int b = 0; b < s.bob_outputs(); ++b) {
                    double c = f.coeff(a, b, x, y);
                    if (c != 0.0) cells.push_back({{"a", a}, {"b", b}, {"x", x}, {"y", y}, {"c", c}});
                }
    j["coeffs"] = cells;
    return j;
}

inline void save_game(const BellFunctional& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Parse, "cannot write game file '" + path + "'");
    out << game_to_json(f).dump(2) << "\n";
}

}  // namespace npa
