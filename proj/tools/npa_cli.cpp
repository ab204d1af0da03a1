#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "npa/decompose.hpp"
#include "npa/extract.hpp"
#include "npa/relax.hpp"
#include "npa/report.hpp"
#include "npa/scenario.hpp"
#include "npa/sdp.hpp"
#include "npa/soscert.hpp"

using namespace npa;

namespace {

enum Exit { kOk = 0, kSolver = 1, kValidation = 2, kNotFlat = 3 };

struct Config {
    std::string game_path;
    int level = 1;
    std::string hierarchy = "sequential";
    SolverOptions solver;
    double rank_tol = 1e-7;
    double flat_tol = 1e-10;
    std::string out;
    std::string format = "text";
    std::optional<double> reference;
    std::string model_path;
    std::optional<double> eta;
};

std::string num(double v, const char* f = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v == 0.0 ? 0.0 : v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Parse, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Artifact goes to --out when given, otherwise to stdout.
void emit(const Config& c, const std::string& text) {
    if (c.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(c.out, std::ios::binary);
    if (!f) fail(ErrorKind::InvalidArgument, "cannot write " + c.out);
    f << text;
}

// Summary lines go to stdout, or to stderr when stdout carries the artifact.
std::ostream& summary(const Config& c) { return c.out.empty() ? std::cerr : std::cout; }

SolverOptions tight(const Config& c) {
    SolverOptions o = c.solver;
    o.gap_tol = std::min(o.gap_tol, c.flat_tol);
    o.feas_tol = std::min(o.feas_tol, c.flat_tol);
    return o;
}

int run_solve(const Config& c) {
    BellFunctional f = load_game(c.game_path);
    Hierarchy h = parse_hierarchy(c.hierarchy);
    MomentProblem p = build(f, h, c.level);
    MomentSolution s = solve(p, c.solver);
    CertifiedReport cr = certify(p, s);
    double min_eig = cr.min_eig_per_block.empty() ? 0.0 : cr.min_eig_per_block.front();
    for (double e : cr.min_eig_per_block) min_eig = std::min(min_eig, e);
    std::ostringstream o;
    if (c.format == "structured") {
        o << "solve\ngame " << (f.name().empty() ? "-" : f.name()) << "\nhierarchy " << to_string(h) << "\nlevel " << c.level
          << "\nstatus " << to_string(s.status) << "\nprimal " << num(s.primal_value) << "\ndual " << num(s.dual_value)
          << "\nmin_eig " << num(min_eig) << "\nconstraint_residual " << num(cr.max_constraint_residual) << "\nduality_gap "
          << num(cr.duality_gap) << "\niterations " << s.residuals.iterations << "\n";
    } else {
        o << num(s.primal_value, "%.7f") << "\n";
        o << "status " << to_string(s.status) << ", dual bound " << num(s.dual_value, "%.10f") << ", gap "
          << num(cr.duality_gap, "%.2e") << ", min eigenvalue " << num(min_eig, "%.2e") << ", constraint residual "
          << num(cr.max_constraint_residual, "%.2e") << ", " << s.residuals.iterations << " iterations\n";
    }
    emit(c, o.str());
    return kOk;
}

int run_export(const Config& c) {
    BellFunctional f = load_game(c.game_path);
    MomentProblem p = build(f, parse_hierarchy(c.hierarchy), c.level);
    double offset = 0.0;
    std::string text = export_sdpa(p, &offset);
    emit(c, text);
    summary(c) << "objective offset " << num(offset) << "\n";
    return kOk;
}

GnsModel extract_model(const Config& c, const BellFunctional& f) {
    MomentProblem p = build_sequential(f, c.level);
    MomentSolution s = solve(p, tight(c));
    return gns_build(p, s, c.rank_tol);
}

int run_extract(const Config& c) {
    BellFunctional f = load_game(c.game_path);
    GnsModel m = extract_model(c, f);
    ModelReport rep = verify_model(m, f);
    emit(c, to_text(m));
    summary(c) << "dim " << m.dim << "\nscore " << num(rep.score, "%.10f") << "\n";
    return kOk;
}

int run_certify(const Config& c) {
    BellFunctional f = load_game(c.game_path);
    MomentProblem p = build_sequential(f, c.level);
    MomentSolution s = solve(p, c.solver);
    SosCertificate cert = dual_to_certificate(p, s);
    CertificateCheck chk = verify_certificate(cert, f, c.level);
    emit(c, to_text(cert));
    summary(c) << "bound " << num(cert.m, "%.10f") << "\nprimal " << num(s.primal_value, "%.10f") << "\ncoefficient_residual "
               << num(chk.coefficient_residual, "%.3e") << "\nworst_monomial " << to_string(chk.worst_word)
               << "\nmin_gram_eig " << num(chk.min_gram_eig, "%.3e") << "\nmonomials " << chk.monomials << "\n";
    return kOk;
}

int run_decompose(const Config& c) {
    GnsModel m;
    if (!c.model_path.empty()) {
        m = gns_from_text(read_file(c.model_path));
    } else {
        if (c.game_path.empty()) fail(ErrorKind::InvalidArgument, "decompose needs --game or --model");
        m = extract_model(c, load_game(c.game_path));
    }
    OperatorFamily fam = family_from_model(m, c.level);
    double eta = c.eta ? *c.eta : marginal_deviation(fam, c.level);
    DecompositionResult r = decompose(fam, eta, low_degree_dimension(m.scenario, c.level));
    emit(c, to_text(r, m.scenario));
    summary(c) << "eta " << num(r.eta_used, "%.3e") << "\ndim_vn " << r.dim_vn << "\nmin_eig_low "
               << num(r.checks.min_eig_low, "%.3e") << "\nsignaling " << num(r.checks.signaling, "%.3e") << "\n";
    return kOk;
}

int run_report(const Config& c) {
    BellFunctional f = load_game(c.game_path);
    ReportOptions ro;
    ro.solver = c.solver;
    ro.flat_gap_tol = c.flat_tol;
    ro.rank_tol = c.rank_tol;
    BoundReport r = build_report(f, c.level, c.reference, ro);
    emit(c, c.format == "structured" ? to_structured(r) : render_table(r));
    return kOk;
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Infeasible:
        case ErrorKind::NumericalTrouble:
        case ErrorKind::NotOptimal:
        case ErrorKind::IllConditioned: return kSolver;
        case ErrorKind::NotFlat: return kNotFlat;
        default: return kValidation;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NPA-type hierarchies for Bell functionals"};
    app.require_subcommand(1);
    Config c;

    auto common = [&](CLI::App* sub, bool needs_game) {
        auto* g = sub->add_option("--game", c.game_path, "game JSON file")->check(CLI::ExistingFile);
        if (needs_game) g->required();
        sub->add_option("--level", c.level, "relaxation level (maximum level for report)");
        sub->add_option("--gap-tol", c.solver.gap_tol);
        sub->add_option("--feas-tol", c.solver.feas_tol);
        sub->add_option("--max-iters", c.solver.max_iters);
        sub->add_option("--out", c.out, "output file (default stdout)");
        sub->add_option("--format", c.format)->check(CLI::IsMember({"text", "structured"}));
    };
    auto rank = [&](CLI::App* sub) {
        sub->add_option("--rank-tol", c.rank_tol, "relative eigenvalue cutoff for rank decisions");
        sub->add_option("--flat-tol", c.flat_tol, "solver tolerance used before rank decisions");
    };

    auto* solve_cmd = app.add_subcommand("solve", "solve one relaxation");
    common(solve_cmd, true);
    solve_cmd->add_option("--hierarchy", c.hierarchy)->check(CLI::IsMember({"standard", "sequential", "modified"}));

    auto* export_cmd = app.add_subcommand("export", "write the relaxation as an SDPA sparse file");
    common(export_cmd, true);
    export_cmd->add_option("--hierarchy", c.hierarchy)->check(CLI::IsMember({"standard", "sequential", "modified"}));

    auto* extract_cmd = app.add_subcommand("extract", "finite-dimensional model from a flat sequential solution");
    common(extract_cmd, true);
    rank(extract_cmd);

    auto* certify_cmd = app.add_subcommand("certify", "sum-of-squares certificate from the sequential dual");
    common(certify_cmd, true);

    auto* decompose_cmd = app.add_subcommand("decompose", "no-signaling / signaling split of an extracted model");
    common(decompose_cmd, false);
    rank(decompose_cmd);
    decompose_cmd->add_option("--model", c.model_path, "model file written by extract")->check(CLI::ExistingFile);
    decompose_cmd->add_option("--eta", c.eta, "marginal deviation (default: measured)");

    auto* report_cmd = app.add_subcommand("report", "compare hierarchies up to --level");
    common(report_cmd, true);
    rank(report_cmd);
    report_cmd->add_option("--reference", c.reference, "reference value for eps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (c.level < 1) fail(ErrorKind::LevelTooSmall, "--level must be >= 1");
        if (*solve_cmd) return run_solve(c);
        if (*export_cmd) return run_export(c);
        if (*extract_cmd) return run_extract(c);
        if (*certify_cmd) return run_certify(c);
        if (*decompose_cmd) return run_decompose(c);
        if (*report_cmd) return run_report(c);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kValidation;
}
