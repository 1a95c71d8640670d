#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cace/compliance.hpp"
#include "cace/csv.hpp"
#include "cace/errors.hpp"
#include "cace/gradcheck.hpp"
#include "cace/mc_study.hpp"
#include "cace/report.hpp"
#include "cace/simulator.hpp"

// Command-line front end. Every command writes to caller-supplied streams so
// the same code path is exercised by the executable and by the tests.
namespace cace::cli {

enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kValidation = 2,
    kIdentification = 3,
    kConvergence = 4,
    kIo = 5,
};

// "name", "name:raw", "name:quartiles", "name:quartiles=2", "name:binary".
inline DesignTerm parse_covariate_flag(const std::string& flag) {
    const auto colon = flag.find(':');
    const std::string name = flag.substr(0, colon);
    if (name.empty()) throw ValidationError("empty covariate name in '" + flag + "'");
    if (colon == std::string::npos) return DesignTerm::raw(name);
    const std::string mod = flag.substr(colon + 1);
    if (mod == "raw") return DesignTerm::raw(name);
    if (mod == "binary") return DesignTerm::binary(name);
    if (mod == "quartiles") return DesignTerm::quartiles(name);
    if (mod.rfind("quartiles=", 0) == 0) {
        const auto ref = mod.substr(10);
        if (ref.size() != 1 || ref[0] < '1' || ref[0] > '4')
            throw ValidationError("reference quartile in '" + flag + "' must be 1..4");
        return DesignTerm::quartiles(name, ref[0] - '0');
    }
    throw ValidationError("unknown covariate modifier '" + mod + "' (expected raw, quartiles or binary)");
}

inline DesignSpec design_from_flags(const std::vector<std::string>& covariates, bool no_covariates) {
    DesignSpec spec = DesignSpec::intercept_only();
    if (no_covariates) return spec;
    for (const auto& c : covariates) spec.terms.push_back(parse_covariate_flag(c));
    return spec;
}

inline std::vector<std::string> covariate_columns(const DesignSpec& spec) {
    std::vector<std::string> out;
    for (const auto& t : spec.terms)
        if (t.kind != DesignTerm::Kind::Intercept && std::find(out.begin(), out.end(), t.name) == out.end())
            out.push_back(t.name);
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateArgs {
    std::string data;
    ColumnMapping mapping;
    std::vector<std::string> covariates;
    bool no_covariates = false;
    std::string out;
    NewtonSettings settings;
};

// Parses the input, fits, and returns the report plus its JSON text.
inline std::pair<EstimationReport, std::string> estimate_report(const EstimateArgs& a,
                                                                std::vector<std::string>* warnings = nullptr) {
    const DesignSpec spec = design_from_flags(a.covariates, a.no_covariates);
    ColumnMapping mapping = a.mapping;
    mapping.covariates = a.no_covariates ? std::vector<std::string>{} : covariate_columns(spec);
    const std::string bytes = read_file(a.data);
    std::istringstream in(bytes);
    std::vector<std::string> parse_warnings;
    const Dataset data = parse_csv(in, mapping, &parse_warnings);

    EstimateOptions opt;
    opt.spec = spec;
    opt.settings = a.settings;
    opt.input_digest = fnv1a_hex(bytes);
    auto report = build_report(data, opt);
    report.warnings.insert(report.warnings.begin(), parse_warnings.begin(), parse_warnings.end());
    if (warnings) *warnings = parse_warnings;
    return {report, to_json(report).dump(2) + "\n"};
}

inline int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
    const auto [report, json] = estimate_report(a);
    out << render_table(report);
    if (!a.out.empty()) write_file(a.out, json);
    return kOk;
}

// ---------------------------------------------------------------------------
// select: BIC over every subset of the requested covariate terms
// ---------------------------------------------------------------------------

inline int cmd_select(const EstimateArgs& a, std::ostream& out) {
    const DesignSpec full = design_from_flags(a.covariates, false);
    const std::size_t k = full.terms.size() - 1;
    if (k > 12) throw ValidationError("at most 12 covariate terms can be searched exhaustively");
    ColumnMapping mapping = a.mapping;
    mapping.covariates = covariate_columns(full);
    std::vector<std::string> warnings;
    const Dataset data = load_csv(a.data, mapping, &warnings);

    std::vector<DesignSpec> candidates;
    for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
        DesignSpec s = DesignSpec::intercept_only();
        for (std::size_t j = 0; j < k; ++j)
            if (mask & (1u << j)) s.terms.push_back(full.terms[j + 1]);
        candidates.push_back(std::move(s));
    }
    const auto sel = bic_select(data, candidates, a.settings);
    char line[512];
    out << "Compliance models ranked by BIC\n";
    std::snprintf(line, sizeof line, "%5s %12s %12s  %s\n", "rank", "BIC", "loglik", "design");
    out << line;
    for (std::size_t r = 0; r < sel.ranked.size(); ++r) {
        const auto& f = sel.ranked[r];
        std::snprintf(line, sizeof line, "%5zu %12s %12s  %s\n", r + 1, fixed3(f.bic).c_str(), fixed3(f.loglik).c_str(),
                      f.spec.describe().c_str());
        out << line;
    }
    for (const auto& s : sel.skipped) out << "skipped " << s.spec.describe() << ": " << s.reason << '\n';
    for (const auto& w : warnings) out << "warning: " << w << '\n';
    if (sel.ranked.empty()) throw IdentificationError("no candidate compliance model could be fitted");
    return kOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig c;
    try {
        c.label = j.value("label", c.label);
        c.n = j.value("n", c.n);
        c.rho = j.value("rho", c.rho);
        if (j.contains("baseline_coeffs")) c.baseline_coeffs = j.at("baseline_coeffs").get<std::array<double, 3>>();
        if (j.contains("assignment_coeffs"))
            c.assignment_coeffs = j.at("assignment_coeffs").get<std::array<double, 2>>();
        if (j.contains("compliance_coeffs_0"))
            c.compliance_coeffs_0 = j.at("compliance_coeffs_0").get<std::array<double, 3>>();
        if (j.contains("compliance_coeffs_2"))
            c.compliance_coeffs_2 = j.at("compliance_coeffs_2").get<std::array<double, 3>>();
        if (j.contains("beta_true")) c.beta_true = j.at("beta_true").get<std::array<double, 4>>();
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad simulation config: ") + e.what());
    }
    c.validate();
    return c;
}

struct SimulateArgs {
    std::string preset;
    std::string config;
    std::optional<int> n;
    std::uint64_t seed = 1;
    std::string out;
    std::string truth;
};

inline std::string crosstab(const Dataset& d) {
    std::ostringstream out;
    char line[256];
    const double n = static_cast<double>(d.size());
    out << "Subjects by assignment (z) and received treatment (x), n = " << d.size() << '\n';
    std::snprintf(line, sizeof line, "%6s %6s %8s %10s %14s\n", "z", "x", "count", "share", "share within z");
    out << line;
    for (int z = 0; z < 2; ++z) {
        const double nz = static_cast<double>(d.cell_count(z, 0) + d.cell_count(z, 1));
        for (int x = 0; x < 2; ++x) {
            const auto c = d.cell_count(z, x);
            std::snprintf(line, sizeof line, "%6d %6d %8zu %10.3f %14.3f\n", z, x, static_cast<std::size_t>(c),
                          c / n, nz > 0 ? c / nz : 0.0);
            out << line;
        }
    }
    return out.str();
}

inline SimConfig simulate_config(const SimulateArgs& a) {
    if (!a.preset.empty() && !a.config.empty()) throw ValidationError("give either --preset or --config, not both");
    SimConfig c = !a.config.empty() ? [&] {
        try {
            return sim_config_from_json(nlohmann::json::parse(read_file(a.config)));
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(std::string("config is not valid JSON: ") + e.what());
        }
    }()
                                    : scenario(a.preset.empty() ? "consistent" : a.preset);
    if (a.n) c.n = *a.n;
    c.seed = a.seed;
    c.validate();
    return c;
}

inline std::string default_truth_path(const std::string& out) {
    const auto dot = out.rfind('.');
    const auto slash = out.find_last_of('/');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    return (has_ext ? out.substr(0, dot) : out) + "_truth.csv";
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    if (a.out.empty()) throw ValidationError("--out is required");
    const SimConfig c = simulate_config(a);
    const auto sim = sample(c);
    std::ostringstream data, truth;
    write_csv(data, sim.dataset);
    write_truth_csv(truth, sim);
    const std::string truth_path = a.truth.empty() ? default_truth_path(a.out) : a.truth;
    write_file(a.out, data.str());
    write_file(truth_path, truth.str());
    out << "scenario " << c.label << ", seed " << c.seed << ", true delta " << format_number(c.delta_true()) << '\n';
    out << crosstab(sim.dataset);
    out << "wrote " << a.out << " and " << truth_path << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// mc-study
// ---------------------------------------------------------------------------

struct McArgs {
    std::string preset = "consistent";
    int reps = 200;
    std::optional<int> n;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::vector<std::string> covariates{"v"};
    bool no_covariates = false;
    std::string out;
    NewtonSettings settings;
};

inline McOptions mc_options(const McArgs& a) {
    McOptions o;
    o.config = scenario(a.preset);
    if (a.n) o.config.n = *a.n;
    o.config.validate();
    o.reps = a.reps;
    o.seed = a.seed;
    o.threads = a.threads;
    o.spec = design_from_flags(a.covariates, a.no_covariates);
    o.settings = a.settings;
    return o;
}

inline std::string mc_json(const McArgs& a) {
    return to_json(mc_study(mc_options(a)), a.seed).dump(2) + "\n";
}

inline std::string render_mc(const McSummary& s) {
    std::ostringstream out;
    char line[256];
    out << "Monte Carlo study: scenario " << s.preset << ", " << s.reps << " replications, n = " << s.n << '\n';
    std::snprintf(line, sizeof line, "%-22s %8s %8s %8s %8s %8s %9s %9s\n", "parameter", "truth", "mean", "bias",
                  "emp.sd", "mean.se", "coverage", "reject0");
    out << line;
    auto row = [&](const McParamSummary& p) {
        std::snprintf(line, sizeof line, "%-22s %8s %8s %8s %8s %8s %9s %9s\n", p.name.c_str(), fixed3(p.truth).c_str(),
                      fixed3(p.mean).c_str(), fixed3(p.bias).c_str(), fixed3(p.empirical_sd).c_str(),
                      fixed3(p.mean_se).c_str(), fixed3(p.coverage).c_str(), fixed3(p.rejection_rate).c_str());
        out << line;
    };
    for (const auto& p : s.params) row(p);
    out << "comparators (truth = delta):\n";
    for (const auto& p : s.baselines) row(p);
    out << "failed replications: " << s.failed << '\n';
    for (const auto& m : s.failure_messages) out << "  " << m << '\n';
    return out.str();
}

inline int cmd_mc_study(const McArgs& a, std::ostream& out) {
    const auto opt = mc_options(a);
    const auto s = mc_study(opt);
    out << render_mc(s);
    if (!a.out.empty()) write_file(a.out, to_json(s, a.seed).dump(2) + "\n");
    return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out) {
    const auto rep = run_gradcheck(opt);
    char line[128];
    std::snprintf(line, sizeof line, "%-12s %14s %s\n", "block", "worst rel.err", "status");
    out << line;
    for (const auto& e : rep.entries) {
        std::snprintf(line, sizeof line, "%-12s %14.3e %s\n", e.name.c_str(), e.worst_relative_error,
                      e.passed ? "ok" : "FAIL");
        out << line;
    }
    for (const auto& w : rep.warnings) out << "warning: " << w << '\n';
    out << (rep.passed ? "all derivative checks passed" : "derivative check FAILED") << " (threshold "
        << opt.threshold << ")\n";
    return rep.passed ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// dispatcher
// ---------------------------------------------------------------------------

inline int report_error(std::ostream& err, int code, const std::string& what, const char* hint) {
    err << "error: " << what << '\n';
    if (hint && *hint) err << "hint: " << hint << '\n';
    return code;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Complier average causal effects from paired binary outcomes under non-compliance", "cace"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    auto add_newton = [](CLI::App* sub, NewtonSettings& s) {
        sub->add_option("--tol", s.gradient_tolerance, "Newton gradient tolerance (max-abs)")->check(CLI::PositiveNumber);
        sub->add_option("--max-iter", s.max_iterations, "Newton iteration limit")->check(CLI::PositiveNumber);
    };
    auto add_mapping = [](CLI::App* sub, EstimateArgs& e) {
        sub->add_option("--data", e.data, "Input CSV")->required();
        sub->add_option("--y1", e.mapping.y1, "Baseline outcome column");
        sub->add_option("--y2", e.mapping.y2, "Follow-up outcome column");
        sub->add_option("--z", e.mapping.z, "Assignment column");
        sub->add_option("--x", e.mapping.x, "Received-treatment column");
        sub->add_option("--id", e.mapping.id, "Subject id column (optional)");
        sub->add_option("--covariate", e.covariates, "Compliance covariate: name[:raw|:quartiles[=ref]|:binary]");
        sub->add_option("--tol", e.settings.gradient_tolerance, "Newton gradient tolerance (max-abs)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--max-iter", e.settings.max_iterations, "Newton iteration limit")->check(CLI::PositiveNumber);
    };

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "Fit the two-step estimator and comparators on a CSV");
    add_mapping(estimate, est);
    estimate->add_flag("--no-covariates", est.no_covariates, "Intercept-only compliance model");
    estimate->add_option("--out", est.out, "Write the structured report (JSON) here");

    EstimateArgs sel;
    auto* select = app.add_subcommand("select", "Rank compliance models over covariate subsets by BIC");
    add_mapping(select, sel);

    SimulateArgs sim;
    int sim_n = 0;
    auto* simulate = app.add_subcommand("simulate", "Draw a synthetic dataset");
    simulate->add_option("--preset", sim.preset, "consistent | null | misspecified");
    simulate->add_option("--config", sim.config, "JSON simulation config");
    auto* sim_n_opt = simulate->add_option("--n", sim_n, "Number of subjects")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "RNG seed");
    simulate->add_option("--out", sim.out, "Output data CSV")->required();
    simulate->add_option("--truth", sim.truth, "Output truth CSV (default: <out>_truth.csv)");

    McArgs mc;
    int mc_n = 0;
    auto* mcs = app.add_subcommand("mc-study", "Monte Carlo study of a simulation scenario");
    mcs->add_option("--preset", mc.preset, "consistent | null | misspecified");
    mcs->add_option("--reps", mc.reps, "Replications")->check(CLI::PositiveNumber);
    auto* mc_n_opt = mcs->add_option("--n", mc_n, "Subjects per replication")->check(CLI::PositiveNumber);
    mcs->add_option("--seed", mc.seed, "Master seed");
    mcs->add_option("--threads", mc.threads, "Worker threads (0 = all cores)");
    auto* mc_cov = mcs->add_option("--covariate", mc.covariates, "Compliance covariate (default: v)");
    mcs->add_flag("--no-covariates", mc.no_covariates, "Intercept-only compliance model");
    mcs->add_option("--out", mc.out, "Write the structured summary (JSON) here");
    add_newton(mcs, mc.settings);

    GradcheckOptions gc;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference audit of analytic derivatives");
    grad->add_option("--seed", gc.seed, "Seed");
    grad->add_option("--configurations", gc.configurations, "Random configurations");
    grad->add_option("--n", gc.n, "Subjects per configuration");
    grad->add_option("--covariates", gc.covariates, "Covariates besides the intercept")->check(CLI::NonNegativeNumber);
    grad->add_option("--step", gc.step, "Central-difference step")->check(CLI::PositiveNumber);
    grad->add_option("--threshold", gc.threshold, "Maximum relative error")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        return report_error(err, kValidation, e.what(), "run with --help for usage");
    }

    try {
        if (*estimate) return cmd_estimate(est, out);
        if (*select) return cmd_select(sel, out);
        if (*simulate) {
            if (*sim_n_opt) sim.n = sim_n;
            return cmd_simulate(sim, out);
        }
        if (*mcs) {
            if (*mc_n_opt) mc.n = mc_n;
            if (*mc_cov && mc.covariates.empty()) mc.no_covariates = true;
            return cmd_mc_study(mc, out);
        }
        if (*grad) return cmd_gradcheck(gc, out);
    } catch (const ValidationError& e) {
        return report_error(err, kValidation, e.what(), "check column names, binary codings and covariate flags");
    } catch (const IdentificationError& e) {
        return report_error(err, kIdentification, e.what(),
                            "every (z, x) cell needs subjects; try fewer covariates or --no-covariates");
    } catch (const SingularMatrixError& e) {
        return report_error(err, kConvergence, e.what(), "the information matrix is singular; simplify the design");
    } catch (const ConvergenceError& e) {
        return report_error(err, kConvergence, e.what(), "raise --max-iter or simplify the compliance design");
    } catch (const IoError& e) {
        return report_error(err, kIo, e.what(), "");
    }
    return kValidation;
}

}  // namespace cace::cli
