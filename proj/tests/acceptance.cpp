// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>

#include "cace/cli.hpp"
#include "cace/gradcheck.hpp"
#include "cace/mc_study.hpp"
#include "cace/pipeline.hpp"
#include "test_support.hpp"

using namespace cace;
using namespace cace::testing;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

const DesignSpec kWithV{{DesignTerm::intercept(), DesignTerm::raw("v")}};

// Worst sandwich defects seen across every fit in criteria 3-5.
double worst_asym = 0.0;
double worst_eig = std::numeric_limits<double>::infinity();

void track_sigma(double asym, double eig) {
    worst_asym = std::max(worst_asym, asym);
    worst_eig = std::min(worst_eig, eig);
}

void criterion1() {
    const Vector4d beta(0.0, 1.948, -0.072, 0.0);
    const double delta = causal_delta(beta);
    const auto row = wald_row("delta", -2.020, 0.769);
    const bool ok = std::abs(delta - -2.020) < 1e-12 && std::abs(row.t_statistic - -2.63) <= 0.01 &&
                    std::abs(row.p_value - 0.009) <= 0.001;
    verdict(1, ok, fmt("delta=%.6f t=%.4f p=%.5f", delta, row.t_statistic, row.p_value));
}

void criterion2() {
    const auto rep = run_gradcheck({});
    std::string detail = "200 configurations;";
    double worst = 0.0;
    for (const auto& e : rep.entries) {
        detail += " " + e.name + fmt("=%.2e", e.worst_relative_error);
        worst = std::max(worst, e.worst_relative_error);
    }
    verdict(2, rep.passed && worst < 1e-5 && rep.entries.size() == 6, detail);
}

void criterion3() {
    double worst_eta = 0.0, worst_moment = 0.0;
    int fitted = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto c = scenario("consistent");
        c.n = 300;
        c.seed = seed;
        const auto data = sample(c).dataset;
        const Observations obs(data);
        try {
            const auto s1 = fit_step1(data, DesignSpec::intercept_only());
            const auto s2 = fit_step2(obs, s1);
            const auto [p10, p01] = moment_solution(obs);
            const auto cp = class_probabilities(s1.params, VectorXd::Ones(1));
            worst_moment = std::max({worst_moment, std::abs(cp.pi0 - p10), std::abs(cp.pi2 - p01)});
            const Vector4d oracle = EtaLatticeOracle(obs, s1.params).solve();
            worst_eta = std::max(worst_eta, (s2.eta - oracle).cwiseAbs().maxCoeff());
            const auto cov = sandwich(s1, s2, obs);
            track_sigma(symmetry_defect(cov.sigma), min_eigenvalue(cov.sigma));
            ++fitted;
        } catch (const std::exception& e) {
            std::printf("  seed %llu: %s\n", static_cast<unsigned long long>(seed), e.what());
        }
    }
    verdict(3, fitted == 20 && worst_eta < 1e-3 && worst_moment < 1e-8,
            fmt("%.0f/20 fitted, worst |eta - lattice|=%.2e, worst moment residual=%.2e", fitted, worst_eta,
                worst_moment));
}

McSummary run_preset(const std::string& name) {
    McOptions opt;
    opt.config = scenario(name);
    opt.config.n = 5000;
    opt.reps = 200;
    opt.seed = 1;
    const auto s = mc_study(opt);
    track_sigma(s.worst_sigma_symmetry_defect, s.worst_sigma_min_eigenvalue);
    return s;
}

void criterion4(const McSummary& s) {
    const auto& d = s.params[4];
    const double ratio = d.mean_se / d.empirical_sd;
    verdict(4, s.failed == 0 && std::abs(d.mean - 1.0) < 0.1 && std::abs(ratio - 1.0) <= 0.15,
            fmt("mean delta=%.4f, mean SE=%.4f, empirical SD=%.4f, failed=%.0f", d.mean, d.mean_se, d.empirical_sd,
                s.failed));
}

void criterion5(const McSummary& s) {
    const auto& d = s.params[4];
    verdict(5, s.failed == 0 && d.coverage >= 0.91 && d.coverage <= 0.98 && d.rejection_rate >= 0.02 &&
                   d.rejection_rate <= 0.09,
            fmt("coverage=%.3f, type-I rate=%.3f, failed=%.0f", d.coverage, d.rejection_rate, s.failed));
}

void criterion6() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto c = scenario("consistent");
        c.n = 3000;
        c.seed = seed;
        const auto data = sample(c).dataset;
        const auto base = fit_two_step(data, kWithV);

        const auto rel = fit_two_step(relabel_arms(data), kWithV);
        worst = std::max(worst, (base.step1.params.alpha0 - rel.step1.params.alpha2).cwiseAbs().maxCoeff());
        worst = std::max(worst, (base.step1.params.alpha2 - rel.step1.params.alpha0).cwiseAbs().maxCoeff());
        worst = std::max(worst, (base.step2.beta - rel.step2.beta.reverse()).cwiseAbs().maxCoeff());
        worst = std::max(worst, std::abs(base.step2.delta + rel.step2.delta));

        const auto flip = fit_two_step(flip_outcomes(data), kWithV);
        worst = std::max(worst, (base.step1.params.stacked() - flip.step1.params.stacked()).cwiseAbs().maxCoeff());
        worst = std::max(worst, (base.step2.beta + flip.step2.beta).cwiseAbs().maxCoeff());
    }
    verdict(6, worst <= 1e-6, fmt("worst deviation=%.2e over 5 datasets", worst));
}

void criterion7() {
    verdict(7, worst_asym <= 1e-10 && worst_eig >= -1e-8,
            fmt("worst asymmetry=%.2e, smallest eigenvalue=%.3e", worst_asym, worst_eig));
}

void criterion8(const McSummary& consistent) {
    // Perfect compliance: everyone is a complier, so x == z for all subjects.
    auto c = scenario("consistent");
    c.n = 5000;
    c.compliance_coeffs_0 = {-60.0, 0.0, 0.0};
    c.compliance_coeffs_2 = {-60.0, 0.0, 0.0};
    const auto b = run_baselines(sample(c).dataset);
    double spread = 0.0;
    for (const auto& f : b)
        spread = std::max({spread, std::abs(f.delta_hat - b[0].delta_hat), std::abs(f.std_err - b[0].std_err)});

    const double tr = consistent.baselines[0].median_abs;
    const double proposed = consistent.params[4].median_abs;
    verdict(8, spread <= 1e-10 && tr < proposed,
            fmt("perfect-compliance spread=%.1e; median |received-treatment|=%.4f vs median |proposed|=%.4f "
                "(ratio %.3f)",
                spread, tr, proposed, tr / proposed));
    std::printf("  other comparators: median |ITT|=%.4f, median |per-protocol|=%.4f\n",
                consistent.baselines[1].median_abs, consistent.baselines[2].median_abs);
}

void criterion9() {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "cace_acceptance";
    fs::create_directories(dir);
    const auto data = (dir / "data.csv").string();
    auto cfg = scenario("consistent");
    cfg.n = 2000;
    cfg.seed = 9;
    std::ostringstream csv;
    write_csv(csv, sample(cfg).dataset);
    write_file(data, csv.str());

    auto run_twice = [&](auto cmd, auto args, const std::string& stem) {
        std::ostringstream sink;
        args.out = (dir / (stem + "_a.json")).string();
        cmd(args, sink);
        const auto first = cli::read_file(args.out);
        args.out = (dir / (stem + "_b.json")).string();
        cmd(args, sink);
        return !first.empty() && first == cli::read_file(args.out);
    };

    cli::EstimateArgs est;
    est.data = data;
    est.covariates = {"v"};
    const bool same_estimate = run_twice(cli::cmd_estimate, est, "estimate");

    cli::McArgs mc;
    mc.reps = 20;
    mc.n = 2000;
    mc.seed = 3;
    const bool same_mc = run_twice(cli::cmd_mc_study, mc, "mc");
    verdict(9, same_estimate && same_mc,
            std::string("estimate output ") + (same_estimate ? "identical" : "differs") + ", mc-study output " +
                (same_mc ? "identical" : "differs"));
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    const auto consistent = run_preset("consistent");
    criterion4(consistent);
    const auto null = run_preset("null");
    criterion5(null);
    criterion6();
    criterion7();
    criterion8(consistent);
    criterion9();
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
