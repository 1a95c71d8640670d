#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cace/baselines.hpp"
#include "cace/pipeline.hpp"
#include "cace/report.hpp"
#include "cace/simulator.hpp"

namespace cace {

struct McOptions {
    SimConfig config;
    int reps = 200;
    std::uint64_t seed = 1;
    DesignSpec spec{{DesignTerm::intercept(), DesignTerm::raw("v")}};
    NewtonSettings settings;
    unsigned threads = 0;  // 0 = hardware concurrency
    double level = 0.95;
};

struct McReplication {
    bool ok = false;
    std::string error;
    Vector4d beta = Vector4d::Zero();
    Vector4d beta_se = Vector4d::Zero();
    double delta = 0.0;
    double delta_se = 0.0;
    bool delta_estimable = false;
    std::array<BaselineFit, 3> baselines{};
    double sigma_symmetry_defect = 0.0;
    double sigma_min_eigenvalue = 0.0;
};

struct McParamSummary {
    std::string name;
    double truth = 0.0;
    double mean = 0.0;
    double bias = 0.0;
    double empirical_sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    double rejection_rate = 0.0;  // Wald test of zero at the nominal level
    double median_abs = 0.0;
    int used = 0;
};

struct McSummary {
    std::string preset;
    int reps = 0;
    int n = 0;
    int failed = 0;
    std::vector<std::string> failure_messages;
    std::vector<McParamSummary> params;     // beta0..beta3, delta
    std::vector<McParamSummary> baselines;  // three comparators, truth = delta
    double worst_sigma_symmetry_defect = 0.0;
    double worst_sigma_min_eigenvalue = 0.0;
    std::vector<McReplication> replications;
};

inline std::uint64_t replication_seed(std::uint64_t seed, int rep) {
    return SplitMix64(seed).split(static_cast<std::uint64_t>(rep)).next();
}

inline McReplication run_replication(const McOptions& opt, int rep) {
    McReplication out;
    SimConfig cfg = opt.config;
    cfg.seed = replication_seed(opt.seed, rep);
    try {
        const auto sim = sample(cfg);
        const auto fit = fit_two_step(sim.dataset, opt.spec, opt.settings);
        const auto o = fit.covariance.beta_offset();
        out.beta = fit.step2.beta;
        out.beta_se = fit.covariance.se.segment(o, 4);
        out.delta = fit.step2.delta;
        out.delta_se = fit.covariance.delta_se;
        out.delta_estimable = fit.step2.delta_estimable();
        out.baselines = run_baselines(sim.dataset, opt.settings);
        out.sigma_symmetry_defect = symmetry_defect(fit.covariance.sigma);
        out.sigma_min_eigenvalue = min_eigenvalue(fit.covariance.sigma);
        out.ok = true;
    } catch (const std::runtime_error& e) {
        out.error = e.what();
    }
    return out;
}

namespace detail {

inline double quantile_z(double level) {
    // Two-sided normal critical value by bisection on the CDF.
    double lo = 0.0, hi = 10.0;
    const double target = 0.5 + level / 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline McParamSummary summarize(std::string name, double truth, const std::vector<double>& est,
                                const std::vector<double>& se, double zcrit) {
    McParamSummary s;
    s.name = std::move(name);
    s.truth = truth;
    s.used = static_cast<int>(est.size());
    if (est.empty()) return s;
    const double k = static_cast<double>(est.size());
    double sum = 0, sum_se = 0;
    int covered = 0, rejected = 0;
    std::vector<double> abs_est;
    for (std::size_t i = 0; i < est.size(); ++i) {
        sum += est[i];
        sum_se += se[i];
        covered += std::abs(est[i] - truth) <= zcrit * se[i];
        rejected += std::abs(est[i]) > zcrit * se[i];
        abs_est.push_back(std::abs(est[i]));
    }
    s.mean = sum / k;
    s.bias = s.mean - truth;
    double ss = 0;
    for (double e : est) ss += (e - s.mean) * (e - s.mean);
    s.empirical_sd = est.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
    s.mean_se = sum_se / k;
    s.coverage = covered / k;
    s.rejection_rate = rejected / k;
    s.median_abs = median(abs_est);
    return s;
}

}  // namespace detail

// Replications run on a pool of workers; results are stored by replication
// index, so the summary does not depend on scheduling.
inline McSummary mc_study(const McOptions& opt) {
    if (opt.reps < 1) throw ValidationError("replication count must be >= 1");
    McSummary out;
    out.preset = opt.config.label;
    out.reps = opt.reps;
    out.n = opt.config.n;
    out.replications.resize(static_cast<std::size_t>(opt.reps));

    unsigned workers = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(opt.reps));
    std::atomic<int> next{0};
    auto work = [&] {
        for (int r = next++; r < opt.reps; r = next++) out.replications[static_cast<std::size_t>(r)] = run_replication(opt, r);
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    const double zcrit = detail::quantile_z(opt.level);
    const auto& c = opt.config;
    std::array<std::vector<double>, 5> est, se;
    std::array<std::vector<double>, 3> b_est, b_se;
    for (int r = 0; r < opt.reps; ++r) {
        const auto& rep = out.replications[static_cast<std::size_t>(r)];
        if (!rep.ok) {
            ++out.failed;
            out.failure_messages.push_back("replication " + std::to_string(r) + ": " + rep.error);
            continue;
        }
        for (int h = 0; h < 4; ++h) {
            est[static_cast<std::size_t>(h)].push_back(rep.beta[h]);
            se[static_cast<std::size_t>(h)].push_back(rep.beta_se[h]);
        }
        if (rep.delta_estimable) {
            est[4].push_back(rep.delta);
            se[4].push_back(rep.delta_se);
        }
        for (std::size_t k = 0; k < 3; ++k) {
            if (rep.baselines[k].boundary) continue;
            b_est[k].push_back(rep.baselines[k].delta_hat);
            b_se[k].push_back(rep.baselines[k].std_err);
        }
        out.worst_sigma_symmetry_defect = std::max(out.worst_sigma_symmetry_defect, rep.sigma_symmetry_defect);
        const bool first = est[0].size() == 1;
        out.worst_sigma_min_eigenvalue =
            first ? rep.sigma_min_eigenvalue : std::min(out.worst_sigma_min_eigenvalue, rep.sigma_min_eigenvalue);
    }
    for (std::size_t h = 0; h < 4; ++h)
        out.params.push_back(detail::summarize("beta" + std::to_string(h), c.beta_true[h], est[h], se[h], zcrit));
    out.params.push_back(detail::summarize("delta", c.delta_true(), est[4], se[4], zcrit));
    constexpr std::array<BaselineKind, 3> kinds{BaselineKind::TreatmentReceived, BaselineKind::IntentionToTreat,
                                                BaselineKind::PerProtocol};
    for (std::size_t k = 0; k < 3; ++k)
        out.baselines.push_back(detail::summarize(to_string(kinds[k]), c.delta_true(), b_est[k], b_se[k], zcrit));
    return out;
}

inline nlohmann::ordered_json to_json(const McParamSummary& s) {
    return {{"name", s.name},         {"truth", s.truth},
            {"mean", s.mean},         {"bias", s.bias},
            {"empirical_sd", s.empirical_sd}, {"mean_se", s.mean_se},
            {"coverage", s.coverage}, {"rejection_rate", s.rejection_rate},
            {"median_abs", s.median_abs}, {"used", s.used}};
}

inline nlohmann::ordered_json to_json(const McSummary& s, std::uint64_t seed) {
    using nlohmann::ordered_json;
    ordered_json params = ordered_json::array(), baselines = ordered_json::array();
    for (const auto& p : s.params) params.push_back(to_json(p));
    for (const auto& p : s.baselines) baselines.push_back(to_json(p));
    return {{"schema", "cace.mc_summary"},
            {"schema_version", 1},
            {"preset", s.preset},
            {"seed", seed},
            {"reps", s.reps},
            {"n", s.n},
            {"failed", s.failed},
            {"failures", s.failure_messages},
            {"parameters", params},
            {"baselines", baselines},
            {"worst_sigma_symmetry_defect", s.worst_sigma_symmetry_defect},
            {"worst_sigma_min_eigenvalue", s.worst_sigma_min_eigenvalue},
            {"version", kVersion}};
}

}  // namespace cace
