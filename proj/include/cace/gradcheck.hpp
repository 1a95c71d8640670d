#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cace/causal.hpp"
#include "cace/compliance.hpp"
#include "cace/numerics.hpp"
#include "cace/simulator.hpp"
#include "cace/variance.hpp"

// Finite-difference audit of every analytic derivative used by the estimator
// and the sandwich, at randomized datasets and parameter points.
namespace cace {

struct GradcheckOptions {
    std::uint64_t seed = 1;
    int configurations = 200;
    int n = 40;             // subjects per random dataset
    int covariates = 2;     // raw covariates besides the intercept
    double step = 1e-5;
    double threshold = 1e-5;
    bool flip_cross_block_sign = false;  // fault injection for harness tests
};

struct GradcheckEntry {
    std::string name;
    double worst_relative_error = 0.0;
    bool passed = true;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    std::vector<std::string> warnings;
    bool passed = true;
};

struct RandomProblem {
    MatrixXd g;
    Observations obs;
    ComplianceParams alpha;
    Vector4d beta;
};

namespace detail {

inline Observations random_observations(SplitMix64& rng, int n) {
    std::vector<SubjectRecord> recs;
    for (int i = 0; i < n; ++i) {
        SubjectRecord r;
        r.y1 = rng.uniform() < 0.5;
        r.y2 = rng.uniform() < 0.5;
        r.z = rng.uniform() < 0.5;
        r.x = rng.uniform() < 0.5;
        recs.push_back(r);
    }
    return Observations(Dataset(std::move(recs), {}));
}

}  // namespace detail

inline RandomProblem random_problem(std::uint64_t seed, int n, int covariates) {
    SplitMix64 rng(seed);
    const int p = covariates + 1;
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    MatrixXd g(n, p);
    for (int i = 0; i < n; ++i) {
        g(i, 0) = 1.0;
        for (int j = 1; j < p; ++j) g(i, j) = uni(-1.5, 1.5);
    }
    auto obs = detail::random_observations(rng, n);
    ComplianceParams alpha{VectorXd(p), VectorXd(p)};
    for (int j = 0; j < p; ++j) {
        alpha.alpha0[j] = uni(-1.0, 1.0);
        alpha.alpha2[j] = uni(-1.0, 1.0);
    }
    Vector4d beta;
    for (int h = 0; h < 4; ++h) beta[h] = uni(-2.0, 2.0);
    return {std::move(g), std::move(obs), std::move(alpha), beta};
}

inline std::vector<WeightVector> weights_at(const ComplianceParams& alpha, const MatrixXd& g, const Observations& obs) {
    std::vector<WeightVector> w;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        w.push_back(build_weight_vector(obs.z[i], obs.x[i], class_probabilities(alpha, g.row(i))));
    return w;
}

// Fit-shaped view of a random step-1 point, enough for cross_block.
inline ComplianceModelFit pseudo_step1(const ComplianceParams& alpha, const MatrixXd& g) {
    ComplianceModelFit f;
    f.params = alpha;
    f.design.g = g;
    for (Eigen::Index i = 0; i < g.rows(); ++i) f.per_subject.push_back(class_probabilities(alpha, g.row(i)));
    return f;
}

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
    GradcheckReport rep;
    std::array<GradcheckEntry, 6> e{{{"grad1"}, {"hess1"}, {"grad2"}, {"hess2"}, {"cross_block"}, {"dw_dalpha"}}};
    if (opt.n <= 0 || opt.configurations <= 0) {
        rep.warnings.emplace_back("no subjects or configurations: derivative checks are vacuous");
        rep.entries.assign(e.begin(), e.end());
        return rep;
    }
    const SplitMix64 master(opt.seed);
    const double h = opt.step;
    auto track = [](GradcheckEntry& entry, double err) {
        entry.worst_relative_error = std::max(entry.worst_relative_error, err);
    };

    for (int c = 0; c < opt.configurations; ++c) {
        const auto prob = random_problem(master.split(static_cast<std::uint64_t>(c)).next(), opt.n, opt.covariates);
        const auto& g = prob.g;
        const auto& obs = prob.obs;
        const VectorXd a0 = prob.alpha.stacked();

        // step 1
        auto l1 = [&](const VectorXd& t) { return loglik1(ComplianceParams::from_stacked(t), g, obs.z, obs.x); };
        auto g1 = [&](const VectorXd& t) { return grad1(ComplianceParams::from_stacked(t), g, obs.z, obs.x); };
        track(e[0], max_relative_error(g1(a0), numeric_gradient(l1, a0, h)));
        track(e[1], max_relative_error(hess1(prob.alpha, g, obs.z, obs.x), numeric_jacobian(g1, a0, h)));

        // step 2
        const auto w = weights_at(prob.alpha, g, obs);
        const VectorXd b0 = prob.beta;
        auto l2 = [&](const VectorXd& b) { return loglik2_beta(Vector4d(b), w, obs.y2, obs.d); };
        auto g2 = [&](const VectorXd& b) { return VectorXd(grad2_hess2(Vector4d(b), w, obs.y2, obs.d).gradient); };
        const auto ev = grad2_hess2(prob.beta, w, obs.y2, obs.d);
        track(e[2], max_relative_error(ev.gradient, numeric_gradient(l2, b0, h)));
        track(e[3], max_relative_error(ev.hessian, numeric_jacobian(g2, b0, h)));

        // d grad2 / d alpha
        auto g2_alpha = [&](const VectorXd& t) {
            const auto wt = weights_at(ComplianceParams::from_stacked(t), g, obs);
            return VectorXd(grad2_hess2(prob.beta, wt, obs.y2, obs.d).gradient);
        };
        MatrixXd cb = cross_block(prob.beta, pseudo_step1(prob.alpha, g), w, obs);
        if (opt.flip_cross_block_sign) cb = -cb;
        track(e[4], max_relative_error(cb, numeric_jacobian(g2_alpha, a0, h)));

        // d w / d alpha for every subject of the first configuration, a few otherwise
        const Eigen::Index stride = c == 0 ? 1 : std::max<Eigen::Index>(1, g.rows() / 4);
        for (Eigen::Index i = 0; i < g.rows(); i += stride) {
            const auto cp = class_probabilities(prob.alpha, g.row(i));
            const auto jac = dw_dalpha(obs.z[i], obs.x[i], cp, g.row(i));
            MatrixXd analytic(4, a0.size());
            analytic << jac.d_alpha0, jac.d_alpha2;
            auto wmap = [&](const VectorXd& t) {
                return VectorXd(build_weight_vector(obs.z[i], obs.x[i],
                                                    class_probabilities(ComplianceParams::from_stacked(t), g.row(i))));
            };
            track(e[5], max_relative_error(analytic, numeric_jacobian(wmap, a0, h)));
        }
    }
    for (auto& entry : e) {
        entry.passed = entry.worst_relative_error < opt.threshold;
        rep.passed = rep.passed && entry.passed;
    }
    rep.entries.assign(e.begin(), e.end());
    return rep;
}

}  // namespace cace
