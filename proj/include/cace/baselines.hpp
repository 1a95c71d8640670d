#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "cace/model.hpp"
#include "cace/numerics.hpp"

// Unadjusted conditional logistic comparators. Restricted to discordant
// subjects, logit Pr(y2 = 1) = intercept + slope * regressor is the conditional
// likelihood of a single binary exposure.
namespace cace {

struct ConditionalLogisticFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double std_err = std::numeric_limits<double>::quiet_NaN();
    int n_used = 0;
    bool boundary = false;  // some regressor/outcome cell is empty: slope does not exist
    std::array<int, 4> cells{};  // n00, n01, n10, n11 indexed by 2*regressor + y2
};

// `include` selects the subjects eligible for the fit (all ones for the full sample).
inline ConditionalLogisticFit conditional_logistic(const Eigen::VectorXi& y2, const Eigen::VectorXi& regressor,
                                                   const Eigen::VectorXi& d, const Eigen::VectorXi& include,
                                                   const NewtonSettings& settings = {}) {
    ConditionalLogisticFit out;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < y2.size(); ++i) {
        if (!d[i] || !include[i]) continue;
        rows.push_back(i);
        ++out.cells[static_cast<std::size_t>(2 * regressor[i] + y2[i])];
    }
    out.n_used = static_cast<int>(rows.size());
    for (int c : out.cells)
        if (c == 0) out.boundary = true;
    if (out.boundary) return out;

    auto objective = [&](const VectorXd& theta) {
        Evaluation ev{0.0, VectorXd::Zero(2), MatrixXd::Zero(2, 2)};
        for (auto i : rows) {
            const double r = regressor[i];
            const double eta = theta[0] + theta[1] * r;
            const double mu = expit(eta);
            ev.value += y2[i] ? -log1pexp(-eta) : -log1pexp(eta);
            const double resid = y2[i] - mu;
            ev.gradient[0] += resid;
            ev.gradient[1] += resid * r;
            const double wgt = mu * (1.0 - mu);
            ev.hessian(0, 0) -= wgt;
            ev.hessian(0, 1) -= wgt * r;
            ev.hessian(1, 1) -= wgt * r * r;
        }
        ev.hessian(1, 0) = ev.hessian(0, 1);
        return ev;
    };
    const auto res = newton_maximize(objective, VectorXd::Zero(2), settings);
    if (!res.converged) {
        out.boundary = true;
        return out;
    }
    const MatrixXd cov = solve_linear(-res.hessian_at_optimum, MatrixXd::Identity(2, 2));
    out.slope = res.argmax[1];
    out.std_err = std::sqrt(cov(1, 1));
    return out;
}

inline ConditionalLogisticFit conditional_logistic(const Eigen::VectorXi& y2, const Eigen::VectorXi& regressor,
                                                   const Eigen::VectorXi& d, const NewtonSettings& settings = {}) {
    return conditional_logistic(y2, regressor, d, Eigen::VectorXi::Ones(y2.size()), settings);
}

enum class BaselineKind { TreatmentReceived, IntentionToTreat, PerProtocol };

inline const char* to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::TreatmentReceived: return "treatment-received";
        case BaselineKind::IntentionToTreat: return "intention-to-treat";
        case BaselineKind::PerProtocol: return "per-protocol";
    }
    return "?";
}

struct BaselineFit {
    BaselineKind kind = BaselineKind::TreatmentReceived;
    double delta_hat = std::numeric_limits<double>::quiet_NaN();
    double std_err = std::numeric_limits<double>::quiet_NaN();  // model-based (inverse information)
    double t_statistic = std::numeric_limits<double>::quiet_NaN();
    double p_value = std::numeric_limits<double>::quiet_NaN();
    int n_used = 0;
    bool boundary = false;
};

inline BaselineFit to_baseline(BaselineKind kind, const ConditionalLogisticFit& f) {
    BaselineFit b;
    b.kind = kind;
    b.n_used = f.n_used;
    b.boundary = f.boundary;
    if (!f.boundary) {
        b.delta_hat = f.slope;
        b.std_err = f.std_err;
        b.t_statistic = f.slope / f.std_err;
        b.p_value = two_sided_p(b.t_statistic);
    }
    return b;
}

inline std::array<BaselineFit, 3> run_baselines(const Observations& obs, const NewtonSettings& settings = {}) {
    Eigen::VectorXi per_protocol(obs.size());
    for (Eigen::Index i = 0; i < obs.size(); ++i) per_protocol[i] = obs.z[i] == obs.x[i] ? 1 : 0;
    return {to_baseline(BaselineKind::TreatmentReceived, conditional_logistic(obs.y2, obs.x, obs.d, settings)),
            to_baseline(BaselineKind::IntentionToTreat, conditional_logistic(obs.y2, obs.z, obs.d, settings)),
            to_baseline(BaselineKind::PerProtocol,
                        conditional_logistic(obs.y2, obs.z, obs.d, per_protocol, settings))};
}

inline std::array<BaselineFit, 3> run_baselines(const Dataset& data, const NewtonSettings& settings = {}) {
    return run_baselines(Observations(data), settings);
}

}  // namespace cace
