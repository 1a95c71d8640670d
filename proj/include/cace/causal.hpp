#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cace/compliance.hpp"
#include "cace/errors.hpp"
#include "cace/model.hpp"
#include "cace/numerics.hpp"

// Step 2: weighted pseudo conditional log-likelihood over discordant subjects.
// Each discordant subject contributes a Bernoulli term in w' eta, where eta
// holds the conditional success probabilities of the four (class, arm)
// combinations and w mixes them by the step-1 class probabilities.
namespace cace {

using WeightVector = Vector4d;

inline WeightVector build_weight_vector(int z, int x, const ClassProbabilities& cp) {
    if (z == 0 && x == 0) return {cp.pi_star_01_0, cp.pi_star_01_1, 0.0, 0.0};
    if (z == 0 && x == 1) return {0.0, 0.0, 0.0, 1.0};
    if (z == 1 && x == 0) return {1.0, 0.0, 0.0, 0.0};
    return {0.0, 0.0, cp.pi_star_12_1, cp.pi_star_12_2};
}

inline std::vector<WeightVector> build_weights(const Observations& obs, const ComplianceModelFit& step1) {
    std::vector<WeightVector> w;
    w.reserve(static_cast<std::size_t>(obs.size()));
    for (Eigen::Index i = 0; i < obs.size(); ++i)
        w.push_back(build_weight_vector(obs.z[i], obs.x[i], step1.per_subject[static_cast<std::size_t>(i)]));
    return w;
}

inline Vector4d expit4(const Vector4d& beta) {
    return beta.unaryExpr([](double b) { return expit(b); });
}

// Mixture success probability w'eta and its complement w'(1-eta), the latter
// formed directly so that it stays accurate when eta is close to one.
struct MixtureProbability {
    double success;
    double failure;
};

inline MixtureProbability mixture(const WeightVector& w, const Vector4d& eta, const Vector4d& one_minus_eta) {
    return {w.dot(eta), w.dot(one_minus_eta)};
}

inline double loglik2(const Vector4d& eta, const std::vector<WeightVector>& weights, const Eigen::VectorXi& y2,
                      const Eigen::VectorXi& d) {
    const Vector4d eta_c = Vector4d::Ones() - eta;
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (!d[k]) continue;
        const auto m = mixture(weights[i], eta, eta_c);
        total += y2[k] ? std::log(m.success) : std::log(m.failure);
    }
    return total;
}

// Log-likelihood in beta, evaluated from beta directly so that large |beta|
// does not lose precision through eta.
inline double loglik2_beta(const Vector4d& beta, const std::vector<WeightVector>& weights,
                           const Eigen::VectorXi& y2, const Eigen::VectorXi& d) {
    const Vector4d eta = expit4(beta);
    const Vector4d eta_c = expit4(-beta);
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (!d[k]) continue;
        const auto m = mixture(weights[i], eta, eta_c);
        total += y2[k] ? std::log(m.success) : std::log(m.failure);
    }
    return total;
}

// y2/(w'eta) - (1-y2)/(1-w'eta): derivative of the subject's log term with
// respect to w'eta.
inline double residual_factor(int y2, const MixtureProbability& m) {
    return y2 ? 1.0 / m.success : -1.0 / m.failure;
}

inline double curvature_factor(int y2, const MixtureProbability& m) {
    return y2 ? 1.0 / (m.success * m.success) : 1.0 / (m.failure * m.failure);
}

struct CausalEvaluation {
    double value = 0.0;
    Vector4d gradient = Vector4d::Zero();
    Matrix4d hessian = Matrix4d::Zero();
};

inline CausalEvaluation grad2_hess2(const Vector4d& beta, const std::vector<WeightVector>& weights,
                                    const Eigen::VectorXi& y2, const Eigen::VectorXi& d) {
    const Vector4d eta = expit4(beta);
    const Vector4d eta_c = expit4(-beta);
    const Vector4d a = eta.cwiseProduct(eta_c);
    const Vector4d b = a.cwiseProduct(Vector4d::Ones() - 2.0 * eta);

    CausalEvaluation out;
    Vector4d grad_eta = Vector4d::Zero();
    Matrix4d hess_eta = Matrix4d::Zero();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (!d[k]) continue;
        const auto& w = weights[i];
        const auto m = mixture(w, eta, eta_c);
        out.value += y2[k] ? std::log(m.success) : std::log(m.failure);
        grad_eta += residual_factor(y2[k], m) * w;
        hess_eta -= curvature_factor(y2[k], m) * (w * w.transpose());
    }
    out.gradient = a.cwiseProduct(grad_eta);
    out.hessian = a.asDiagonal() * hess_eta * a.asDiagonal();
    out.hessian.diagonal() += b.cwiseProduct(grad_eta);
    return out;
}

// Per-subject score d_i * d l2i / d beta.
inline Vector4d score2_subject(const Vector4d& beta, const WeightVector& w, int y2, int d) {
    if (!d) return Vector4d::Zero();
    const Vector4d eta = expit4(beta);
    const Vector4d eta_c = expit4(-beta);
    const auto m = mixture(w, eta, eta_c);
    return residual_factor(y2, m) * eta.cwiseProduct(eta_c).cwiseProduct(w);
}

inline double causal_delta(const Vector4d& beta) { return beta[2] - beta[1]; }

struct CausalFit {
    Vector4d beta = Vector4d::Zero();
    Vector4d eta = Vector4d::Zero();
    double delta = 0.0;
    int n_discordant = 0;
    NewtonResult newton;
    std::array<bool, 4> boundary_flags{};
    std::vector<WeightVector> weights;

    // delta is reported only when neither complier effect ran off to the boundary.
    bool delta_estimable() const { return !boundary_flags[1] && !boundary_flags[2]; }
};

inline constexpr double kBoundaryBeta = 15.0;

inline void require_discordant_patterns(const Observations& obs) {
    std::array<int, 4> counts{};  // indexed by the beta component each pattern informs
    for (Eigen::Index i = 0; i < obs.size(); ++i) {
        if (!obs.d[i]) continue;
        const int z = obs.z[i], x = obs.x[i];
        if (z == 1 && x == 0) ++counts[0];
        else if (z == 0 && x == 0) ++counts[1];
        else if (z == 1 && x == 1) ++counts[2];
        else ++counts[3];
    }
    static constexpr std::array<const char*, 4> cells{"z=1,x=0", "z=0,x=0", "z=1,x=1", "z=0,x=1"};
    for (std::size_t h = 0; h < 4; ++h)
        if (counts[h] == 0)
            throw IdentificationError("beta" + std::to_string(h) + " not identified: no discordant subjects with " +
                                      cells[h]);
}

inline CausalFit fit_step2(const Observations& obs, const ComplianceModelFit& step1,
                           const NewtonSettings& settings = {}) {
    require_discordant_patterns(obs);
    CausalFit fit;
    fit.weights = build_weights(obs, step1);
    fit.n_discordant = obs.d.sum();

    auto objective = [&](const VectorXd& theta) {
        const auto ev = grad2_hess2(Vector4d(theta), fit.weights, obs.y2, obs.d);
        return Evaluation{ev.value, ev.gradient, ev.hessian};
    };
    fit.newton = newton_maximize(objective, VectorXd::Zero(4), settings);
    if (!fit.newton.converged)
        throw ConvergenceError("causal model did not converge (gradient norm " +
                               std::to_string(fit.newton.gradient_norm) + " after " +
                               std::to_string(fit.newton.iterations) + " iterations)");
    fit.beta = fit.newton.argmax;
    fit.eta = expit4(fit.beta);
    fit.delta = causal_delta(fit.beta);
    for (int h = 0; h < 4; ++h) fit.boundary_flags[static_cast<std::size_t>(h)] = std::abs(fit.beta[h]) > kBoundaryBeta;
    return fit;
}

inline CausalFit fit_step2(const Dataset& data, const ComplianceModelFit& step1, const NewtonSettings& settings = {}) {
    return fit_step2(Observations(data), step1, settings);
}

}  // namespace cace
