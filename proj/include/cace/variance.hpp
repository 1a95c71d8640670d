#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cace/causal.hpp"
#include "cace/compliance.hpp"
#include "cace/errors.hpp"
#include "cace/numerics.hpp"

// Sandwich covariance for the stacked two-step estimator
// theta = (alpha0, alpha2, beta). H is block lower-triangular because the
// step-1 scores do not depend on beta.
namespace cace {

using Matrix4X = Eigen::Matrix<double, 4, Eigen::Dynamic>;

struct WeightJacobian {
    Matrix4X d_alpha0;
    Matrix4X d_alpha2;
};

template <typename Row>
WeightJacobian dw_dalpha(int z, int x, const ClassProbabilities& cp, const Row& g) {
    const auto p = g.size();
    WeightJacobian out{Matrix4X::Zero(4, p), Matrix4X::Zero(4, p)};
    if (z == 0 && x == 0) {
        const double v = cp.pi_star_01_0 * cp.pi_star_01_1;
        out.d_alpha0.row(0) = v * g;
        out.d_alpha0.row(1) = -v * g;
    } else if (z == 1 && x == 1) {
        const double v = cp.pi_star_12_1 * cp.pi_star_12_2;
        out.d_alpha2.row(2) = -v * g;
        out.d_alpha2.row(3) = v * g;
    }
    return out;
}

// d^2 l2 / d beta d alpha' as a 4 x 2p matrix ([alpha0 block | alpha2 block]).
// The residual factor r depends on alpha through w'eta, so each subject
// contributes (r I - c w eta') dw/dalpha', with c = -dr/d(w'eta).
inline Matrix4X cross_block(const Vector4d& beta, const ComplianceModelFit& step1, const std::vector<WeightVector>& weights,
                            const Observations& obs) {
    const auto p = step1.dim();
    const Vector4d eta = expit4(beta);
    const Vector4d eta_c = expit4(-beta);
    Matrix4X acc = Matrix4X::Zero(4, 2 * p);
    for (Eigen::Index i = 0; i < obs.size(); ++i) {
        if (!obs.d[i] || obs.z[i] != obs.x[i]) continue;
        const auto k = static_cast<std::size_t>(i);
        const auto m = mixture(weights[k], eta, eta_c);
        const Matrix4d factor = residual_factor(obs.y2[i], m) * Matrix4d::Identity() -
                                curvature_factor(obs.y2[i], m) * weights[k] * eta.transpose();
        const auto jac = dw_dalpha(obs.z[i], obs.x[i], step1.per_subject[k], step1.design.g.row(i));
        acc.leftCols(p) += factor * jac.d_alpha0;
        acc.rightCols(p) += factor * jac.d_alpha2;
    }
    const Vector4d a = eta.cwiseProduct(eta_c);
    return a.asDiagonal() * acc;
}

inline MatrixXd assemble_H(const ComplianceModelFit& step1, const CausalFit& step2, const Observations& obs) {
    const auto p = step1.dim();
    if (step1.design.g.rows() != obs.size() || static_cast<Eigen::Index>(step2.weights.size()) != obs.size())
        throw ValidationError("assemble_H: fits and observations disagree on the number of subjects");
    const auto q = 2 * p + 4;
    MatrixXd h = MatrixXd::Zero(q, q);
    h.topLeftCorner(2 * p, 2 * p) = hess1(step1.params, step1.design.g, obs.z, obs.x);
    h.bottomLeftCorner(4, 2 * p) = cross_block(step2.beta, step1, step2.weights, obs);
    h.bottomRightCorner(4, 4) = grad2_hess2(step2.beta, step2.weights, obs.y2, obs.d).hessian;
    return h;
}

// Stacked per-subject score (d l1i/d alpha0, d l1i/d alpha2, d_i d l2i/d beta).
inline VectorXd stacked_score(const ComplianceModelFit& step1, const CausalFit& step2, const Observations& obs,
                              Eigen::Index i) {
    const auto p = step1.dim();
    const auto k = static_cast<std::size_t>(i);
    VectorXd s(2 * p + 4);
    s.head(2 * p) = score1_subject(step1.per_subject[k], step1.design.g.row(i), obs.z[i], obs.x[i]);
    s.tail(4) = score2_subject(step2.beta, step2.weights[k], obs.y2[i], obs.d[i]);
    return s;
}

inline MatrixXd assemble_K(const ComplianceModelFit& step1, const CausalFit& step2, const Observations& obs) {
    const auto q = 2 * step1.dim() + 4;
    MatrixXd k = MatrixXd::Zero(q, q);
    for (Eigen::Index i = 0; i < obs.size(); ++i) {
        const VectorXd s = stacked_score(step1, step2, obs, i);
        k.selfadjointView<Eigen::Lower>().rankUpdate(s);
    }
    return k.selfadjointView<Eigen::Lower>();
}

struct SandwichCovariance {
    MatrixXd sigma;
    std::vector<std::string> parameter_labels;
    VectorXd se;
    double delta_se = 0.0;

    Eigen::Index beta_offset() const { return sigma.rows() - 4; }
};

inline std::vector<std::string> parameter_labels(const std::vector<std::string>& design_labels) {
    std::vector<std::string> out;
    for (const auto& l : design_labels) out.push_back("alpha0[" + l + "]");
    for (const auto& l : design_labels) out.push_back("alpha2[" + l + "]");
    for (int h = 0; h < 4; ++h) out.push_back("beta" + std::to_string(h));
    return out;
}

// H^{-1} K H^{-T}, symmetrized.
inline MatrixXd sandwich_matrix(const MatrixXd& h, const MatrixXd& k) {
    const MatrixXd hinv_k = solve_linear(h, k);
    const MatrixXd sigma = solve_linear(h, hinv_k.transpose()).transpose();
    return 0.5 * (sigma + sigma.transpose());
}

inline double delta_variance(const MatrixXd& sigma) {
    const auto o = sigma.rows() - 4;
    return sigma(o + 1, o + 1) + sigma(o + 2, o + 2) - 2.0 * sigma(o + 1, o + 2);
}

inline SandwichCovariance sandwich(const ComplianceModelFit& step1, const CausalFit& step2, const Observations& obs) {
    SandwichCovariance out;
    out.sigma = sandwich_matrix(assemble_H(step1, step2, obs), assemble_K(step1, step2, obs));
    out.parameter_labels = parameter_labels(step1.design.labels);
    out.se = out.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.delta_se = std::sqrt(std::max(0.0, delta_variance(out.sigma)));
    return out;
}

struct WaldRow {
    std::string label;
    double estimate = 0.0;
    double std_err = 0.0;
    double t_statistic = 0.0;
    double p_value = 1.0;

    friend bool operator==(const WaldRow&, const WaldRow&) = default;
};

inline WaldRow wald_row(std::string label, double estimate, double std_err) {
    WaldRow r{std::move(label), estimate, std_err, 0.0, 1.0};
    r.t_statistic = estimate / std_err;
    if (estimate == 0.0) r.t_statistic = 0.0;
    r.p_value = two_sided_p(r.t_statistic);
    return r;
}

// One row per stacked parameter followed by the complier effect row.
inline std::vector<WaldRow> wald_table(const VectorXd& estimates, const SandwichCovariance& cov) {
    if (estimates.size() != cov.sigma.rows())
        throw ValidationError("wald_table: estimate vector does not match covariance dimension");
    std::vector<WaldRow> rows;
    for (Eigen::Index j = 0; j < estimates.size(); ++j)
        rows.push_back(wald_row(cov.parameter_labels[static_cast<std::size_t>(j)], estimates[j], cov.se[j]));
    const auto o = cov.beta_offset();
    rows.push_back(wald_row("delta", estimates[o + 2] - estimates[o + 1], cov.delta_se));
    return rows;
}

inline VectorXd stacked_estimates(const ComplianceModelFit& step1, const CausalFit& step2) {
    VectorXd theta(2 * step1.dim() + 4);
    theta << step1.params.alpha0, step1.params.alpha2, step2.beta;
    return theta;
}

}  // namespace cace
