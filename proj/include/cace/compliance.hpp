#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cace/errors.hpp"
#include "cace/model.hpp"
#include "cace/numerics.hpp"

// Step 1: multinomial logit for membership in the never-taker / complier /
// always-taker subpopulations, with compliers as the reference category. The
// class is observed only through (z, x): z=1,x=0 identifies a never-taker,
// z=0,x=1 an always-taker, and the z=x cells are two-class mixtures.
namespace cace {

struct ComplianceParams {
    VectorXd alpha0;  // never-taker vs complier
    VectorXd alpha2;  // always-taker vs complier

    Eigen::Index dim() const { return alpha0.size(); }

    VectorXd stacked() const {
        VectorXd out(alpha0.size() + alpha2.size());
        out << alpha0, alpha2;
        return out;
    }

    static ComplianceParams from_stacked(const VectorXd& theta) {
        const auto p = theta.size() / 2;
        return {theta.head(p), theta.tail(p)};
    }

    static ComplianceParams zero(Eigen::Index p) { return {VectorXd::Zero(p), VectorXd::Zero(p)}; }
};

struct ClassProbabilities {
    double pi0 = 0, pi1 = 0, pi2 = 0;
    double pi_star_01_0 = 0, pi_star_01_1 = 0;  // class | class in {0,1}
    double pi_star_12_1 = 0, pi_star_12_2 = 0;  // class | class in {1,2}
    // log of the four cell probabilities entering the step-1 likelihood
    double log_pi01 = 0, log_pi2 = 0, log_pi0 = 0, log_pi12 = 0;
};

// Evaluated from the two linear predictors in log space; the conditional
// (ratio) probabilities reduce to logistic functions of a single predictor.
inline ClassProbabilities class_probabilities_from_scores(double s0, double s2) {
    const std::array<double, 3> scores{s0, 0.0, s2};
    const double log_norm = log_sum_exp(scores);
    ClassProbabilities cp;
    cp.log_pi0 = s0 - log_norm;
    cp.log_pi2 = s2 - log_norm;
    const double log_pi1 = -log_norm;
    cp.pi0 = std::exp(cp.log_pi0);
    cp.pi1 = std::exp(log_pi1);
    cp.pi2 = std::exp(cp.log_pi2);
    cp.log_pi01 = log1pexp(s0) - log_norm;
    cp.log_pi12 = log1pexp(s2) - log_norm;
    cp.pi_star_01_0 = expit(s0);
    cp.pi_star_01_1 = expit(-s0);
    cp.pi_star_12_2 = expit(s2);
    cp.pi_star_12_1 = expit(-s2);
    return cp;
}

template <typename Row>
ClassProbabilities class_probabilities(const ComplianceParams& params, const Row& g) {
    return class_probabilities_from_scores(g.dot(params.alpha0), g.dot(params.alpha2));
}

inline double loglik1_subject(const ClassProbabilities& cp, int z, int x) {
    if (z == 0 && x == 0) return cp.log_pi01;
    if (z == 0 && x == 1) return cp.log_pi2;
    if (z == 1 && x == 0) return cp.log_pi0;
    return cp.log_pi12;
}

// Coefficients (c0, c2) such that the subject score is (c0 g, c2 g).
inline std::pair<double, double> score1_coefficients(const ClassProbabilities& cp, int z, int x) {
    const double zd = z, xd = x;
    const double c0 = (1 - zd) * (1 - xd) * cp.pi_star_01_0 + zd * (1 - xd) - cp.pi0;
    const double c2 = zd * xd * cp.pi_star_12_2 + (1 - zd) * xd - cp.pi2;
    return {c0, c2};
}

// Per-subject score (d l1i / d alpha0, d l1i / d alpha2).
template <typename Row>
VectorXd score1_subject(const ClassProbabilities& cp, const Row& g, int z, int x) {
    const auto [c0, c2] = score1_coefficients(cp, z, x);
    VectorXd s(2 * g.size());
    s << c0 * g.transpose(), c2 * g.transpose();
    return s;
}

inline double loglik1(const ComplianceParams& params, const MatrixXd& design, const Eigen::VectorXi& z,
                      const Eigen::VectorXi& x) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < design.rows(); ++i)
        total += loglik1_subject(class_probabilities(params, design.row(i)), z[i], x[i]);
    return total;
}

inline VectorXd grad1(const ComplianceParams& params, const MatrixXd& design, const Eigen::VectorXi& z,
                      const Eigen::VectorXi& x) {
    const auto p = design.cols();
    VectorXd g = VectorXd::Zero(2 * p);
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const auto cp = class_probabilities(params, design.row(i));
        const auto [c0, c2] = score1_coefficients(cp, z[i], x[i]);
        g.head(p) += c0 * design.row(i).transpose();
        g.tail(p) += c2 * design.row(i).transpose();
    }
    return g;
}

inline MatrixXd hess1(const ComplianceParams& params, const MatrixXd& design, const Eigen::VectorXi& z,
                      const Eigen::VectorXi& x) {
    const auto p = design.cols();
    MatrixXd h = MatrixXd::Zero(2 * p, 2 * p);
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const auto cp = class_probabilities(params, design.row(i));
        const double zd = z[i], xd = x[i];
        const double w00 = (1 - zd) * (1 - xd) * cp.pi_star_01_0 * (1 - cp.pi_star_01_0) - cp.pi0 * (1 - cp.pi0);
        const double w02 = cp.pi0 * cp.pi2;
        const double w22 = zd * xd * cp.pi_star_12_2 * (1 - cp.pi_star_12_2) - cp.pi2 * (1 - cp.pi2);
        const MatrixXd ggt = design.row(i).transpose() * design.row(i);
        h.topLeftCorner(p, p) += w00 * ggt;
        h.topRightCorner(p, p) += w02 * ggt;
        h.bottomRightCorner(p, p) += w22 * ggt;
    }
    h.bottomLeftCorner(p, p) = h.topRightCorner(p, p).transpose();
    return h;
}

struct ComplianceModelFit {
    DesignSpec spec;
    Design design;
    ComplianceParams params;
    std::vector<ClassProbabilities> per_subject;
    double loglik = 0.0;
    double bic = 0.0;
    NewtonResult newton;

    Eigen::Index dim() const { return params.dim(); }
};

inline void require_compliance_cells(const Eigen::VectorXi& z, const Eigen::VectorXi& x) {
    std::array<std::size_t, 4> counts{};
    for (Eigen::Index i = 0; i < z.size(); ++i) ++counts[static_cast<std::size_t>(2 * z[i] + x[i])];
    static constexpr std::array<const char*, 4> names{
        "z=0,x=0 (control arm, untreated)", "z=0,x=1 (control arm, treated: always-takers)",
        "z=1,x=0 (treatment arm, untreated: never-takers)", "z=1,x=1 (treatment arm, treated)"};
    for (std::size_t c = 0; c < 4; ++c)
        if (counts[c] == 0)
            throw IdentificationError(std::string("compliance model not identified: no subjects in cell ") +
                                      names[c]);
}

inline ComplianceModelFit fit_step1(const Design& design, const Eigen::VectorXi& z, const Eigen::VectorXi& x,
                                    const NewtonSettings& settings = {}) {
    require_compliance_cells(z, x);
    const auto p = design.cols();
    auto objective = [&](const VectorXd& theta) {
        const auto params = ComplianceParams::from_stacked(theta);
        return Evaluation{loglik1(params, design.g, z, x), grad1(params, design.g, z, x),
                          hess1(params, design.g, z, x)};
    };

    ComplianceModelFit fit;
    fit.design = design;
    fit.newton = newton_maximize(objective, VectorXd::Zero(2 * p), settings);
    if (!fit.newton.converged)
        throw ConvergenceError("compliance model did not converge (gradient norm " +
                               std::to_string(fit.newton.gradient_norm) + " after " +
                               std::to_string(fit.newton.iterations) + " iterations)");
    fit.params = ComplianceParams::from_stacked(fit.newton.argmax);
    fit.loglik = fit.newton.objective;
    const auto n = static_cast<double>(design.g.rows());
    fit.bic = -2.0 * fit.loglik + static_cast<double>(2 * p) * std::log(n);
    fit.per_subject.reserve(static_cast<std::size_t>(design.g.rows()));
    for (Eigen::Index i = 0; i < design.g.rows(); ++i)
        fit.per_subject.push_back(class_probabilities(fit.params, design.g.row(i)));
    return fit;
}

inline ComplianceModelFit fit_step1(const Dataset& data, const DesignSpec& spec, const NewtonSettings& settings = {}) {
    const Observations obs(data);
    auto fit = fit_step1(build_design(data, spec), obs.z, obs.x, settings);
    fit.spec = spec;
    return fit;
}

struct BicSelection {
    struct Skipped {
        DesignSpec spec;
        std::string reason;
    };
    std::vector<ComplianceModelFit> ranked;  // ascending BIC
    std::vector<Skipped> skipped;
};

inline BicSelection bic_select(const Dataset& data, const std::vector<DesignSpec>& candidates,
                               const NewtonSettings& settings = {}) {
    if (candidates.empty()) throw ValidationError("no candidate designs supplied");
    BicSelection out;
    for (const auto& spec : candidates) {
        try {
            out.ranked.push_back(fit_step1(data, spec, settings));
        } catch (const IdentificationError& e) {
            out.skipped.push_back({spec, e.what()});
        } catch (const ConvergenceError& e) {
            out.skipped.push_back({spec, e.what()});
        } catch (const ValidationError& e) {
            out.skipped.push_back({spec, e.what()});
        }
    }
    if (out.ranked.empty()) throw IdentificationError("every candidate compliance design failed to fit");
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const auto& a, const auto& b) { return a.bic < b.bic; });
    return out;
}

}  // namespace cace
