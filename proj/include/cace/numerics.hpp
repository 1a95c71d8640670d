#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <span>

#include <Eigen/Dense>

#include "cace/errors.hpp"

namespace cace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

inline double expit(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
inline double log1pexp(double t) {
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

inline double log_sum_exp(std::span<const double> args) {
    const double m = *std::max_element(args.begin(), args.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double a : args) s += std::exp(a - m);
    return m + std::log(s);
}

inline double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

// Two-sided p-value against the standard normal reference.
inline double two_sided_p(double t) { return std::erfc(std::abs(t) / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline MatrixXd solve_linear(const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != a.cols()) throw SingularMatrixError("solve_linear: matrix is not square");
    if (a.rows() != b.rows()) throw SingularMatrixError("solve_linear: dimension mismatch");
    if (!a.allFinite()) throw SingularMatrixError("solve_linear: non-finite matrix");
    Eigen::FullPivLU<MatrixXd> lu(a);
    if (!lu.isInvertible()) throw SingularMatrixError("solve_linear: matrix is singular to working precision");
    return lu.solve(b);
}

inline double symmetry_defect(const MatrixXd& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); }

inline double min_eigenvalue(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Damped Newton-Raphson maximizer
// ---------------------------------------------------------------------------

struct NewtonSettings {
    int max_iterations = 100;
    double gradient_tolerance = 1e-8;
    int step_halving_max = 30;
    double ridge_floor = 1e-10;
};

struct NewtonResult {
    VectorXd argmax;
    double objective = 0.0;
    double gradient_norm = 0.0;  // max-abs norm
    int iterations = 0;
    bool converged = false;
    MatrixXd hessian_at_optimum;
};

struct Evaluation {
    double value = 0.0;
    VectorXd gradient;
    MatrixXd hessian;
};

template <typename F>
concept TwiceDifferentiable = requires(const F& f, const VectorXd& theta) {
    { f(theta) } -> std::convertible_to<Evaluation>;
};

namespace detail {

// Ascent direction from (-H + ridge I) d = g, growing the ridge until -H + ridge I
// is positive definite.
inline VectorXd ascent_direction(const Evaluation& ev, double ridge_floor) {
    const auto p = ev.gradient.size();
    MatrixXd neg_h = -ev.hessian;
    Eigen::LLT<MatrixXd> llt(neg_h);
    if (llt.info() == Eigen::Success && neg_h.allFinite()) {
        VectorXd d = llt.solve(ev.gradient);
        if (d.allFinite()) return d;
    }
    const double scale = std::max(1.0, neg_h.cwiseAbs().maxCoeff());
    double ridge = std::max(ridge_floor, 1e-12 * scale);
    for (int k = 0; k < 60; ++k, ridge *= 10.0) {
        MatrixXd m = neg_h + ridge * MatrixXd::Identity(p, p);
        Eigen::LLT<MatrixXd> reg(m);
        if (reg.info() == Eigen::Success) {
            VectorXd d = reg.solve(ev.gradient);
            if (d.allFinite()) return d;
        }
    }
    // Fall back to plain gradient ascent scaled by the curvature magnitude.
    return ev.gradient / scale;
}

}  // namespace detail

template <TwiceDifferentiable F>
NewtonResult newton_maximize(const F& objective, const VectorXd& start, const NewtonSettings& settings = {}) {
    NewtonResult res;
    VectorXd theta = start;
    Evaluation ev = objective(theta);
    if (!std::isfinite(ev.value)) throw ConvergenceError("objective is not finite at the start point");

    auto gnorm = [](const Evaluation& e) { return e.gradient.size() ? e.gradient.cwiseAbs().maxCoeff() : 0.0; };
    constexpr double kEps = std::numeric_limits<double>::epsilon();

    int iter = 0;
    for (; iter < settings.max_iterations; ++iter) {
        if (gnorm(ev) <= settings.gradient_tolerance) break;
        const VectorXd dir = detail::ascent_direction(ev, settings.ridge_floor);

        bool accepted = false;
        double scale = 1.0;
        for (int h = 0; h <= settings.step_halving_max; ++h, scale *= 0.5) {
            VectorXd cand = theta + scale * dir;
            Evaluation next = objective(cand);
            if (!std::isfinite(next.value)) continue;
            // Ties at rounding level are accepted only when they reduce the gradient.
            const double slack = 64.0 * kEps * (1.0 + std::abs(ev.value));
            if (next.value > ev.value || (next.value >= ev.value - slack && gnorm(next) < gnorm(ev))) {
                theta = std::move(cand);
                ev = std::move(next);
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }

    res.argmax = theta;
    res.objective = ev.value;
    res.gradient_norm = gnorm(ev);
    res.iterations = iter;
    res.converged = res.gradient_norm <= settings.gradient_tolerance;
    res.hessian_at_optimum = ev.hessian;
    return res;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

// Central-difference Jacobian of a vector-valued map.
template <typename F>
MatrixXd numeric_jacobian(const F& f, const VectorXd& point, double step) {
    const VectorXd f0 = f(point);
    MatrixXd jac(f0.size(), point.size());
    VectorXd p = point;
    for (Eigen::Index j = 0; j < point.size(); ++j) {
        const double orig = p[j];
        p[j] = orig + step;
        const VectorXd up = f(p);
        p[j] = orig - step;
        const VectorXd down = f(p);
        p[j] = orig;
        jac.col(j) = (up - down) / (2.0 * step);
    }
    return jac;
}

template <typename F>
VectorXd numeric_gradient(const F& f, const VectorXd& point, double step) {
    auto wrapped = [&](const VectorXd& p) {
        VectorXd v(1);
        v[0] = f(p);
        return v;
    };
    return numeric_jacobian(wrapped, point, step).row(0).transpose();
}

// max |analytic - numeric| / max(1, |analytic|), elementwise.
inline double max_relative_error(const MatrixXd& analytic, const MatrixXd& numeric) {
    if (analytic.size() == 0) return 0.0;
    const MatrixXd denom = analytic.cwiseAbs().cwiseMax(1.0);
    return ((analytic - numeric).cwiseAbs().cwiseQuotient(denom)).maxCoeff();
}

// Compares the analytic gradient of f (any result with .value and .gradient)
// against central differences of its value.
template <typename F>
double finite_diff_check(const F& f, const VectorXd& point, double step) {
    const VectorXd analytic = f(point).gradient;
    const VectorXd numeric = numeric_gradient([&](const VectorXd& p) { return f(p).value; },
                                              point, step);
    return max_relative_error(analytic, numeric);
}

}  // namespace cace
