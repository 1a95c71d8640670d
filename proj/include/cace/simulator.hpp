#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cace/compliance.hpp"
#include "cace/errors.hpp"
#include "cace/model.hpp"
#include "cace/numerics.hpp"

namespace cace {

// SplitMix64: small, seedable, and splittable by hashing a child index into the
// state. Every stream used by the simulator derives from one master seed.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

    SplitMix64 split(std::uint64_t index) const {
        SplitMix64 child(state_ ^ (0xD1B54A32D192ED03ULL * (index + 1)));
        child.next();
        return SplitMix64(child.next());
    }

private:
    std::uint64_t state_;
};

// Generative model: (U, V) standard bivariate normal with correlation rho;
// logit p(Y1=1) = lambda(u, v); compliance class from a multinomial logit in
// (v, u) with compliers as reference; Z from a logit in v only; X fixed by
// (C, Z); logit p(Y2=1) = lambda(u, v) + t(c, x)' beta.
struct SimConfig {
    std::string label = "custom";
    int n = 1000;
    double rho = 0.0;
    std::array<double, 3> baseline_coeffs{0.0, 1.0, 0.0};      // intercept, u, v
    std::array<double, 2> assignment_coeffs{0.0, 0.0};          // intercept, v (logit of q(1|v))
    std::array<double, 3> compliance_coeffs_0{-1.0, 0.0, 0.0};  // never-taker: intercept, v, u
    std::array<double, 3> compliance_coeffs_2{-1.0, 0.0, 0.0};  // always-taker: intercept, v, u
    std::array<double, 4> beta_true{0.0, 0.0, 0.0, 0.0};
    std::uint64_t seed = 1;

    double delta_true() const { return beta_true[2] - beta_true[1]; }

    void validate() const {
        if (n < 1) throw ValidationError("simulation size n must be >= 1");
        if (!(rho >= -1.0 && rho <= 1.0)) throw ValidationError("rho must lie in [-1, 1]");
    }
};

struct SimulatedDataset {
    Dataset dataset;
    std::vector<double> latent_u;
    std::vector<ComplianceClass> true_class;
};

inline double sim_lambda(const SimConfig& c, double u, double v) {
    return c.baseline_coeffs[0] + c.baseline_coeffs[1] * u + c.baseline_coeffs[2] * v;
}

inline ClassProbabilities sim_class_probabilities(const SimConfig& c, double u, double v) {
    const auto& a0 = c.compliance_coeffs_0;
    const auto& a2 = c.compliance_coeffs_2;
    return class_probabilities_from_scores(a0[0] + a0[1] * v + a0[2] * u, a2[0] + a2[1] * v + a2[2] * u);
}

inline int received_treatment(ComplianceClass c, int z) {
    switch (c) {
        case ComplianceClass::NeverTaker: return 0;
        case ComplianceClass::AlwaysTaker: return 1;
        case ComplianceClass::Complier: return z;
    }
    return z;
}

// Each subject consumes exactly six uniforms from its own stream.
inline SimulatedDataset sample(const SimConfig& config) {
    config.validate();
    const SplitMix64 master(config.seed);
    const Vector4d beta(config.beta_true[0], config.beta_true[1], config.beta_true[2], config.beta_true[3]);
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - config.rho * config.rho));

    std::vector<SubjectRecord> records;
    std::vector<double> latent_u;
    std::vector<ComplianceClass> classes;
    records.reserve(static_cast<std::size_t>(config.n));
    for (int i = 0; i < config.n; ++i) {
        auto rng = master.split(static_cast<std::uint64_t>(i));
        const double r = std::sqrt(-2.0 * std::log(rng.uniform()));
        const double angle = 2.0 * std::numbers::pi * rng.uniform();
        const double e1 = r * std::cos(angle), e2 = r * std::sin(angle);
        const double u = e1;
        const double v = config.rho * e1 + rho_c * e2;

        const double lambda = sim_lambda(config, u, v);
        const int y1 = rng.uniform() < expit(lambda) ? 1 : 0;

        const auto cp = sim_class_probabilities(config, u, v);
        const double uc = rng.uniform();
        const auto cls = uc < cp.pi0 ? ComplianceClass::NeverTaker
                         : uc < cp.pi0 + cp.pi1 ? ComplianceClass::Complier
                                                : ComplianceClass::AlwaysTaker;

        const double q1 = expit(config.assignment_coeffs[0] + config.assignment_coeffs[1] * v);
        const int z = rng.uniform() < q1 ? 1 : 0;
        const int x = received_treatment(cls, z);
        const int y2 = rng.uniform() < expit(lambda + t_vector(cls, x).dot(beta)) ? 1 : 0;

        records.push_back({std::to_string(i + 1), y1, y2, z, x, {v}});
        latent_u.push_back(u);
        classes.push_back(cls);
    }
    return {Dataset(std::move(records), {"v"}), std::move(latent_u), std::move(classes)};
}

// Presets:
//   consistent   beta = (1,1,2,2): control effect shared by never-takers and
//                compliers, treatment effect shared by compliers and
//                always-takers; always-takers load on U.
//   null         beta = (1,1,1,1), no complier effect.
//   misspecified beta = (1.5,0.5,1,2) with U loadings in both compliance
//                logits; the pseudo-likelihood limit differs from delta.
inline SimConfig scenario(const std::string& name) {
    SimConfig c;
    c.label = name;
    c.n = 5000;
    c.rho = 0.3;
    c.baseline_coeffs = {-0.5, 1.0, 0.5};
    c.assignment_coeffs = {0.0, 0.0};
    c.compliance_coeffs_0 = {-1.2, 0.6, 0.0};
    c.compliance_coeffs_2 = {-1.5, -0.5, 0.8};
    if (name == "consistent") {
        c.beta_true = {1.0, 1.0, 2.0, 2.0};
    } else if (name == "null") {
        c.beta_true = {1.0, 1.0, 1.0, 1.0};
    } else if (name == "misspecified") {
        c.compliance_coeffs_0 = {-1.2, 0.6, -0.8};
        c.beta_true = {1.5, 0.5, 1.0, 2.0};
    } else {
        throw ValidationError("unknown scenario '" + name + "' (expected consistent, null, misspecified)");
    }
    return c;
}

}  // namespace cace
