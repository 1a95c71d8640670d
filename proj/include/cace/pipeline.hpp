#pragma once

#include <array>
#include <string>

#include "cace/baselines.hpp"
#include "cace/causal.hpp"
#include "cace/compliance.hpp"
#include "cace/model.hpp"
#include "cace/variance.hpp"

namespace cace {

struct TwoStepFit {
    ComplianceModelFit step1;
    CausalFit step2;
    SandwichCovariance covariance;
    std::vector<WaldRow> rows;  // stacked parameters, then delta

    const WaldRow& delta_row() const { return rows.back(); }
};

inline TwoStepFit fit_two_step(const Dataset& data, const DesignSpec& spec, const NewtonSettings& settings = {}) {
    const Observations obs(data);
    TwoStepFit out;
    out.step1 = fit_step1(data, spec, settings);
    out.step2 = fit_step2(obs, out.step1, settings);
    out.covariance = sandwich(out.step1, out.step2, obs);
    out.rows = wald_table(stacked_estimates(out.step1, out.step2), out.covariance);
    return out;
}

}  // namespace cace
