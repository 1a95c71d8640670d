#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cace/baselines.hpp"
#include "cace/model.hpp"
#include "cace/numerics.hpp"
#include "cace/pipeline.hpp"
#include "cace/variance.hpp"

namespace cace {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kReportSchemaVersion = 1;

inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct BaselineRow {
    std::string kind;
    WaldRow row;
    int n_used = 0;
    bool boundary = false;

    friend bool operator==(const BaselineRow&, const BaselineRow&) = default;
};

struct Diagnostics {
    int n = 0;
    int n_discordant = 0;
    int step1_iterations = 0;
    double step1_gradient_norm = 0.0;
    double step1_loglik = 0.0;
    double step1_bic = 0.0;
    int step2_iterations = 0;
    double step2_gradient_norm = 0.0;
    double step2_loglik = 0.0;
    std::array<bool, 4> boundary_flags{};
    bool delta_estimable = true;
    double sigma_symmetry_defect = 0.0;
    double sigma_min_eigenvalue = 0.0;

    friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

struct Provenance {
    std::string input_digest;
    std::string design;
    int max_iterations = 0;
    double gradient_tolerance = 0.0;
    std::string covariance_form = "H^-1 K H^-T";
    std::string baseline_se = "model-based (inverse observed information)";
    std::string version = kVersion;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct EstimationReport {
    int schema_version = kReportSchemaVersion;
    std::vector<WaldRow> never_taker_rows;   // alpha0
    std::vector<WaldRow> always_taker_rows;  // alpha2
    std::vector<WaldRow> causal_rows;        // beta0..beta3
    WaldRow delta;
    std::optional<WaldRow> delta_no_covariates;
    std::vector<BaselineRow> baselines;
    Diagnostics diagnostics;
    Provenance provenance;
    std::vector<std::string> warnings;

    friend bool operator==(const EstimationReport&, const EstimationReport&) = default;
};

// NaN marks a non-estimable quantity.
inline WaldRow non_estimable(std::string label) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    return {std::move(label), nan, nan, nan, nan};
}

struct EstimateOptions {
    DesignSpec spec = DesignSpec::intercept_only();
    NewtonSettings settings;
    std::string input_digest;
    // Also fit the intercept-only compliance model and report its delta.
    bool include_no_covariate_variant = true;
};

inline EstimationReport build_report(const Dataset& data, const EstimateOptions& opt) {
    const TwoStepFit fit = fit_two_step(data, opt.spec, opt.settings);
    const auto p = static_cast<std::size_t>(fit.step1.dim());

    EstimationReport rep;
    for (std::size_t j = 0; j < p; ++j) rep.never_taker_rows.push_back(fit.rows[j]);
    for (std::size_t j = 0; j < p; ++j) rep.always_taker_rows.push_back(fit.rows[p + j]);
    for (std::size_t h = 0; h < 4; ++h) rep.causal_rows.push_back(fit.rows[2 * p + h]);
    rep.delta = fit.step2.delta_estimable() ? fit.delta_row() : non_estimable("delta");
    if (!fit.step2.delta_estimable())
        rep.warnings.emplace_back("a complier effect lies on the boundary; delta is not estimable");
    for (std::size_t h = 0; h < 4; ++h)
        if (fit.step2.boundary_flags[h])
            rep.warnings.push_back("beta" + std::to_string(h) + " diverged (|beta| > 15): estimate does not exist");

    if (opt.include_no_covariate_variant && !(opt.spec == DesignSpec::intercept_only())) {
        try {
            const auto plain = fit_two_step(data, DesignSpec::intercept_only(), opt.settings);
            auto row = plain.step2.delta_estimable() ? plain.delta_row() : non_estimable("delta");
            row.label = "delta (no covariates)";
            rep.delta_no_covariates = row;
        } catch (const std::runtime_error& e) {
            rep.warnings.push_back(std::string("intercept-only variant failed: ") + e.what());
        }
    }

    for (const auto& b : run_baselines(data, opt.settings)) {
        BaselineRow row;
        row.kind = to_string(b.kind);
        row.row = b.boundary ? non_estimable(row.kind) : WaldRow{row.kind, b.delta_hat, b.std_err, b.t_statistic, b.p_value};
        row.n_used = b.n_used;
        row.boundary = b.boundary;
        rep.baselines.push_back(row);
    }

    auto& dg = rep.diagnostics;
    dg.n = static_cast<int>(data.size());
    dg.n_discordant = fit.step2.n_discordant;
    dg.step1_iterations = fit.step1.newton.iterations;
    dg.step1_gradient_norm = fit.step1.newton.gradient_norm;
    dg.step1_loglik = fit.step1.loglik;
    dg.step1_bic = fit.step1.bic;
    dg.step2_iterations = fit.step2.newton.iterations;
    dg.step2_gradient_norm = fit.step2.newton.gradient_norm;
    dg.step2_loglik = fit.step2.newton.objective;
    dg.boundary_flags = fit.step2.boundary_flags;
    dg.delta_estimable = fit.step2.delta_estimable();
    dg.sigma_symmetry_defect = symmetry_defect(fit.covariance.sigma);
    dg.sigma_min_eigenvalue = min_eigenvalue(fit.covariance.sigma);

    rep.provenance.input_digest = opt.input_digest;
    rep.provenance.design = opt.spec.describe();
    rep.provenance.max_iterations = opt.settings.max_iterations;
    rep.provenance.gradient_tolerance = opt.settings.gradient_tolerance;
    return rep;
}

// ---------------------------------------------------------------------------
// Structured (JSON) form
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json number(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

inline double number_from(const nlohmann::ordered_json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const WaldRow& r) {
    return {{"label", r.label},
            {"estimate", detail::number(r.estimate)},
            {"std_err", detail::number(r.std_err)},
            {"t_statistic", detail::number(r.t_statistic)},
            {"p_value", detail::number(r.p_value)}};
}

inline WaldRow wald_row_from_json(const nlohmann::ordered_json& j) {
    return {j.at("label").get<std::string>(), detail::number_from(j.at("estimate")),
            detail::number_from(j.at("std_err")), detail::number_from(j.at("t_statistic")),
            detail::number_from(j.at("p_value"))};
}

inline nlohmann::ordered_json to_json(const EstimationReport& r) {
    using nlohmann::ordered_json;
    auto rows = [](const std::vector<WaldRow>& v) {
        ordered_json a = ordered_json::array();
        for (const auto& x : v) a.push_back(to_json(x));
        return a;
    };
    ordered_json baselines = ordered_json::array();
    for (const auto& b : r.baselines)
        baselines.push_back({{"kind", b.kind}, {"row", to_json(b.row)}, {"n_used", b.n_used}, {"boundary", b.boundary}});
    const auto& d = r.diagnostics;
    ordered_json j;
    j["schema"] = "cace.estimation_report";
    j["schema_version"] = r.schema_version;
    j["compliance"] = {{"never_taker", rows(r.never_taker_rows)}, {"always_taker", rows(r.always_taker_rows)}};
    j["causal"] = rows(r.causal_rows);
    j["delta"] = to_json(r.delta);
    j["delta_no_covariates"] = r.delta_no_covariates ? to_json(*r.delta_no_covariates) : ordered_json(nullptr);
    j["baselines"] = baselines;
    j["diagnostics"] = {{"n", d.n},
                        {"n_discordant", d.n_discordant},
                        {"step1_iterations", d.step1_iterations},
                        {"step1_gradient_norm", d.step1_gradient_norm},
                        {"step1_loglik", d.step1_loglik},
                        {"step1_bic", d.step1_bic},
                        {"step2_iterations", d.step2_iterations},
                        {"step2_gradient_norm", d.step2_gradient_norm},
                        {"step2_loglik", d.step2_loglik},
                        {"boundary_flags", d.boundary_flags},
                        {"delta_estimable", d.delta_estimable},
                        {"sigma_symmetry_defect", d.sigma_symmetry_defect},
                        {"sigma_min_eigenvalue", d.sigma_min_eigenvalue}};
    const auto& p = r.provenance;
    j["provenance"] = {{"input_digest", p.input_digest},
                       {"design", p.design},
                       {"max_iterations", p.max_iterations},
                       {"gradient_tolerance", p.gradient_tolerance},
                       {"covariance_form", p.covariance_form},
                       {"baseline_se", p.baseline_se},
                       {"version", p.version}};
    j["warnings"] = r.warnings;
    return j;
}

inline EstimationReport report_from_json(const nlohmann::ordered_json& j) {
    if (j.at("schema").get<std::string>() != "cace.estimation_report")
        throw ValidationError("not an estimation report document");
    EstimationReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion)
        throw ValidationError("unsupported report schema version " + std::to_string(r.schema_version));
    for (const auto& x : j.at("compliance").at("never_taker")) r.never_taker_rows.push_back(wald_row_from_json(x));
    for (const auto& x : j.at("compliance").at("always_taker")) r.always_taker_rows.push_back(wald_row_from_json(x));
    for (const auto& x : j.at("causal")) r.causal_rows.push_back(wald_row_from_json(x));
    r.delta = wald_row_from_json(j.at("delta"));
    if (!j.at("delta_no_covariates").is_null()) r.delta_no_covariates = wald_row_from_json(j.at("delta_no_covariates"));
    for (const auto& b : j.at("baselines"))
        r.baselines.push_back({b.at("kind").get<std::string>(), wald_row_from_json(b.at("row")),
                               b.at("n_used").get<int>(), b.at("boundary").get<bool>()});
    const auto& d = j.at("diagnostics");
    auto& dg = r.diagnostics;
    dg.n = d.at("n").get<int>();
    dg.n_discordant = d.at("n_discordant").get<int>();
    dg.step1_iterations = d.at("step1_iterations").get<int>();
    dg.step1_gradient_norm = d.at("step1_gradient_norm").get<double>();
    dg.step1_loglik = d.at("step1_loglik").get<double>();
    dg.step1_bic = d.at("step1_bic").get<double>();
    dg.step2_iterations = d.at("step2_iterations").get<int>();
    dg.step2_gradient_norm = d.at("step2_gradient_norm").get<double>();
    dg.step2_loglik = d.at("step2_loglik").get<double>();
    dg.boundary_flags = d.at("boundary_flags").get<std::array<bool, 4>>();
    dg.delta_estimable = d.at("delta_estimable").get<bool>();
    dg.sigma_symmetry_defect = d.at("sigma_symmetry_defect").get<double>();
    dg.sigma_min_eigenvalue = d.at("sigma_min_eigenvalue").get<double>();
    const auto& p = j.at("provenance");
    r.provenance.input_digest = p.at("input_digest").get<std::string>();
    r.provenance.design = p.at("design").get<std::string>();
    r.provenance.max_iterations = p.at("max_iterations").get<int>();
    r.provenance.gradient_tolerance = p.at("gradient_tolerance").get<double>();
    r.provenance.covariance_form = p.at("covariance_form").get<std::string>();
    r.provenance.baseline_se = p.at("baseline_se").get<std::string>();
    r.provenance.version = p.at("version").get<std::string>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

// ---------------------------------------------------------------------------
// Human-readable tables (three decimals)
// ---------------------------------------------------------------------------

inline std::string fixed3(double v) {
    if (std::isnan(v)) return "n.e.";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    if (std::string(buf) == "-0.000") return "0.000";
    return buf;
}

inline std::string format_p(double p) {
    if (std::isnan(p)) return "n.e.";
    if (p < 0.001) return "<0.001";
    return fixed3(p);
}

inline void render_rows(std::ostream& out, const std::string& title, const std::vector<WaldRow>& rows) {
    std::size_t width = 24;
    for (const auto& r : rows) width = std::max(width, r.label.size() + 2);
    char line[256];
    out << title << '\n';
    std::snprintf(line, sizeof line, "%-*s %10s %10s %12s %9s\n", static_cast<int>(width), "Estimator", "Value",
                  "Std. Err.", "t-statistic", "p-value");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-*s %10s %10s %12s %9s\n", static_cast<int>(width), r.label.c_str(),
                      fixed3(r.estimate).c_str(), fixed3(r.std_err).c_str(), fixed3(r.t_statistic).c_str(),
                      format_p(r.p_value).c_str());
        out << line;
    }
    out << '\n';
}

inline std::string render_table(const EstimationReport& r) {
    std::ostringstream out;
    render_rows(out, "Parameter estimates for probability of being never-taker", r.never_taker_rows);
    render_rows(out, "Parameter estimates for probability of being always-taker", r.always_taker_rows);
    render_rows(out, "Estimates of the causal parameters", r.causal_rows);
    std::vector<WaldRow> effect{r.delta};
    effect.front().label = "delta (proposed method)";
    if (r.delta_no_covariates) effect.push_back(*r.delta_no_covariates);
    for (const auto& b : r.baselines) {
        auto row = b.row;
        row.label = "delta " + b.kind;
        effect.push_back(row);
    }
    render_rows(out, "Estimates of the causal effect for compliers", effect);
    const auto& d = r.diagnostics;
    out << "n = " << d.n << ", discordant = " << d.n_discordant << ", design: " << r.provenance.design << '\n';
    out << "step 1: " << d.step1_iterations << " iterations, loglik " << fixed3(d.step1_loglik) << ", BIC "
        << fixed3(d.step1_bic) << '\n';
    out << "step 2: " << d.step2_iterations << " iterations, loglik " << fixed3(d.step2_loglik) << '\n';
    out << "covariance: " << r.provenance.covariance_form << "; baseline SEs " << r.provenance.baseline_se << '\n';
    for (const auto& w : r.warnings) out << "warning: " << w << '\n';
    return out.str();
}

}  // namespace cace
