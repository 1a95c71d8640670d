#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cace/errors.hpp"

namespace cace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::Vector4d;
using Eigen::Matrix4d;

// Latent attitude towards the assigned arm. Codes are the numeric class labels
// used throughout (weights, t-vectors, truth files).
enum class ComplianceClass : int { NeverTaker = 0, Complier = 1, AlwaysTaker = 2 };

inline const char* to_string(ComplianceClass c) {
    switch (c) {
        case ComplianceClass::NeverTaker: return "never-taker";
        case ComplianceClass::Complier: return "complier";
        case ComplianceClass::AlwaysTaker: return "always-taker";
    }
    return "?";
}

struct SubjectRecord {
    std::string id;
    int y1 = 0;  // pre-treatment outcome
    int y2 = 0;  // post-treatment outcome
    int z = 0;   // assigned arm, 1 = treatment
    int x = 0;   // received treatment
    std::vector<double> covariates;
};

class Dataset {
public:
    Dataset(std::vector<SubjectRecord> records, std::vector<std::string> covariate_names)
        : records_(std::move(records)), covariate_names_(std::move(covariate_names)) {
        if (records_.empty()) throw ValidationError("dataset has no records");
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& r = records_[i];
            if (r.covariates.size() != covariate_names_.size())
                throw ValidationError("record " + std::to_string(i) + " has " +
                                      std::to_string(r.covariates.size()) +
                                      " covariates, expected " +
                                      std::to_string(covariate_names_.size()));
            auto binary = [](int v) { return v == 0 || v == 1; };
            if (!binary(r.y1) || !binary(r.y2) || !binary(r.z) || !binary(r.x))
                throw ValidationError("record " + std::to_string(i) +
                                      " has a non-binary y1/y2/z/x value");
        }
    }

    std::size_t size() const { return records_.size(); }
    const std::vector<SubjectRecord>& records() const { return records_; }
    const SubjectRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }

    std::size_t covariate_index(const std::string& name) const {
        auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
        if (it == covariate_names_.end()) throw ValidationError("unknown covariate '" + name + "'");
        return static_cast<std::size_t>(it - covariate_names_.begin());
    }

    VectorXd column(std::size_t k) const {
        VectorXd out(size());
        for (std::size_t i = 0; i < size(); ++i) out[i] = records_[i].covariates[k];
        return out;
    }

    // Count of records in the (z, x) cell.
    std::size_t cell_count(int z, int x) const {
        return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [&](const auto& r) {
            return r.z == z && r.x == x;
        }));
    }

private:
    std::vector<SubjectRecord> records_;
    std::vector<std::string> covariate_names_;
};

inline int discordant(int y1, int y2) { return (y1 + y2 == 1) ? 1 : 0; }

// Indicator vector selecting the causal parameter that applies to a subject of
// class c receiving x. Pairs ruled out by the compliance mechanism (a
// never-taker treated, an always-taker untreated) map to the zero vector.
inline Vector4d t_vector(ComplianceClass c, int x) {
    const double xd = x ? 1.0 : 0.0;
    Vector4d t;
    t << (c == ComplianceClass::NeverTaker ? 1.0 - xd : 0.0),
         (c == ComplianceClass::Complier ? 1.0 - xd : 0.0),
         (c == ComplianceClass::Complier ? xd : 0.0),
         (c == ComplianceClass::AlwaysTaker ? xd : 0.0);
    return t;
}

// ---------------------------------------------------------------------------
// Covariate design g(v)
// ---------------------------------------------------------------------------

struct DesignTerm {
    enum class Kind { Intercept, Raw, QuartileDummies, Binary };
    Kind kind = Kind::Intercept;
    std::string name;
    int reference_quartile = 4;

    static DesignTerm intercept() { return {Kind::Intercept, "", 4}; }
    static DesignTerm raw(std::string n) { return {Kind::Raw, std::move(n), 4}; }
    static DesignTerm quartiles(std::string n, int ref = 4) { return {Kind::QuartileDummies, std::move(n), ref}; }
    static DesignTerm binary(std::string n) { return {Kind::Binary, std::move(n), 4}; }

    friend bool operator==(const DesignTerm&, const DesignTerm&) = default;
};

struct DesignSpec {
    std::vector<DesignTerm> terms;

    static DesignSpec intercept_only() { return {{DesignTerm::intercept()}}; }

    // Compact form used in reports, e.g. "1 + gi:quartiles(ref=4) + statin:binary".
    std::string describe() const {
        std::string out;
        for (const auto& t : terms) {
            if (!out.empty()) out += " + ";
            switch (t.kind) {
                case DesignTerm::Kind::Intercept: out += "1"; break;
                case DesignTerm::Kind::Raw: out += t.name; break;
                case DesignTerm::Kind::QuartileDummies:
                    out += t.name + ":quartiles(ref=" + std::to_string(t.reference_quartile) + ")";
                    break;
                case DesignTerm::Kind::Binary: out += t.name + ":binary"; break;
            }
        }
        return out;
    }

    friend bool operator==(const DesignSpec&, const DesignSpec&) = default;
};

struct Design {
    MatrixXd g;  // n x p
    std::vector<std::string> labels;

    Eigen::Index cols() const { return g.cols(); }
};

// Empirical quantile with linear interpolation between order statistics
// (position (n-1)*prob in the sorted sample).
inline double empirical_quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = prob * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

struct QuartileCuts {
    double q1, q2, q3;

    // 1-based quartile: value v lies in quartile q when cut_{q-1} < v <= cut_q.
    int quartile_of(double v) const {
        if (v <= q1) return 1;
        if (v <= q2) return 2;
        if (v <= q3) return 3;
        return 4;
    }
};

inline QuartileCuts quartile_cuts(const VectorXd& column) {
    std::vector<double> v(column.data(), column.data() + column.size());
    return {empirical_quantile(v, 0.25), empirical_quantile(v, 0.50), empirical_quantile(v, 0.75)};
}

inline Design build_design(const Dataset& data, const DesignSpec& spec) {
    const auto n = static_cast<Eigen::Index>(data.size());
    const auto intercepts = std::count_if(spec.terms.begin(), spec.terms.end(), [](const auto& t) {
        return t.kind == DesignTerm::Kind::Intercept;
    });
    if (intercepts != 1) throw ValidationError("design must contain exactly one intercept term");

    std::vector<VectorXd> cols;
    Design out;
    for (const auto& term : spec.terms) {
        switch (term.kind) {
            case DesignTerm::Kind::Intercept:
                cols.push_back(VectorXd::Ones(n));
                out.labels.emplace_back("(Intercept)");
                break;
            case DesignTerm::Kind::Raw:
                cols.push_back(data.column(data.covariate_index(term.name)));
                out.labels.push_back(term.name);
                break;
            case DesignTerm::Kind::Binary: {
                VectorXd c = data.column(data.covariate_index(term.name));
                for (Eigen::Index i = 0; i < n; ++i)
                    if (c[i] != 0.0 && c[i] != 1.0)
                        throw ValidationError("covariate '" + term.name + "' is not binary (row " +
                                              std::to_string(i) + ")");
                cols.push_back(std::move(c));
                out.labels.push_back(term.name);
                break;
            }
            case DesignTerm::Kind::QuartileDummies: {
                if (term.reference_quartile < 1 || term.reference_quartile > 4)
                    throw ValidationError("reference quartile must be 1..4");
                const VectorXd c = data.column(data.covariate_index(term.name));
                if (c.maxCoeff() == c.minCoeff())
                    throw ValidationError("covariate '" + term.name + "' is constant; cannot form quartiles");
                const auto cuts = quartile_cuts(c);
                for (int q = 1; q <= 4; ++q) {
                    if (q == term.reference_quartile) continue;
                    VectorXd d(n);
                    for (Eigen::Index i = 0; i < n; ++i) d[i] = cuts.quartile_of(c[i]) == q ? 1.0 : 0.0;
                    cols.push_back(std::move(d));
                    out.labels.push_back(term.name + ":q" + std::to_string(q));
                }
                break;
            }
        }
    }

    out.g.resize(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.g.col(static_cast<Eigen::Index>(j)) = cols[j];
    return out;
}

// Per-subject observation vectors pulled out of a Dataset once.
struct Observations {
    Eigen::VectorXi y1, y2, z, x, d;

    explicit Observations(const Dataset& data) {
        const auto n = static_cast<Eigen::Index>(data.size());
        y1.resize(n); y2.resize(n); z.resize(n); x.resize(n); d.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = data[static_cast<std::size_t>(i)];
            y1[i] = r.y1; y2[i] = r.y2; z[i] = r.z; x[i] = r.x;
            d[i] = discordant(r.y1, r.y2);
        }
    }

    Eigen::Index size() const { return z.size(); }
};

}  // namespace cace
