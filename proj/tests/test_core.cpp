#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cace/model.hpp"
#include "cace/numerics.hpp"
#include "cace/simulator.hpp"
#include "test_support.hpp"

using namespace cace;
using cace::testing::random_dataset;

// ---------------------------------------------------------------------------
// model types
// ---------------------------------------------------------------------------

TEST(ComplianceClassTest, CodesMatchClassIndex) {
    EXPECT_EQ(static_cast<int>(ComplianceClass::NeverTaker), 0);
    EXPECT_EQ(static_cast<int>(ComplianceClass::Complier), 1);
    EXPECT_EQ(static_cast<int>(ComplianceClass::AlwaysTaker), 2);
}

TEST(TVectorTest, Examples) {
    EXPECT_EQ(t_vector(ComplianceClass::NeverTaker, 0), Vector4d(1, 0, 0, 0));
    EXPECT_EQ(t_vector(ComplianceClass::Complier, 1), Vector4d(0, 0, 1, 0));
    EXPECT_EQ(t_vector(ComplianceClass::NeverTaker, 1), Vector4d(0, 0, 0, 0));
    EXPECT_EQ(t_vector(ComplianceClass::Complier, 0), Vector4d(0, 1, 0, 0));
    EXPECT_EQ(t_vector(ComplianceClass::AlwaysTaker, 1), Vector4d(0, 0, 0, 1));
    EXPECT_EQ(t_vector(ComplianceClass::AlwaysTaker, 0), Vector4d(0, 0, 0, 0));
}

TEST(TVectorTest, ExactlyOneIndicatorForFeasiblePairs) {
    for (auto c : {ComplianceClass::NeverTaker, ComplianceClass::Complier, ComplianceClass::AlwaysTaker})
        for (int z = 0; z < 2; ++z) {
            const Vector4d t = t_vector(c, received_treatment(c, z));
            EXPECT_EQ(t.sum(), 1.0);
            EXPECT_EQ(t.maxCoeff(), 1.0);
        }
}

TEST(DiscordantTest, Examples) {
    EXPECT_EQ(discordant(1, 0), 1);
    EXPECT_EQ(discordant(0, 1), 1);
    EXPECT_EQ(discordant(0, 0), 0);
    EXPECT_EQ(discordant(1, 1), 0);
}

TEST(DatasetTest, RejectsEmptyAndMalformedRecords) {
    EXPECT_THROW(Dataset({}, {}), ValidationError);
    EXPECT_THROW(Dataset({{"a", 2, 0, 0, 0, {}}}, {}), ValidationError);
    EXPECT_THROW(Dataset({{"a", 0, 0, 0, 0, {1.0}}}, {}), ValidationError);
    const Dataset ok({{"a", 0, 1, 1, 0, {}}, {"b", 1, 1, 1, 0, {}}}, {});
    EXPECT_EQ(ok.size(), 2u);
    EXPECT_EQ(ok.cell_count(1, 0), 2u);
    EXPECT_EQ(ok.cell_count(0, 0), 0u);
}

// ---------------------------------------------------------------------------
// design construction
// ---------------------------------------------------------------------------

namespace {

Dataset one_covariate(const std::vector<double>& values, const std::string& name = "v") {
    std::vector<SubjectRecord> recs;
    for (std::size_t i = 0; i < values.size(); ++i)
        recs.push_back({std::to_string(i), 0, 1, static_cast<int>(i % 2), static_cast<int>(i % 2), {values[i]}});
    return Dataset(std::move(recs), {name});
}

}  // namespace

TEST(BuildDesignTest, InterceptOnlyIsColumnOfOnes) {
    const auto d = random_dataset(3, 25);
    const auto design = build_design(d, DesignSpec::intercept_only());
    ASSERT_EQ(design.g.cols(), 1);
    EXPECT_TRUE((design.g.array() == 1.0).all());
    EXPECT_EQ(design.labels, std::vector<std::string>{"(Intercept)"});
}

TEST(BuildDesignTest, QuartileDummiesOnOneToEight) {
    const auto d = one_covariate({1, 2, 3, 4, 5, 6, 7, 8});
    const auto design = build_design(d, {{DesignTerm::intercept(), DesignTerm::quartiles("v")}});
    ASSERT_EQ(design.g.cols(), 4);
    MatrixXd expected(8, 3);
    expected << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0;
    EXPECT_EQ(design.g.rightCols(3), expected);
    EXPECT_EQ(design.labels[1], "v:q1");
    EXPECT_EQ(design.labels[3], "v:q3");
}

TEST(BuildDesignTest, QuartileCutsUseLinearInterpolation) {
    const auto cuts = quartile_cuts((VectorXd(8) << 8, 7, 6, 5, 4, 3, 2, 1).finished());
    EXPECT_DOUBLE_EQ(cuts.q1, 2.75);
    EXPECT_DOUBLE_EQ(cuts.q2, 4.5);
    EXPECT_DOUBLE_EQ(cuts.q3, 6.25);
    EXPECT_EQ(cuts.quartile_of(2.75), 1);  // boundary belongs to the lower quartile
    EXPECT_EQ(cuts.quartile_of(2.7500001), 2);
}

TEST(BuildDesignTest, OtherReferenceQuartileDropsThatColumn) {
    const auto d = one_covariate({1, 2, 3, 4, 5, 6, 7, 8});
    const auto design = build_design(d, {{DesignTerm::intercept(), DesignTerm::quartiles("v", 1)}});
    EXPECT_EQ(design.labels[1], "v:q2");
    EXPECT_EQ(design.g(0, 1) + design.g(0, 2) + design.g(0, 3), 0.0);
}

TEST(BuildDesignTest, BinaryPassesThrough) {
    const auto d = one_covariate({0, 1, 1, 0, 1});
    const auto design = build_design(d, {{DesignTerm::intercept(), DesignTerm::binary("v")}});
    EXPECT_EQ(design.g.col(1), d.column(0));
}

TEST(BuildDesignTest, RawPassesThrough) {
    const auto d = one_covariate({0.5, -1.25, 3.0});
    const auto design = build_design(d, {{DesignTerm::intercept(), DesignTerm::raw("v")}});
    EXPECT_EQ(design.g.col(1), d.column(0));
}

TEST(BuildDesignTest, Errors) {
    const auto d = one_covariate({1, 1, 1, 1});
    EXPECT_THROW(build_design(d, {{DesignTerm::intercept(), DesignTerm::raw("w")}}), ValidationError);
    EXPECT_THROW(build_design(d, {{DesignTerm::intercept(), DesignTerm::quartiles("v")}}), ValidationError);
    EXPECT_THROW(build_design(one_covariate({0, 2}), {{DesignTerm::intercept(), DesignTerm::binary("v")}}),
                 ValidationError);
    EXPECT_THROW(build_design(d, {{DesignTerm::raw("v")}}), ValidationError);  // no intercept
    EXPECT_THROW(build_design(d, {{DesignTerm::intercept(), DesignTerm::intercept()}}), ValidationError);
}

TEST(BuildDesignTest, QuartileRowsSumToAtMostOneAndDesignIsDeterministic) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto d = random_dataset(seed, 37, 2);
        const DesignSpec spec{{DesignTerm::intercept(), DesignTerm::quartiles("v0"), DesignTerm::raw("v1")}};
        const auto a = build_design(d, spec);
        const auto b = build_design(d, spec);
        EXPECT_TRUE(a.g.cwiseEqual(b.g).all());
        const VectorXd rows = a.g.middleCols(1, 3).rowwise().sum();
        EXPECT_LE(rows.maxCoeff(), 1.0);
        EXPECT_TRUE(((a.g.middleCols(1, 3).array() == 0.0) || (a.g.middleCols(1, 3).array() == 1.0)).all());
    }
}

TEST(DesignSpecTest, Describe) {
    const DesignSpec spec{{DesignTerm::intercept(), DesignTerm::quartiles("gi"), DesignTerm::binary("statin")}};
    EXPECT_EQ(spec.describe(), "1 + gi:quartiles(ref=4) + statin:binary");
}

// ---------------------------------------------------------------------------
// scalar helpers
// ---------------------------------------------------------------------------

TEST(ScalarTest, ExpitAndLogSumExpAreStable) {
    EXPECT_DOUBLE_EQ(expit(0.0), 0.5);
    EXPECT_NEAR(expit(800.0), 1.0, 0.0);
    EXPECT_GT(expit(-800.0), -1e-300);
    EXPECT_TRUE(std::isfinite(log1pexp(1000.0)));
    EXPECT_NEAR(log1pexp(1000.0), 1000.0, 1e-12);
    const std::array<double, 3> big{1000.0, 1000.0, 0.0};
    EXPECT_NEAR(log_sum_exp(big), 1000.0 + std::log(2.0), 1e-12);
    const std::array<double, 2> small{std::log(0.25), std::log(0.5)};
    EXPECT_NEAR(log_sum_exp(small), std::log(0.75), 1e-15);
}

TEST(ScalarTest, TwoSidedP) {
    EXPECT_DOUBLE_EQ(two_sided_p(0.0), 1.0);
    EXPECT_NEAR(two_sided_p(1.959963984540054), 0.05, 1e-12);
    EXPECT_NEAR(two_sided_p(-2.625), 2.0 * normal_cdf(-2.625), 1e-15);
}

// ---------------------------------------------------------------------------
// solve_linear
// ---------------------------------------------------------------------------

TEST(SolveLinearTest, Identity) {
    const MatrixXd b = MatrixXd::Random(3, 2);
    EXPECT_TRUE(solve_linear(MatrixXd::Identity(3, 3), b).isApprox(b, 1e-15));
}

TEST(SolveLinearTest, DiagonalInverse) {
    const MatrixXd x = solve_linear(Eigen::Vector2d(2, 4).asDiagonal().toDenseMatrix(), MatrixXd::Identity(2, 2));
    EXPECT_DOUBLE_EQ(x(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(x(1, 1), 0.25);
    EXPECT_EQ(x(0, 1), 0.0);
}

TEST(SolveLinearTest, RandomNineByNineResidual) {
    SplitMix64 rng(99);
    MatrixXd a(9, 9), b(9, 3);
    for (Eigen::Index i = 0; i < 9; ++i)
        for (Eigen::Index j = 0; j < 9; ++j) a(i, j) = rng.uniform() - 0.5;
    a += 5.0 * MatrixXd::Identity(9, 9);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform() * 10.0 - 5.0;
    const MatrixXd x = solve_linear(a, b);
    EXPECT_LE((a * x - b).cwiseAbs().maxCoeff(), 1e-8 * b.cwiseAbs().maxCoeff());
}

TEST(SolveLinearTest, InverseReproducesIdentityUpToConditionOneMillion) {
    SplitMix64 rng(5);
    for (double cond : {1.0, 1e2, 1e4, 1e6}) {
        MatrixXd q = MatrixXd::Zero(6, 6);
        for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = rng.uniform() - 0.5;
        const Eigen::HouseholderQR<MatrixXd> qr(q);
        const MatrixXd orth = qr.householderQ();
        VectorXd s(6);
        for (int i = 0; i < 6; ++i) s[i] = std::pow(cond, -i / 5.0);
        const MatrixXd a = orth * s.asDiagonal() * orth.transpose();
        const MatrixXd inv = solve_linear(a, MatrixXd::Identity(6, 6));
        EXPECT_LE((a * inv - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8) << "condition " << cond;
    }
}

TEST(SolveLinearTest, SingularThrows) {
    MatrixXd a(2, 2);
    a << 1, 2, 2, 4;
    EXPECT_THROW(solve_linear(a, MatrixXd::Identity(2, 2)), SingularMatrixError);
}

// ---------------------------------------------------------------------------
// newton_maximize
// ---------------------------------------------------------------------------

TEST(NewtonTest, QuadraticInOneStep) {
    auto f = [](const VectorXd& t) {
        return Evaluation{-(t[0] - 3.0) * (t[0] - 3.0), VectorXd::Constant(1, -2.0 * (t[0] - 3.0)),
                          MatrixXd::Constant(1, 1, -2.0)};
    };
    const auto r = newton_maximize(f, VectorXd::Zero(1));
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.argmax[0], 3.0, 1e-10);
    EXPECT_LE(r.iterations, 2);
}

TEST(NewtonTest, QuarticReachesZero) {
    auto f = [](const VectorXd& t) {
        const double v = t[0];
        return Evaluation{-std::pow(v, 4), VectorXd::Constant(1, -4 * v * v * v), MatrixXd::Constant(1, 1, -12 * v * v)};
    };
    const auto r = newton_maximize(f, VectorXd::Ones(1));
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.gradient_norm, 1e-8);
    EXPECT_NEAR(r.argmax[0], 0.0, 2e-3);  // |4 t^3| <= 1e-8
}

TEST(NewtonTest, NonFiniteStartThrows) {
    auto f = [](const VectorXd& t) {
        return Evaluation{std::log(t[0]), VectorXd::Constant(1, 1.0 / t[0]), MatrixXd::Constant(1, 1, -1.0)};
    };
    EXPECT_THROW(newton_maximize(f, VectorXd::Constant(1, -1.0)), ConvergenceError);
}

TEST(NewtonTest, ReportsNonConvergenceInsteadOfThrowing) {
    auto f = [](const VectorXd& t) {  // unbounded: log-likelihood of an all-success sample
        return Evaluation{-log1pexp(-t[0]), VectorXd::Constant(1, expit(-t[0])),
                          MatrixXd::Constant(1, 1, -expit(t[0]) * expit(-t[0]))};
    };
    NewtonSettings s;
    s.max_iterations = 5;
    const auto r = newton_maximize(f, VectorXd::Zero(1), s);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 5);
}

TEST(NewtonTest, StrictlyConcaveQuadraticsConvergeInTwoIterations) {
    SplitMix64 rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        MatrixXd m(4, 4);
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform() - 0.5;
        const MatrixXd a = m * m.transpose() + 0.5 * MatrixXd::Identity(4, 4);
        VectorXd c(4);
        for (int i = 0; i < 4; ++i) c[i] = 4.0 * rng.uniform() - 2.0;
        auto f = [&](const VectorXd& t) {
            const VectorXd r = t - c;
            return Evaluation{-0.5 * r.dot(a * r), -a * r, -a};
        };
        const auto res = newton_maximize(f, VectorXd::Zero(4));
        EXPECT_TRUE(res.converged);
        EXPECT_LE(res.iterations, 2);
        EXPECT_LE((res.argmax - c).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(NewtonTest, NeverEndsBelowStartAndConvergedMeansSmallGradient) {
    // Non-concave objective: sum of cos plus a weak quadratic well.
    SplitMix64 rng(21);
    for (int rep = 0; rep < 100; ++rep) {
        VectorXd start(2);
        start << 6.0 * rng.uniform() - 3.0, 6.0 * rng.uniform() - 3.0;
        auto f = [](const VectorXd& t) {
            Evaluation e{0.0, VectorXd(2), MatrixXd::Zero(2, 2)};
            for (int i = 0; i < 2; ++i) {
                e.value += std::cos(t[i]) - 0.05 * t[i] * t[i];
                e.gradient[i] = -std::sin(t[i]) - 0.1 * t[i];
                e.hessian(i, i) = -std::cos(t[i]) - 0.1;
            }
            return e;
        };
        const auto res = newton_maximize(f, start);
        EXPECT_GE(res.objective, f(start).value);
        if (res.converged) {
            EXPECT_LE(res.gradient_norm, NewtonSettings{}.gradient_tolerance);
        }
    }
}

TEST(NewtonTest, TwoParameterLogisticMatchesLatticeSearch) {
    const std::array<double, 6> xs{0, 1, 2, 3, 4, 5};
    const std::array<int, 6> ys{0, 1, 0, 1, 0, 1};
    auto loglik = [&](double b0, double b1) {
        double s = 0;
        for (int i = 0; i < 6; ++i) {
            const double e = b0 + b1 * xs[i];
            s += ys[i] ? -log1pexp(-e) : -log1pexp(e);
        }
        return s;
    };
    auto f = [&](const VectorXd& t) {
        Evaluation ev{loglik(t[0], t[1]), VectorXd::Zero(2), MatrixXd::Zero(2, 2)};
        for (int i = 0; i < 6; ++i) {
            const double mu = expit(t[0] + t[1] * xs[i]), w = mu * (1 - mu);
            ev.gradient[0] += ys[i] - mu;
            ev.gradient[1] += (ys[i] - mu) * xs[i];
            ev.hessian(0, 0) -= w;
            ev.hessian(0, 1) -= w * xs[i];
            ev.hessian(1, 1) -= w * xs[i] * xs[i];
        }
        ev.hessian(1, 0) = ev.hessian(0, 1);
        return ev;
    };
    const auto res = newton_maximize(f, VectorXd::Zero(2));
    ASSERT_TRUE(res.converged);

    // 2001 x 2001 lattice on [-5, 5]^2, then a 2001 x 2001 lattice of half-width 0.01 around the winner.
    auto lattice = [&](double c0, double c1, double half) {
        double best = -std::numeric_limits<double>::infinity(), b0 = 0, b1 = 0;
        for (int i = 0; i <= 2000; ++i)
            for (int j = 0; j <= 2000; ++j) {
                const double u = c0 - half + half * i / 1000.0, v = c1 - half + half * j / 1000.0;
                const double l = loglik(u, v);
                if (l > best) best = l, b0 = u, b1 = v;
            }
        return std::pair{b0, b1};
    };
    const auto [g0, g1] = lattice(0.0, 0.0, 5.0);
    const auto [r0, r1] = lattice(g0, g1, 0.01);
    EXPECT_NEAR(res.argmax[0], r0, 1e-3);
    EXPECT_NEAR(res.argmax[1], r1, 1e-3);
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

namespace {
struct ValueGrad {
    double value;
    VectorXd gradient;
};
}  // namespace

TEST(FiniteDiffTest, Polynomial) {
    auto f = [](const VectorXd& t) { return ValueGrad{t[0] * t[0], VectorXd::Constant(1, 2 * t[0])}; };
    EXPECT_LT(finite_diff_check(f, VectorXd::Constant(1, 1.5), 1e-5), 1e-8);
}

TEST(FiniteDiffTest, DetectsWrongGradient) {
    auto f = [](const VectorXd& t) { return ValueGrad{t[0] * t[0], VectorXd::Constant(1, 2 * t[0] + 1.0)}; };
    const double err = finite_diff_check(f, VectorXd::Constant(1, 1.5), 1e-5);
    EXPECT_NEAR(err, 1.0 / 4.0, 1e-6);  // |4 - 3| / max(1, 4)
    auto g = [](const VectorXd& t) { return ValueGrad{t[0], VectorXd::Constant(1, 1.0 + 1.0)}; };
    EXPECT_NEAR(finite_diff_check(g, VectorXd::Zero(1), 1e-5), 0.5, 1e-9);
    auto h = [](const VectorXd& t) { return ValueGrad{0.0 * t[0], VectorXd::Constant(1, 1.0)}; };
    EXPECT_NEAR(finite_diff_check(h, VectorXd::Zero(1), 1e-5), 1.0, 1e-12);
}

TEST(FiniteDiffTest, MaxRelativeErrorDefinition) {
    MatrixXd a(1, 2), n(1, 2);
    a << 0.5, 10.0;
    n << 0.4, 11.0;
    EXPECT_NEAR(max_relative_error(a, n), 0.1, 1e-15);
}
