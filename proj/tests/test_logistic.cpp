#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "subopt/logistic.hpp"

using namespace subopt;

namespace {

Matrix design_with_intercept(const std::vector<double>& x) {
    Matrix m(x.size(), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        m(i, 0) = 1.0;
        m(i, 1) = x[i];
    }
    return m;
}

double loglik(const Matrix& x, const Binary& y, const Vector& w, double b0, double b1) {
    double l = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double eta = b0 + b1 * x(i, 1);
        l += w[i] * (y[i] * eta - std::log1p(std::exp(eta)));
    }
    return l;
}

// Newton on a two-parameter likelihood with central-difference gradient and
// Hessian and a cofactor 2x2 inverse; shares no code with the library fit.
std::pair<double, double> numeric_newton(const Matrix& x, const Binary& y, const Vector& w) {
    double b0 = 0.0, b1 = 0.0;
    const double h = 1e-4;
    for (int it = 0; it < 100; ++it) {
        auto f = [&](double a, double b) { return loglik(x, y, w, a, b); };
        const double g0 = (f(b0 + h, b1) - f(b0 - h, b1)) / (2 * h);
        const double g1 = (f(b0, b1 + h) - f(b0, b1 - h)) / (2 * h);
        const double h00 = (f(b0 + h, b1) - 2 * f(b0, b1) + f(b0 - h, b1)) / (h * h);
        const double h11 = (f(b0, b1 + h) - 2 * f(b0, b1) + f(b0, b1 - h)) / (h * h);
        const double h01 =
            (f(b0 + h, b1 + h) - f(b0 + h, b1 - h) - f(b0 - h, b1 + h) + f(b0 - h, b1 - h)) / (4 * h * h);
        const double det = h00 * h11 - h01 * h01;
        const double s0 = (h11 * g0 - h01 * g1) / det;
        const double s1 = (-h01 * g0 + h00 * g1) / det;
        b0 -= s0;
        b1 -= s1;
        if (std::abs(s0) + std::abs(s1) < 1e-13) break;
    }
    return {b0, b1};
}

} // namespace

TEST(Expit, Examples) {
    EXPECT_EQ(expit(0.0), 0.5);
    EXPECT_NEAR(expit(40.0), 1.0, 1e-15);
    EXPECT_TRUE(std::isfinite(expit(-1000.0)));
    EXPECT_TRUE(std::isfinite(expit(1000.0)));
    EXPECT_NEAR(expit(std::log(3.0)), 0.75, 1e-15);
    EXPECT_NEAR(expit(-3.2) + expit(3.2), 1.0, 1e-15);
}

TEST(FitWeightedMle, InterceptOnlyGivesLogitOfMean) {
    Matrix x(8, 1, 1.0);
    const Binary y{1, 0, 0, 0, 1, 0, 0, 0};
    const FittedModel fit = fit_mle(x, y);
    ASSERT_TRUE(fit.converged);
    EXPECT_NEAR(fit.beta[0], std::log(1.0 / 3.0), 1e-12);
    EXPECT_NEAR(fit.m_x(0, 0), 0.25 * 0.75, 1e-12);
}

TEST(FitWeightedMle, SixPointToyMatchesNumericNewton) {
    const Matrix x = design_with_intercept({-1, 0, 1, -1, 0, 1});
    const Binary y{0, 0, 0, 1, 1, 1};
    const Vector w(6, 1.0);
    const FittedModel fit = fit_weighted_mle(x, y, w);
    ASSERT_TRUE(fit.converged);
    const auto [b0, b1] = numeric_newton(x, y, w);
    EXPECT_NEAR(fit.beta[0], b0, 1e-8);
    EXPECT_NEAR(fit.beta[1], b1, 1e-8);
}

TEST(FitWeightedMle, UnbalancedToyMatchesNumericNewton) {
    const Matrix x = design_with_intercept({-1, 0, 1, -1, 0, 1, 2, -2});
    const Binary y{0, 0, 1, 1, 0, 1, 1, 0};
    const Vector w{1.0, 2.5, 0.7, 1.3, 1.0, 3.0, 0.4, 1.1};
    const FittedModel fit = fit_weighted_mle(x, y, w);
    ASSERT_TRUE(fit.converged);
    const auto [b0, b1] = numeric_newton(x, y, w);
    EXPECT_NEAR(fit.beta[0], b0, 1e-7);
    EXPECT_NEAR(fit.beta[1], b1, 1e-7);
    EXPECT_LE(fit.final_score_norm, 1e-10);
}

TEST(FitWeightedMle, WeightScaleInvariance) {
    const Matrix x = design_with_intercept({-1.2, 0.3, 1.1, -0.4, 0.9, 2.0, -2.2, 0.1});
    const Binary y{0, 1, 1, 0, 0, 1, 0, 1};
    Vector w{1.0, 2.0, 0.5, 1.5, 1.0, 3.0, 0.4, 1.1};
    const FittedModel a = fit_weighted_mle(x, y, w);
    for (double& v : w) v *= 2.0;
    const FittedModel b = fit_weighted_mle(x, y, w);
    ASSERT_TRUE(a.converged && b.converged);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(a.beta[j], b.beta[j], 1e-14);
}

TEST(FitWeightedMle, IntegerWeightsEqualDuplicatedRows) {
    const Matrix x = design_with_intercept({-1, 0, 1, 2});
    const Binary y{0, 1, 0, 1};
    const FittedModel weighted = fit_weighted_mle(x, y, Vector{2, 1, 1, 3});
    const Matrix xd = design_with_intercept({-1, -1, 0, 1, 2, 2, 2});
    const FittedModel dup = fit_mle(xd, Binary{0, 0, 1, 0, 1, 1, 1});
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(weighted.beta[j], dup.beta[j], 1e-10);
}

TEST(FitWeightedMle, DegenerateInputs) {
    const Matrix x = design_with_intercept({-1, 0, 1});
    try {
        fit_mle(x, Binary{1, 1, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateOutcome);
    }
    // zero weight removes the only case
    EXPECT_THROW(fit_weighted_mle(x, Binary{1, 0, 0}, Vector{0, 1, 1}), Error);
    EXPECT_THROW(fit_weighted_mle(x, Binary{1, 0, 0}, Vector{1, -1, 1}), Error);
    // collinear design: constant covariate duplicates the intercept
    const Matrix collinear = design_with_intercept({1, 1, 1});
    try {
        fit_mle(collinear, Binary{1, 0, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateDesign);
    }
}

TEST(FitWeightedMle, SeparationReportsNonConvergence) {
    const Matrix x = design_with_intercept({-2, -1, 1, 2});
    const FittedModel fit = fit_mle(x, Binary{0, 0, 1, 1});
    EXPECT_FALSE(fit.converged);
}

TEST(Influence, ColumnMeansVanishAtTheMle) {
    RngStream rng(5, 5);
    const std::size_t n = 500;
    Matrix x(n, 3);
    Binary y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = 1;
        x(i, 1) = rng.normal();
        x(i, 2) = rng.normal();
        y[i] = rng.bernoulli(expit(0.3 + x(i, 1) - 0.5 * x(i, 2))) ? 1 : 0;
    }
    const FittedModel fit = fit_mle(x, y);
    ASSERT_TRUE(fit.converged);
    const InfluenceMatrix infl = influence(x, y, fit);
    for (std::size_t j = 0; j < 3; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += infl.h(i, j);
        EXPECT_NEAR(s / n, 0.0, 1e-8);
    }
    for (std::size_t i = 0; i < n; ++i) EXPECT_DOUBLE_EQ(infl.norms[i], norm2(infl.h.row(i)));
}

TEST(Influence, ZeroResidualGivesZeroRow) {
    const Matrix x = design_with_intercept({-1, 0, 1, 2});
    FittedModel model;
    model.m_x = Matrix{{0.25, 0.0}, {0.0, 0.25}};
    // slope 60 puts p = 1 exactly at x = 2, where y = 1
    model.beta = {0.0, 60.0};
    const InfluenceMatrix infl = influence(x, Binary{0, 0, 1, 1}, model);
    EXPECT_EQ(infl.norms[3], 0.0);
    EXPECT_EQ(infl.h(3, 0), 0.0);
    EXPECT_EQ(infl.h(3, 1), 0.0);
}

TEST(Influence, SixPointToyMatchesCofactorInverse) {
    const Matrix x = design_with_intercept({-1, 0, 1, -1, 0, 1});
    const Binary y{0, 0, 1, 1, 0, 1};
    const FittedModel fit = fit_mle(x, y);
    ASSERT_TRUE(fit.converged);
    double a = 0, b = 0, d = 0;
    std::vector<double> p(6);
    for (std::size_t i = 0; i < 6; ++i) {
        p[i] = 1.0 / (1.0 + std::exp(-(fit.beta[0] + fit.beta[1] * x(i, 1))));
        const double v = p[i] * (1 - p[i]) / 6.0;
        a += v;
        b += v * x(i, 1);
        d += v * x(i, 1) * x(i, 1);
    }
    const double det = a * d - b * b;
    const InfluenceMatrix infl = influence(x, y, fit);
    for (std::size_t i = 0; i < 6; ++i) {
        const double r = y[i] - p[i];
        const double h0 = (d * r - b * r * x(i, 1)) / det;
        const double h1 = (-b * r + a * r * x(i, 1)) / det;
        EXPECT_NEAR(infl.h(i, 0), h0, 1e-10);
        EXPECT_NEAR(infl.h(i, 1), h1, 1e-10);
    }
}

TEST(LeverageNorms, MatchExplicitSolve) {
    const Matrix x = design_with_intercept({-1, 0.5, 2});
    const Matrix m{{2, 0.3}, {0.3, 1}};
    const Vector lev = leverage_norms(x, m);
    for (std::size_t i = 0; i < 3; ++i) {
        const Vector v = spd_solve(m, x.row(i));
        EXPECT_NEAR(lev[i], norm2(v), 1e-14);
    }
}

TEST(Validate, RejectsBadDatasets) {
    Dataset d;
    d.x = design_with_intercept({1, 2, 3});
    d.y = Binary{0, 1, 2};
    EXPECT_THROW(validate(d), Error);
    d.y = Binary{0, 1};
    EXPECT_THROW(validate(d), Error);
    d.y = Binary{0, 1, 1};
    EXPECT_NO_THROW(validate(d));
}
