#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "subopt/simgen.hpp"

using namespace subopt;

namespace {

struct Moments {
    double mean = 0, var = 0, se_mean = 0, se_var = 0;
};

// Sample mean and variance with plug-in standard errors from the 4th moment.
Moments moments(const Vector& v) {
    const double n = static_cast<double>(v.size());
    Moments m;
    for (double x : v) m.mean += x;
    m.mean /= n;
    double m2 = 0, m4 = 0;
    for (double x : v) {
        const double d = (x - m.mean) * (x - m.mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    m.var = m2 * n / (n - 1);
    m.se_mean = std::sqrt(m2 / n);
    m.se_var = std::sqrt((m4 - m2 * m2) / n);
    return m;
}

double covariance(const Vector& a, const Vector& b, double* se) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    Vector prod(n);
    for (std::size_t i = 0; i < n; ++i) prod[i] = (a[i] - ma) * (b[i] - mb);
    const Moments m = moments(prod);
    *se = m.se_mean;
    return m.mean;
}

Matrix covariates(Scenario s, std::size_t p, std::uint64_t seed) {
    RngStream rng(seed, 0);
    return gen_covariates(make_scenario(s, p, 100000, ErrorLevel::Low), rng);
}

struct Rate {
    double hits = 0, total = 0;
    [[nodiscard]] double value() const { return hits / total; }
    [[nodiscard]] double se(double p) const { return std::sqrt(p * (1 - p) / total); }
};

} // namespace

TEST(GenCovariates, ZeroMeanNormalCovariance) {
    const Matrix x = covariates(Scenario::ZeroMeanNormal, 3, 1);
    for (std::size_t j = 1; j <= 3; ++j) {
        const Moments m = moments(x.col(j));
        EXPECT_NEAR(m.mean, 0.0, 3 * m.se_mean);
        EXPECT_NEAR(m.var, 1.0, 3 * m.se_var);
    }
    double se = 0;
    const double c23 = covariance(x.col(2), x.col(3), &se);
    EXPECT_NEAR(c23, 0.5, 3 * se);
    EXPECT_GT(se, 0.0);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(x(i, 0), 1.0);
}

TEST(GenCovariates, ExpMeans) {
    const Matrix x = covariates(Scenario::Exp, 7, 2);
    for (std::size_t j = 1; j <= 7; ++j) {
        const Moments m = moments(x.col(j));
        EXPECT_NEAR(m.mean, 0.5, 3 * m.se_mean);
        const Vector c = x.col(j);
        EXPECT_GE(*std::min_element(c.begin(), c.end()), 0.0);
    }
    EXPECT_EQ(make_scenario(Scenario::Exp, 3, 10, ErrorLevel::Low).beta[0], -0.5);
}

TEST(GenCovariates, UnequalVarThirdVariance) {
    const Matrix x = covariates(Scenario::UnequalVar, 3, 3);
    for (std::size_t j = 1; j <= 3; ++j) {
        const Moments m = moments(x.col(j));
        EXPECT_NEAR(m.var, 1.0 / double(j * j), 3 * m.se_var) << j;
    }
    double se = 0;
    const double c12 = covariance(x.col(1), x.col(2), &se);
    EXPECT_NEAR(c12, 0.5 / 2.0, 3 * se);
}

TEST(GenCovariates, RareEventShiftMixNormalAndDiscreteX) {
    const Matrix rare = covariates(Scenario::RareEvent, 3, 4);
    const Moments mr = moments(rare.col(2));
    EXPECT_NEAR(mr.mean, -1.6, 3 * mr.se_mean);

    // mixture of N(+1, 1) and N(-1, 1): mean 0, variance 2
    const Matrix mix = covariates(Scenario::MixNormal, 3, 5);
    const Moments mm = moments(mix.col(1));
    EXPECT_NEAR(mm.mean, 0.0, 3 * mm.se_mean);
    EXPECT_NEAR(mm.var, 2.0, 3 * mm.se_var);

    const Matrix disc = covariates(Scenario::DiscreteX, 3, 6);
    for (std::size_t j = 1; j <= 3; ++j) {
        const Vector c = disc.col(j);
        for (double v : c) ASSERT_TRUE(v == 0.0 || v == 1.0);
        const Moments md = moments(c);
        EXPECT_NEAR(md.mean, 0.5, 3 * md.se_mean);
    }
    EXPECT_THROW(make_scenario(Scenario::DiscreteX, 7, 10, ErrorLevel::Low), Error);
    EXPECT_THROW(make_scenario(Scenario::ZeroMeanNormal, 4, 10, ErrorLevel::Low), Error);
}

TEST(GenCovariates, T3IsSymmetricAndScaled) {
    const Matrix x = covariates(Scenario::T3, 3, 7);
    // median absolute value of t3 / 10 is 0.0765
    Vector a = x.col(1);
    for (double& v : a) v = std::abs(v);
    std::nth_element(a.begin(), a.begin() + a.size() / 2, a.end());
    EXPECT_NEAR(a[a.size() / 2], 0.07649, 0.003);
    std::size_t pos = 0;
    for (double v : x.col(1)) pos += v > 0;
    EXPECT_NEAR(double(pos) / x.rows(), 0.5, 3 * std::sqrt(0.25 / x.rows()));
}

TEST(GenOutcome, ZeroBetaIsFair) {
    RngStream rng(8, 0);
    const Matrix x = covariates(Scenario::ZeroMeanNormal, 3, 8);
    const Binary y = gen_outcome(x, Vector(4, 0.0), rng);
    double s = 0;
    for (int v : y) s += v;
    EXPECT_NEAR(s / y.size(), 0.5, 3 * std::sqrt(0.25 / y.size()));
}

TEST(GenOutcome, RareEventPrevalenceMatchesMonteCarloIntegral) {
    const auto spec = make_scenario(Scenario::RareEvent, 3, 100000, ErrorLevel::Low);
    RngStream xr(9, 0), yr(9, 1);
    const Matrix x = gen_covariates(spec, xr);
    const Binary y = gen_outcome(x, spec.beta, yr);
    double prev = 0;
    for (int v : y) prev += v;
    prev /= y.size();
    // expected prevalence from 10^6 independent covariate draws
    auto big = spec;
    big.population = 1000000;
    RngStream br(9, 2);
    const Matrix xb = gen_covariates(big, br);
    double expect = 0;
    for (std::size_t i = 0; i < xb.rows(); ++i) expect += expit(dot(xb.row(i), spec.beta));
    expect /= xb.rows();
    EXPECT_LT(prev, 0.2);
    EXPECT_NEAR(prev, expect, 3 * std::sqrt(expect * (1 - expect) / y.size()) + 1e-3 * expect);
}

TEST(GenOutcome, SaturatedLinearPredictor) {
    RngStream rng(10, 0);
    const Matrix x(1000, 2, 1.0);
    const Binary y = gen_outcome(x, Vector{20.0, 20.0}, rng);
    for (int v : y) EXPECT_EQ(v, 1);
}

TEST(GenSurrogate, ConfusionRatesByRegion) {
    for (ErrorLevel level : {ErrorLevel::Low, ErrorLevel::High}) {
        const auto spec = make_scenario(Scenario::ZeroMeanNormal, 3, 100000, level);
        const Dataset d = generate_dataset(spec, RngStream(11, 0));
        const double c1 = surrogate_threshold(d.x, spec.name);
        const SurrogateSpec ss = surrogate_spec(level, c1);
        Rate sens_b, sens_a, spec_b, spec_a;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const bool below = d.x(i, 1) < c1;
            const int y = (*d.y)[i], s = (*d.s)[i];
            Rate& r = y == 1 ? (below ? sens_b : sens_a) : (below ? spec_b : spec_a);
            r.total += 1;
            r.hits += y == 1 ? s : 1 - s;
        }
        EXPECT_NEAR(sens_b.value(), ss.sens_below, 3 * sens_b.se(ss.sens_below));
        EXPECT_NEAR(sens_a.value(), ss.sens_above, 3 * sens_a.se(ss.sens_above));
        EXPECT_NEAR(spec_b.value(), ss.spec_below, 3 * spec_b.se(ss.spec_below));
        EXPECT_NEAR(spec_a.value(), ss.spec_above, 3 * spec_a.se(ss.spec_above));
    }
    const auto low = surrogate_spec(ErrorLevel::Low, 0.0);
    EXPECT_EQ(low.sens_below, 0.99);
    EXPECT_EQ(low.sens_above, 0.95);
    EXPECT_EQ(low.spec_below, 0.90);
    EXPECT_EQ(low.spec_above, 0.80);
    const auto high = surrogate_spec(ErrorLevel::High, 0.0);
    EXPECT_EQ(high.sens_below, 0.95);
    EXPECT_EQ(high.sens_above, 0.90);
    EXPECT_EQ(high.spec_below, 0.70);
    EXPECT_EQ(high.spec_above, 0.60);
}

TEST(GenSurrogate, PerfectSurrogateCopiesOutcome) {
    const auto spec = make_scenario(Scenario::MixNormal, 3, 5000, ErrorLevel::None);
    const Dataset d = generate_dataset(spec, RngStream(12, 0));
    EXPECT_EQ(*d.s, *d.y);
}

TEST(GenerateDataset, DeterministicGivenStream) {
    const auto spec = make_scenario(Scenario::T3, 7, 500, ErrorLevel::High);
    const Dataset a = generate_dataset(spec, RngStream(13, 4));
    const Dataset b = generate_dataset(spec, RngStream(13, 4));
    const Dataset c = generate_dataset(spec, RngStream(13, 5));
    EXPECT_TRUE(a.x == b.x);
    EXPECT_EQ(*a.y, *b.y);
    EXPECT_EQ(*a.s, *b.s);
    EXPECT_FALSE(a.x == c.x);
    EXPECT_EQ(a.p(), 7u);
}

TEST(ParseNames, RoundTrip) {
    for (Scenario s : kAllScenarios) EXPECT_EQ(parse_scenario(to_string(s)), s);
    EXPECT_EQ(parse_error_level("high"), ErrorLevel::High);
    EXPECT_THROW(parse_scenario("nope"), Error);
    EXPECT_THROW(parse_error_level("medium"), Error);
}

TEST(DatasetCsv, ThreeRowSmoke) {
    std::istringstream in("y,s,age,cd4\n0,1,34.5,250\n1,1,50,120\n0,0,29.1,601\n");
    const Dataset d = read_dataset_csv(in);
    EXPECT_EQ(d.size(), 3u);
    EXPECT_EQ(d.p(), 2u);
    ASSERT_TRUE(d.y && d.s);
    EXPECT_EQ(*d.y, (Binary{0, 1, 0}));
    EXPECT_EQ(d.x(1, 2), 120.0);
    EXPECT_EQ(d.covariate_names, (std::vector<std::string>{"age", "cd4"}));
}

TEST(DatasetCsv, NonBinaryOutcomeNamesTheRow) {
    std::istringstream in("y,x\n0,1.0\n1,2.0\n2,3.0\n");
    try {
        read_dataset_csv(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonBinaryOutcome);
        EXPECT_NE(std::string(e.what()).find("row 4"), std::string::npos) << e.what();
    }
}

TEST(DatasetCsv, ParseErrorsAndMissingColumns) {
    std::istringstream bad("y,x\n0,abc\n");
    try {
        read_dataset_csv(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("row 2, column 2"), std::string::npos) << e.what();
    }
    std::istringstream ragged("y,x\n0,1,2\n");
    EXPECT_THROW(read_dataset_csv(ragged), Error);
    std::istringstream none("a,b\n1,2\n");
    try {
        read_dataset_csv(none);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingOutcomeColumns);
    }
    EXPECT_THROW(load_dataset_csv("/nonexistent/file.csv"), Error);
}

TEST(DatasetCsv, SaveLoadIsBitExact) {
    const auto spec = make_scenario(Scenario::UnequalVar, 7, 300, ErrorLevel::Low);
    const Dataset d = generate_dataset(spec, RngStream(14, 0));
    std::stringstream buf;
    write_dataset_csv(d, buf);
    const Dataset back = read_dataset_csv(buf);
    EXPECT_TRUE(back.x == d.x);
    EXPECT_EQ(*back.y, *d.y);
    EXPECT_EQ(*back.s, *d.s);
    EXPECT_EQ(back.covariate_names, d.covariate_names);
}

TEST(CohortGenerator, SaveLoadRoundTrip) {
    const Dataset d = gen_vccc_like(RngStream(15, 0));
    const auto path = std::filesystem::temp_directory_path() / "subopt_cohort_roundtrip.csv";
    save_dataset_csv(d, path.string());
    const Dataset back = load_dataset_csv(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(d.size(), 1595u);
    EXPECT_TRUE(back.x == d.x);
    EXPECT_EQ(*back.y, *d.y);
    EXPECT_EQ(*back.s, *d.s);
}

TEST(CohortGenerator, PrevalenceAndBelowQuantileSensitivity) {
    const Dataset d = gen_vccc_like(RngStream(16, 0));
    const double n = static_cast<double>(d.size());
    double cases = 0;
    for (int v : *d.y) cases += v;
    EXPECT_NEAR(cases / n, 0.06, 3 * std::sqrt(0.06 * 0.94 / n));

    const double c = empirical_quantile(d.x.col(2), 0.3);
    Rate below;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if ((*d.y)[i] == 1 && d.x(i, 2) < c) {
            below.total += 1;
            below.hits += (*d.s)[i];
        }
    }
    ASSERT_GT(below.total, 10);
    EXPECT_NEAR(below.value(), 0.72, 3 * below.se(0.72));
}

TEST(CohortGenerator, PooledCalibrationAcrossSeeds) {
    Rate sens_b, sens_a, spec, s_prev, prev;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Dataset d = gen_vccc_like(RngStream(1000 + seed, 0));
        const double c = empirical_quantile(d.x.col(2), 0.3);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const int y = (*d.y)[i], s = (*d.s)[i];
            Rate& r = y ? (d.x(i, 2) < c ? sens_b : sens_a) : spec;
            r.total += 1;
            r.hits += y ? s : 1 - s;
            s_prev.total += 1;
            s_prev.hits += s;
            prev.total += 1;
            prev.hits += y;
        }
    }
    EXPECT_NEAR(prev.value(), 0.06, 3 * prev.se(0.06));
    EXPECT_NEAR(sens_b.value(), 0.72, 3 * sens_b.se(0.72));
    EXPECT_NEAR(sens_a.value(), 0.90, 3 * sens_a.se(0.90));
    EXPECT_NEAR(spec.value(), 0.90, 3 * spec.se(0.90));
    // cases concentrate at low CD4, so the implied surrogate prevalence sits a little above 0.13
    const double frac_below = sens_b.total / (sens_b.total + sens_a.total);
    const double implied = 0.06 * (0.72 * frac_below + 0.90 * (1 - frac_below)) + 0.94 * 0.10;
    EXPECT_NEAR(s_prev.value(), implied, 3 * s_prev.se(implied) + 0.002);
    EXPECT_NEAR(s_prev.value(), 0.13, 0.025);
}
