#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "subopt/error.hpp"
#include "subopt/logistic.hpp"
#include "subopt/numerics.hpp"

namespace subopt {

enum class Scenario { ZeroMeanNormal, RareEvent, UnequalVar, MixNormal, T3, Exp, DiscreteX };
enum class ErrorLevel { None, Low, High };

inline constexpr Scenario kAllScenarios[] = {Scenario::ZeroMeanNormal, Scenario::RareEvent, Scenario::UnequalVar,
                                             Scenario::MixNormal,      Scenario::T3,        Scenario::Exp,
                                             Scenario::DiscreteX};

constexpr std::string_view to_string(Scenario s) noexcept {
    switch (s) {
    case Scenario::ZeroMeanNormal: return "zeroMeanNormal";
    case Scenario::RareEvent: return "rareEvent";
    case Scenario::UnequalVar: return "unequalVar";
    case Scenario::MixNormal: return "mixNormal";
    case Scenario::T3: return "T3";
    case Scenario::Exp: return "Exp";
    case Scenario::DiscreteX: return "DiscreteX";
    }
    return "?";
}

constexpr std::string_view to_string(ErrorLevel e) noexcept {
    switch (e) {
    case ErrorLevel::None: return "none";
    case ErrorLevel::Low: return "low";
    case ErrorLevel::High: return "high";
    }
    return "?";
}

inline Scenario parse_scenario(std::string_view name) {
    for (Scenario s : kAllScenarios) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + std::string(name) + "'");
}

inline ErrorLevel parse_error_level(std::string_view name) {
    for (ErrorLevel e : {ErrorLevel::None, ErrorLevel::Low, ErrorLevel::High}) {
        if (to_string(e) == name) return e;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown error level '" + std::string(name) + "'");
}

struct ScenarioSpec {
    Scenario name = Scenario::ZeroMeanNormal;
    std::size_t p = 3;
    std::size_t population = 10000;
    Vector beta;
    ErrorLevel error_level = ErrorLevel::Low;
};

/// beta = (0.5, ..., 0.5), except beta_0 = -0.5 for the Exp scenario.
inline ScenarioSpec make_scenario(Scenario name, std::size_t p, std::size_t population, ErrorLevel error_level) {
    if (p != 3 && p != 7) throw Error(ErrorCode::InvalidArgument, "p must be 3 or 7");
    if (name == Scenario::DiscreteX && p != 3) throw Error(ErrorCode::InvalidArgument, "DiscreteX uses p = 3");
    ScenarioSpec spec{name, p, population, Vector(p + 1, 0.5), error_level};
    if (name == Scenario::Exp) spec.beta[0] = -0.5;
    return spec;
}

/// Covariate covariance: Sigma_ij = 0.5^{I(i != j)}; for unequalVar it is
/// additionally divided by i*j (1-based), giving variances 1/i^2.
inline Matrix scenario_covariance(Scenario name, std::size_t p) {
    Matrix sigma(p, p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double v = i == j ? 1.0 : 0.5;
            if (name == Scenario::UnequalVar) v /= static_cast<double>((i + 1) * (j + 1));
            sigma(i, j) = v;
        }
    return sigma;
}

/// N x (p+1) covariate matrix with the intercept column first.
inline Matrix gen_covariates(const ScenarioSpec& spec, RngStream& rng) {
    const std::size_t p = spec.p;
    const std::size_t n = spec.population;
    Matrix x(n, p + 1);
    const Matrix factor = cholesky(scenario_covariance(spec.name, p));
    Vector z(p);

    auto correlated_normal = [&](std::span<double> out) {
        for (auto& v : z) v = rng.normal();
        for (std::size_t a = 0; a < p; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b <= a; ++b) s += factor(a, b) * z[b];
            out[a] = s;
        }
    };

    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        row[0] = 1.0;
        auto cov = row.subspan(1);
        switch (spec.name) {
        case Scenario::ZeroMeanNormal:
        case Scenario::UnequalVar: correlated_normal(cov); break;
        case Scenario::RareEvent:
            correlated_normal(cov);
            for (double& v : cov) v -= 1.6;
            break;
        case Scenario::MixNormal: {
            const double shift = rng.bernoulli(0.5) ? 1.0 : -1.0;
            correlated_normal(cov);
            for (double& v : cov) v += shift;
            break;
        }
        case Scenario::T3: {
            correlated_normal(cov);
            const double w = rng.chi_square(3);
            const double scale = 1.0 / (std::sqrt(w / 3.0) * 10.0);
            for (double& v : cov) v *= scale;
            break;
        }
        case Scenario::Exp:
            for (double& v : cov) v = rng.exponential(2.0);
            break;
        case Scenario::DiscreteX:
            for (double& v : cov) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
            break;
        }
    }
    return x;
}

inline Binary gen_outcome(const Matrix& x, std::span<const double> beta, RngStream& rng) {
    if (beta.size() != x.cols()) throw Error(ErrorCode::DimensionMismatch, "beta length");
    Binary y(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) y[i] = rng.bernoulli(expit(dot(x.row(i), beta))) ? 1 : 0;
    return y;
}

/// Differential misclassification keyed on whether X_{threshold_variable}
/// falls below `threshold`.
struct SurrogateSpec {
    double sens_below = 1.0;
    double sens_above = 1.0;
    double spec_below = 1.0;
    double spec_above = 1.0;
    std::size_t threshold_variable = 1; // column of X, 1 = first covariate
    double threshold = 0.0;
};

/// Low error: specificity 0.1 I + 0.8, sensitivity 0.04 I + 0.95.
/// High error: specificity 0.1 I + 0.6, sensitivity 0.05 I + 0.9.
/// I = I(X_1 < c1).
inline SurrogateSpec surrogate_spec(ErrorLevel level, double threshold) {
    SurrogateSpec s;
    s.threshold = threshold;
    switch (level) {
    case ErrorLevel::None: break;
    case ErrorLevel::Low:
        s.spec_below = 0.9;
        s.spec_above = 0.8;
        s.sens_below = 0.99;
        s.sens_above = 0.95;
        break;
    case ErrorLevel::High:
        s.spec_below = 0.7;
        s.spec_above = 0.6;
        s.sens_below = 0.95;
        s.sens_above = 0.9;
        break;
    }
    return s;
}

/// c1: the 0.3 lower empirical quantile of X_1, or 0.5 for binary covariates.
inline double surrogate_threshold(const Matrix& x, Scenario name) {
    if (name == Scenario::DiscreteX) return 0.5;
    return empirical_quantile(x.col(1), 0.3);
}

inline Binary gen_surrogate(std::span<const int> y, const Matrix& x, const SurrogateSpec& spec, RngStream& rng) {
    if (y.size() != x.rows()) throw Error(ErrorCode::DimensionMismatch, "gen_surrogate");
    Binary s(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const bool below = x(i, spec.threshold_variable) < spec.threshold;
        if (y[i] == 1) {
            s[i] = rng.bernoulli(below ? spec.sens_below : spec.sens_above) ? 1 : 0;
        } else {
            s[i] = rng.bernoulli(below ? spec.spec_below : spec.spec_above) ? 0 : 1;
        }
    }
    return s;
}

/// Covariates, outcome and surrogate for one replicate. Each piece draws from
/// its own child stream.
inline Dataset generate_dataset(const ScenarioSpec& spec, const RngStream& rng) {
    RngStream x_rng = rng.derive(1);
    RngStream y_rng = rng.derive(2);
    RngStream s_rng = rng.derive(3);
    Dataset d;
    d.x = gen_covariates(spec, x_rng);
    d.y = gen_outcome(d.x, spec.beta, y_rng);
    const SurrogateSpec ss = surrogate_spec(spec.error_level, surrogate_threshold(d.x, spec.name));
    d.s = gen_surrogate(*d.y, d.x, ss, s_rng);
    for (std::size_t j = 1; j <= spec.p; ++j) d.covariate_names.push_back("x" + std::to_string(j));
    return d;
}

// ---------------------------------------------------------------------------
// CSV: comma separated, '.' decimal, mandatory header, unquoted numerics.
// Columns named y and s are the outcome and surrogate; every other column is
// a covariate in header order.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace detail

inline Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "missing header row");
    ++line_no;
    const auto header = detail::split_commas(line);
    std::optional<std::size_t> y_col, s_col;
    std::vector<std::size_t> cov_cols;
    Dataset d;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto name = detail::trim(header[c]);
        if (name.empty()) throw Error(ErrorCode::ParseError, "row 1, column " + std::to_string(c + 1) + ": empty name");
        if (name == "y") y_col = c;
        else if (name == "s") s_col = c;
        else {
            cov_cols.push_back(c);
            d.covariate_names.emplace_back(name);
        }
    }
    if (!y_col && !s_col) throw Error(ErrorCode::MissingOutcomeColumns, "need a 'y' or 's' column");

    std::vector<double> xs;
    Binary ys, ss;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_commas(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(header.size()) + " fields, found " +
                                                   std::to_string(fields.size()));
        }
        std::vector<double> values(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto f = detail::trim(fields[c]);
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ", column " +
                                                       std::to_string(c + 1) + ": '" + std::string(f) + "'");
            }
            values[c] = v;
        }
        auto binary_at = [&](std::size_t c, const char* what) {
            const double v = values[c];
            if (v != 0.0 && v != 1.0) {
                throw Error(ErrorCode::NonBinaryOutcome, std::string(what) + " = " + std::string(detail::trim(fields[c])) +
                                                             " at row " + std::to_string(line_no));
            }
            return static_cast<int>(v);
        };
        if (y_col) ys.push_back(binary_at(*y_col, "y"));
        if (s_col) ss.push_back(binary_at(*s_col, "s"));
        xs.push_back(1.0);
        for (std::size_t c : cov_cols) xs.push_back(values[c]);
        ++rows;
    }
    d.x = Matrix(rows, cov_cols.size() + 1, std::move(xs));
    if (y_col) d.y = std::move(ys);
    if (s_col) d.s = std::move(ss);
    return d;
}

inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return read_dataset_csv(in);
}

/// Writes the same dialect read_dataset_csv accepts; doubles are printed in
/// shortest round-trip form, so save -> load is bit-exact.
inline void write_dataset_csv(const Dataset& d, std::ostream& out) {
    std::string header;
    if (d.y) header += "y";
    if (d.s) header += std::string(header.empty() ? "" : ",") + "s";
    for (std::size_t j = 0; j < d.p(); ++j) {
        const std::string name = j < d.covariate_names.size() ? d.covariate_names[j] : "x" + std::to_string(j + 1);
        header += (header.empty() ? "" : ",") + name;
    }
    out << header << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::string line;
        if (d.y) line += std::to_string((*d.y)[i]);
        if (d.s) line += std::string(line.empty() ? "" : ",") + std::to_string((*d.s)[i]);
        for (std::size_t j = 1; j < d.x.cols(); ++j) {
            line += (line.empty() ? "" : ",") + detail::format_double(d.x(i, j));
        }
        out << line << '\n';
    }
}

inline void save_dataset_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    write_dataset_csv(d, out);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

/// Synthetic stand-in for an HIV clinic cohort: N = 1595, age and CD4 at
/// treatment start, a rare event outcome (prevalence 0.06) that is more
/// likely at low CD4, and a surrogate with specificity 0.90 and sensitivity
/// 0.72 below / 0.90 above the 0.3 quantile of CD4.
inline Dataset gen_vccc_like(const RngStream& rng) {
    constexpr std::size_t kN = 1595;
    constexpr double kPrevalence = 0.06;
    RngStream x_rng = rng.derive(1);
    RngStream y_rng = rng.derive(2);
    RngStream s_rng = rng.derive(3);

    Matrix x(kN, 3);
    Vector lin(kN);
    for (std::size_t i = 0; i < kN; ++i) {
        const double age = std::max(18.0, 38.0 + 10.0 * x_rng.normal());
        const double log_cd4 = std::log(250.0) + 0.8 * x_rng.normal();
        x(i, 0) = 1.0;
        x(i, 1) = std::round(age * 10.0) / 10.0;
        x(i, 2) = std::round(std::exp(log_cd4));
        lin[i] = 0.2 * (age - 38.0) / 10.0 - 0.5 * (log_cd4 - std::log(250.0)) / 0.8;
    }
    // intercept calibrated so the mean event probability is exactly kPrevalence
    double lo = -15.0, hi = 5.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double m = 0.0;
        for (double l : lin) m += expit(mid + l);
        (m / static_cast<double>(kN) < kPrevalence ? lo : hi) = mid;
    }
    const double b0 = 0.5 * (lo + hi);
    Binary y(kN);
    for (std::size_t i = 0; i < kN; ++i) y[i] = y_rng.bernoulli(expit(b0 + lin[i])) ? 1 : 0;

    SurrogateSpec spec;
    spec.threshold_variable = 2;
    spec.threshold = empirical_quantile(x.col(2), 0.3);
    spec.sens_below = 0.72;
    spec.sens_above = 0.90;
    spec.spec_below = 0.90;
    spec.spec_above = 0.90;
    Dataset d;
    d.s = gen_surrogate(y, x, spec, s_rng);
    d.y = std::move(y);
    d.x = std::move(x);
    d.covariate_names = {"age", "cd4"};
    return d;
}

} // namespace subopt
