#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subopt/error.hpp"
#include "subopt/numerics.hpp"

namespace subopt {

using Binary = std::vector<int>;

/// Covariates with a leading intercept column, plus the true outcome and/or
/// an error-prone surrogate.
struct Dataset {
    Matrix x;
    std::optional<Binary> y;
    std::optional<Binary> s;
    std::vector<std::string> covariate_names; // excludes the intercept

    [[nodiscard]] std::size_t size() const noexcept { return x.rows(); }
    [[nodiscard]] std::size_t p() const noexcept { return x.cols() == 0 ? 0 : x.cols() - 1; }
};

inline void validate_binary(std::span<const int> v, std::size_t n, const char* what) {
    if (v.size() != n) throw Error(ErrorCode::DimensionMismatch, std::string(what) + " length");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != 0 && v[i] != 1) {
            throw Error(ErrorCode::NonBinaryOutcome,
                        std::string(what) + " value " + std::to_string(v[i]) + " at row " + std::to_string(i));
        }
    }
}

inline void validate(const Dataset& d) {
    const std::size_t n = d.size();
    if (d.x.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "covariate matrix has no columns");
    if (n < d.x.cols() + 1) throw Error(ErrorCode::InvalidArgument, "need N >= p + 2");
    for (std::size_t i = 0; i < n; ++i) {
        if (d.x(i, 0) != 1.0) throw Error(ErrorCode::InvalidArgument, "first column must be the intercept");
        for (double v : d.x.row(i)) {
            if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite covariate");
        }
    }
    if (d.y) validate_binary(*d.y, n, "y");
    if (d.s) validate_binary(*d.s, n, "s");
}

/// Logistic function, stable for large |z|.
inline double expit(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double log1p_exp(double z) noexcept {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct FitOptions {
    int max_iterations = 50;
    int max_halvings = 30;
    double tolerance = 1e-10;
};

struct FittedModel {
    Vector beta;
    Matrix m_x;
    bool converged = false;
    int iterations = 0;
    double final_score_norm = 0.0;
};

namespace detail {

struct WeightedPieces {
    double loglik = 0.0;
    Vector score;  // normalised by the weight total
    Matrix info;   // normalised by the weight total
};

inline WeightedPieces weighted_pieces(const Matrix& x, std::span<const int> outcome,
                                      std::span<const double> weights, std::span<const double> beta,
                                      double weight_total, bool with_info) {
    const std::size_t q = x.cols();
    WeightedPieces out{0.0, Vector(q, 0.0), Matrix(with_info ? q : 0, with_info ? q : 0)};
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double w = weights[i];
        if (w == 0.0) continue;
        const auto xi = x.row(i);
        const double eta = dot(xi, beta);
        const double p = expit(eta);
        out.loglik += w * (outcome[i] * eta - log1p_exp(eta));
        const double r = w * (outcome[i] - p);
        for (std::size_t j = 0; j < q; ++j) out.score[j] += r * xi[j];
        if (with_info) out.info.add_outer(xi, w * p * (1.0 - p));
    }
    for (double& g : out.score) g /= weight_total;
    if (with_info) out.info *= 1.0 / weight_total;
    return out;
}

} // namespace detail

/// Weighted logistic MLE by IRLS (Newton) with step-halving.
///
/// The score and M_x are averaged over the weight total, so weights that are
/// all 1 reproduce the (1/N) normalisation of the full-data score and scaling
/// every weight by c leaves the iteration unchanged. A fit that exhausts its
/// iterations comes back with converged = false; a design whose weighted
/// information is singular at the starting point throws DegenerateDesign.
inline FittedModel fit_weighted_mle(const Matrix& x, std::span<const int> outcome, std::span<const double> weights,
                                    const FitOptions& opts = {}) {
    const std::size_t n = x.rows();
    const std::size_t q = x.cols();
    if (outcome.size() != n || weights.size() != n) throw Error(ErrorCode::DimensionMismatch, "fit_weighted_mle");

    double weight_total = 0.0;
    double weighted_cases = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
            throw Error(ErrorCode::InvalidArgument, "weights must be finite and non-negative");
        }
        weight_total += weights[i];
        if (weights[i] > 0.0) weighted_cases += weights[i] * outcome[i];
    }
    if (weight_total <= 0.0) throw Error(ErrorCode::DegenerateOutcome, "no unit has positive weight");
    if (weighted_cases <= 0.0 || weighted_cases >= weight_total) {
        throw Error(ErrorCode::DegenerateOutcome, "need at least one case and one control");
    }

    FittedModel fit;
    fit.beta.assign(q, 0.0);
    auto cur = detail::weighted_pieces(x, outcome, weights, fit.beta, weight_total, true);

    for (int it = 0;; ++it) {
        fit.iterations = it;
        fit.final_score_norm = max_abs(cur.score);

        Vector step;
        try {
            step = spd_solve(cur.info, cur.score);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NotPositiveDefinite) throw;
            if (it == 0) throw Error(ErrorCode::DegenerateDesign, "weighted X^T W X is not positive definite");
            break; // information collapsed mid-way: separation
        }
        // Under separation the score decays like exp(-|beta|) while Newton
        // steps stay O(1), so a small score alone is not convergence.
        if (fit.final_score_norm <= opts.tolerance && max_abs(step) <= std::sqrt(opts.tolerance)) {
            fit.converged = true;
            break;
        }
        if (it >= opts.max_iterations) break;

        double scale = 1.0;
        Vector trial(q);
        detail::WeightedPieces next;
        const double slack = 1e-12 * (1.0 + std::abs(cur.loglik));
        for (int h = 0;; ++h) {
            for (std::size_t j = 0; j < q; ++j) trial[j] = fit.beta[j] + scale * step[j];
            next = detail::weighted_pieces(x, outcome, weights, trial, weight_total, false);
            if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - slack) break;
            if (h >= opts.max_halvings) break;
            scale *= 0.5;
        }
        fit.beta = trial;
        cur = detail::weighted_pieces(x, outcome, weights, fit.beta, weight_total, true);
    }
    fit.m_x = cur.info;
    return fit;
}

inline FittedModel fit_weighted_mle(const Dataset& data, std::span<const int> outcome,
                                    std::span<const double> weights, const FitOptions& opts = {}) {
    return fit_weighted_mle(data.x, outcome, weights, opts);
}

inline FittedModel fit_mle(const Matrix& x, std::span<const int> outcome, const FitOptions& opts = {}) {
    const Vector ones(x.rows(), 1.0);
    return fit_weighted_mle(x, outcome, ones, opts);
}

inline Vector fitted_probabilities(const Matrix& x, std::span<const double> beta) {
    Vector p(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) p[i] = expit(dot(x.row(i), beta));
    return p;
}

/// Per-unit influence functions h_i = M_x^{-1} (y_i - p_i) x_i and their norms.
struct InfluenceMatrix {
    Matrix h;
    Vector norms;
};

inline InfluenceMatrix make_influence(Matrix h) {
    InfluenceMatrix out{std::move(h), {}};
    out.norms.resize(out.h.rows());
    for (std::size_t i = 0; i < out.h.rows(); ++i) out.norms[i] = norm2(out.h.row(i));
    return out;
}

inline InfluenceMatrix influence(const Matrix& x, std::span<const int> outcome, const FittedModel& model) {
    if (outcome.size() != x.rows()) throw Error(ErrorCode::DimensionMismatch, "influence");
    const Matrix l = cholesky(model.m_x);
    Matrix h(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto xi = x.row(i);
        const double r = outcome[i] - expit(dot(xi, model.beta));
        auto hi = h.row(i);
        for (std::size_t j = 0; j < xi.size(); ++j) hi[j] = r * xi[j];
        cholesky_solve_inplace(l, hi);
    }
    return make_influence(std::move(h));
}

inline InfluenceMatrix influence(const Dataset& data, std::span<const int> outcome, const FittedModel& model) {
    return influence(data.x, outcome, model);
}

/// Rows of M_x^{-1} x_i, the outcome-free factor shared by the OSMAC and
/// surrogate-assisted intensities.
inline Vector leverage_norms(const Matrix& x, const Matrix& m_x) {
    const Matrix l = cholesky(m_x);
    Vector out(x.rows());
    Vector buf(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto xi = x.row(i);
        std::copy(xi.begin(), xi.end(), buf.begin());
        cholesky_solve_inplace(l, buf);
        out[i] = norm2(buf);
    }
    return out;
}

} // namespace subopt
