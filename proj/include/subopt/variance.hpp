#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "subopt/designs.hpp"
#include "subopt/error.hpp"
#include "subopt/logistic.hpp"
#include "subopt/numerics.hpp"

namespace subopt {

/// Design variance of T = (1/N) sum R_i h_i / pi_i, conditional on the
/// population (y, X). Rows of H are the influence functions.
struct VarianceReport {
    Matrix matrix;
    double trace = 0.0;
    std::string design_tag;
};

inline VarianceReport make_report(Matrix m, std::string tag) {
    // symmetrise away the last bits of rounding
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double a = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = a;
            m(j, i) = a;
        }
    const double tr = m.trace();
    return {std::move(m), tr, std::move(tag)};
}

/// Divisor used for the within-stratum variance matrices V_{h,k}.
///
/// `Sample` (N_k - 1) makes the stratified formula the exact design variance
/// of stratified SRS. `Population` (N_k) is the finite-population moment; the
/// two agree as N_k grows. Singleton strata get V = 0 either way.
enum class Divisor { Sample, Population };

inline std::vector<Matrix> stratum_covariances(const Matrix& h, const StrataAssignment& strata,
                                               Divisor divisor = Divisor::Sample) {
    if (h.rows() != strata.size()) throw Error(ErrorCode::DimensionMismatch, "one stratum per influence row");
    const std::size_t q = h.cols();
    std::vector<Vector> mean(strata.k, Vector(q, 0.0));
    for (std::size_t i = 0; i < h.rows(); ++i) {
        auto& m = mean[static_cast<std::size_t>(strata.stratum_of[i])];
        const auto r = h.row(i);
        for (std::size_t j = 0; j < q; ++j) m[j] += r[j];
    }
    for (std::size_t k = 0; k < strata.k; ++k)
        for (double& v : mean[k]) v /= static_cast<double>(strata.counts[k]);

    std::vector<Matrix> cov(strata.k, Matrix(q, q));
    Vector centred(q);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const auto k = static_cast<std::size_t>(strata.stratum_of[i]);
        const auto r = h.row(i);
        for (std::size_t j = 0; j < q; ++j) centred[j] = r[j] - mean[k][j];
        cov[k].add_outer(centred, 1.0);
    }
    for (std::size_t k = 0; k < strata.k; ++k) {
        const double nk = static_cast<double>(strata.counts[k]);
        const double denom = divisor == Divisor::Sample ? nk - 1.0 : nk;
        if (strata.counts[k] < 2) cov[k] *= 0.0;
        else cov[k] *= 1.0 / denom;
    }
    return cov;
}

/// sqrt(Tr V_{h,k}) for every stratum: the Neyman sd of the influence rows.
inline Vector stratum_root_traces(const Matrix& h, const StrataAssignment& strata, Divisor divisor = Divisor::Sample) {
    const auto cov = stratum_covariances(h, strata, divisor);
    Vector out(cov.size());
    for (std::size_t k = 0; k < cov.size(); ++k) out[k] = std::sqrt(std::max(0.0, cov[k].trace()));
    return out;
}

/// (1/N^2) sum_i (1/pi_i - 1) h_i h_i^T.
inline VarianceReport poisson_variance(const Matrix& h, std::span<const double> pi) {
    if (pi.size() != h.rows()) throw Error(ErrorCode::DimensionMismatch, "one pi per influence row");
    const double n_pop = static_cast<double>(h.rows());
    Matrix v(h.cols(), h.cols());
    for (std::size_t i = 0; i < h.rows(); ++i) {
        if (!(pi[i] > 0.0 && pi[i] <= 1.0)) throw Error(ErrorCode::InvalidArgument, "pi must lie in (0,1]");
        v.add_outer(h.row(i), 1.0 / pi[i] - 1.0);
    }
    v *= 1.0 / (n_pop * n_pop);
    return make_report(std::move(v), "poisson");
}

/// (1/N^2) sum_k N_k^2 (1 - n_k/N_k) / n_k V_{h,k}, for real-valued n_k.
inline VarianceReport stratified_variance(const Matrix& h, const StrataAssignment& strata,
                                          std::span<const double> allocation, Divisor divisor = Divisor::Sample) {
    if (allocation.size() != strata.k) throw Error(ErrorCode::DimensionMismatch, "one n_k per stratum");
    const auto cov = stratum_covariances(h, strata, divisor);
    const double n_pop = static_cast<double>(h.rows());
    Matrix v(h.cols(), h.cols());
    for (std::size_t k = 0; k < strata.k; ++k) {
        const double nk = allocation[k];
        const double big = static_cast<double>(strata.counts[k]);
        if (!(nk > 0.0)) throw Error(ErrorCode::InvalidArgument, "n_k must be positive");
        v += cov[k] * (big * big * (1.0 - nk / big) / nk);
    }
    v *= 1.0 / (n_pop * n_pop);
    return make_report(std::move(v), "stratified");
}

inline VarianceReport stratified_variance(const Matrix& h, const StratifiedDesign& design,
                                          Divisor divisor = Divisor::Sample) {
    Vector alloc(design.allocation.begin(), design.allocation.end());
    return stratified_variance(h, design.strata, alloc, divisor);
}

/// Variance at the real-valued Neyman allocation,
///   (1/N^2) sum_k N_k V_k ( sum_k' N_k' sqrt(Tr V_k') / (n sqrt(Tr V_k)) - 1 ).
/// Zero-trace strata contribute nothing.
inline VarianceReport neyman_variance(const Matrix& h, const StrataAssignment& strata, std::size_t n,
                                      Divisor divisor = Divisor::Sample) {
    if (n == 0) throw Error(ErrorCode::InfeasibleBudget, "n must be positive");
    const auto cov = stratum_covariances(h, strata, divisor);
    double weighted_root = 0.0;
    Vector root(strata.k);
    for (std::size_t k = 0; k < strata.k; ++k) {
        root[k] = std::sqrt(std::max(0.0, cov[k].trace()));
        weighted_root += static_cast<double>(strata.counts[k]) * root[k];
    }
    const double n_pop = static_cast<double>(h.rows());
    Matrix v(h.cols(), h.cols());
    for (std::size_t k = 0; k < strata.k; ++k) {
        if (root[k] <= 0.0) continue;
        const double factor = weighted_root / (static_cast<double>(n) * root[k]) - 1.0;
        v += cov[k] * (static_cast<double>(strata.counts[k]) * factor);
    }
    v *= 1.0 / (n_pop * n_pop);
    return make_report(std::move(v), "neyman");
}

/// Real-valued Neyman allocation n N_k sqrt(Tr V_k) / sum_k' N_k' sqrt(Tr V_k')
/// with no bounds applied.
inline Vector neyman_fractional_allocation(const Matrix& h, const StrataAssignment& strata, std::size_t n,
                                           Divisor divisor = Divisor::Sample) {
    const Vector root = stratum_root_traces(h, strata, divisor);
    double total = 0.0;
    for (std::size_t k = 0; k < strata.k; ++k) total += static_cast<double>(strata.counts[k]) * root[k];
    Vector out(strata.k);
    for (std::size_t k = 0; k < strata.k; ++k) {
        out[k] = static_cast<double>(n) * static_cast<double>(strata.counts[k]) * root[k] / total;
    }
    return out;
}

namespace detail {

inline double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t j = 1; j <= k; ++j) r = r * static_cast<double>(n - k + j) / static_cast<double>(j);
    return r;
}

// Advances `idx` (strictly increasing, values < n) to the next combination.
inline bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
    const std::size_t m = idx.size();
    for (std::size_t j = m; j-- > 0;) {
        if (idx[j] < n - m + j) {
            ++idx[j];
            for (std::size_t t = j + 1; t < m; ++t) idx[t] = idx[t - 1] + 1;
            return true;
        }
    }
    return false;
}

} // namespace detail

constexpr double kMaxEnumeration = 1e6;

/// Exact variance of T under stratified SRS by enumerating every one of the
/// prod_k C(N_k, n_k) equally likely samples.
inline VarianceReport brute_force_design_variance(const Matrix& h, const StratifiedDesign& design) {
    const auto& strata = design.strata;
    const std::size_t q = h.cols();
    const double n_pop = static_cast<double>(h.rows());
    double count = 1.0;
    for (std::size_t k = 0; k < strata.k; ++k) count *= detail::binomial(strata.counts[k], design.allocation[k]);
    if (count > kMaxEnumeration) {
        throw Error(ErrorCode::EnumerationTooLarge, std::to_string(count) + " samples");
    }
    const auto members = strata.members();

    // Every possible contribution of each stratum to T.
    std::vector<std::vector<Vector>> contrib(strata.k);
    for (std::size_t k = 0; k < strata.k; ++k) {
        const std::size_t nk = design.allocation[k];
        const double w = static_cast<double>(strata.counts[k]) / static_cast<double>(nk) / n_pop;
        std::vector<std::size_t> idx(nk);
        std::iota(idx.begin(), idx.end(), 0);
        do {
            Vector c(q, 0.0);
            for (std::size_t t : idx) {
                const auto r = h.row(members[k][t]);
                for (std::size_t j = 0; j < q; ++j) c[j] += w * r[j];
            }
            contrib[k].push_back(std::move(c));
        } while (detail::next_combination(idx, strata.counts[k]));
    }

    auto for_each_sample = [&](auto&& visit) {
        std::vector<std::size_t> odo(strata.k, 0);
        Vector t(q);
        for (;;) {
            std::fill(t.begin(), t.end(), 0.0);
            for (std::size_t k = 0; k < strata.k; ++k)
                for (std::size_t j = 0; j < q; ++j) t[j] += contrib[k][odo[k]][j];
            visit(t);
            std::size_t k = 0;
            for (; k < strata.k; ++k) {
                if (++odo[k] < contrib[k].size()) break;
                odo[k] = 0;
            }
            if (k == strata.k) break;
        }
    };

    Vector mean(q, 0.0);
    for_each_sample([&](const Vector& t) {
        for (std::size_t j = 0; j < q; ++j) mean[j] += t[j];
    });
    for (double& m : mean) m /= count;
    Matrix v(q, q);
    Vector centred(q);
    for_each_sample([&](const Vector& t) {
        for (std::size_t j = 0; j < q; ++j) centred[j] = t[j] - mean[j];
        v.add_outer(centred, 1.0);
    });
    v *= 1.0 / count;
    return make_report(std::move(v), "stratified-enumerated");
}

/// Exact variance of T under an individualized design. Poisson designs with
/// N <= 20 are enumerated over all 2^N inclusion patterns; larger ones use
/// the independence sum of Var(R_i / pi_i). With-replacement designs use the
/// multinomial form Var = (E[z z^T] - E[z] E[z]^T) / (n N^2), z = h_I / p_I.
inline VarianceReport brute_force_design_variance(const Matrix& h, const IndividualizedDesign& design) {
    const std::size_t total = h.rows();
    const std::size_t q = h.cols();
    const double n_pop = static_cast<double>(total);
    if (design.pi.size() != total) throw Error(ErrorCode::DimensionMismatch, "one pi per influence row");

    if (design.mechanism == Mechanism::WithReplacement) {
        const double mass = design.total();
        const auto draws = static_cast<double>(std::llround(mass));
        Vector ez(q, 0.0);
        Matrix ezz(q, q);
        for (std::size_t i = 0; i < total; ++i) {
            const double p = design.pi[i] / mass;
            if (p <= 0.0) throw Error(ErrorCode::InvalidArgument, "zero draw probability");
            const auto r = h.row(i);
            for (std::size_t j = 0; j < q; ++j) ez[j] += r[j];
            ezz.add_outer(r, 1.0 / p);
        }
        ezz.add_outer(ez, -1.0);
        ezz *= 1.0 / (draws * n_pop * n_pop);
        return make_report(std::move(ezz), "with-replacement-exact");
    }

    if (total <= 20) {
        const std::uint64_t patterns = std::uint64_t{1} << total;
        Vector mean(q, 0.0);
        Matrix second(q, q);
        Vector t(q);
        std::vector<std::pair<double, Vector>> outcomes;
        outcomes.reserve(patterns);
        for (std::uint64_t mask = 0; mask < patterns; ++mask) {
            double prob = 1.0;
            std::fill(t.begin(), t.end(), 0.0);
            for (std::size_t i = 0; i < total; ++i) {
                const double p = design.pi[i];
                if (mask >> i & 1U) {
                    prob *= p;
                    const auto r = h.row(i);
                    for (std::size_t j = 0; j < q; ++j) t[j] += r[j] / (p * n_pop);
                } else {
                    prob *= 1.0 - p;
                }
            }
            if (prob == 0.0) continue;
            for (std::size_t j = 0; j < q; ++j) mean[j] += prob * t[j];
            outcomes.emplace_back(prob, t);
        }
        Vector centred(q);
        for (const auto& [prob, tv] : outcomes) {
            for (std::size_t j = 0; j < q; ++j) centred[j] = tv[j] - mean[j];
            second.add_outer(centred, prob);
        }
        return make_report(std::move(second), "poisson-enumerated");
    }

    Matrix v(q, q);
    for (std::size_t i = 0; i < total; ++i) {
        const double p = design.pi[i];
        // Var(R/p) = p (1 - p) / p^2
        v.add_outer(h.row(i), p * (1.0 - p) / (p * p) / (n_pop * n_pop));
    }
    return make_report(std::move(v), "poisson-independence");
}

/// Tr(Poisson variance at OSMAC intensities) - Tr(Neyman variance) for the
/// given strata, with V_{h,k} taken as finite-population moments.
inline double trace_gap(const InfluenceMatrix& infl, std::size_t n, const StrataAssignment& strata) {
    const IndividualizedDesign pois = osmac(infl.norms, n);
    const double pois_trace = poisson_variance(infl.h, pois.pi).trace;
    const double strat_trace = neyman_variance(infl.h, strata, n, Divisor::Population).trace;
    return pois_trace - strat_trace;
}

/// trace_gap with each unit placed in one of K strata uniformly at random,
/// i.e. a stratification that carries no information. Empty strata drop out.
inline double trace_gap_uninformative(const InfluenceMatrix& infl, std::size_t n, std::size_t k, RngStream& rng) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "K must be positive");
    std::vector<long long> labels(infl.h.rows());
    for (auto& l : labels) l = static_cast<long long>(rng.uniform_index(k));
    return trace_gap(infl, n, strata_from_labels(labels));
}

} // namespace subopt
