#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "subopt/error.hpp"
#include "subopt/logistic.hpp"
#include "subopt/numerics.hpp"

namespace subopt {

enum class Mechanism { PoissonIndependent, WithReplacement };

/// Unit-level expected-draw intensities summing to the budget.
struct IndividualizedDesign {
    Vector pi;
    Mechanism mechanism = Mechanism::PoissonIndependent;

    [[nodiscard]] double total() const { return std::accumulate(pi.begin(), pi.end(), 0.0); }
};

struct StrataAssignment {
    std::vector<int> stratum_of;
    std::size_t k = 0;
    std::vector<std::size_t> counts;
    std::vector<std::string> labels;

    [[nodiscard]] std::size_t size() const noexcept { return stratum_of.size(); }

    [[nodiscard]] std::vector<std::vector<std::size_t>> members() const {
        std::vector<std::vector<std::size_t>> out(k);
        for (std::size_t k_ = 0; k_ < k; ++k_) out[k_].reserve(counts[k_]);
        for (std::size_t i = 0; i < stratum_of.size(); ++i) out[static_cast<std::size_t>(stratum_of[i])].push_back(i);
        return out;
    }
};

/// Stratified SRS: n_k units drawn without replacement from each stratum.
struct StratifiedDesign {
    StrataAssignment strata;
    std::vector<std::size_t> allocation;

    [[nodiscard]] std::size_t total() const {
        return std::accumulate(allocation.begin(), allocation.end(), std::size_t{0});
    }
    [[nodiscard]] double inclusion_probability(std::size_t unit) const {
        const auto k = static_cast<std::size_t>(strata.stratum_of[unit]);
        return static_cast<double>(allocation[k]) / static_cast<double>(strata.counts[k]);
    }
};

/// Pilot wave plus the second-wave top-up. The combined sample is treated as
/// a stratified SRS of size wave1 + wave2 in each stratum, giving estimation
/// weights N_k / (n1_k + n2_k).
struct TwoWaveDesign {
    StratifiedDesign wave1;
    std::vector<std::size_t> wave2_allocation;

    [[nodiscard]] std::vector<std::size_t> combined_allocation() const {
        std::vector<std::size_t> out = wave1.allocation;
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += wave2_allocation[k];
        return out;
    }
    [[nodiscard]] StratifiedDesign combined() const { return {wave1.strata, combined_allocation()}; }
};

/// Builds a StrataAssignment from arbitrary integer labels; strata are
/// numbered in increasing label order and only non-empty labels survive.
inline StrataAssignment strata_from_labels(std::span<const long long> labels,
                                           const std::map<long long, std::string>& names = {}) {
    std::map<long long, std::size_t> index;
    for (long long l : labels) index.emplace(l, 0);
    std::size_t next = 0;
    StrataAssignment out;
    for (auto& [label, idx] : index) {
        idx = next++;
        auto it = names.find(label);
        out.labels.push_back(it != names.end() ? it->second : std::to_string(label));
    }
    out.k = next;
    out.counts.assign(out.k, 0);
    out.stratum_of.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t s = index.at(labels[i]);
        out.stratum_of[i] = static_cast<int>(s);
        ++out.counts[s];
    }
    return out;
}

namespace detail {

// Real-valued allocation proportional to `weights`, summing to `total`,
// with each entry held inside [lower_k, upper_k]. Entries that hit a bound
// are frozen there and the rest is re-spread; upper violations are resolved
// before lower ones so the loop cannot cycle.
inline Vector bounded_proportional(std::span<const double> weights, std::span<const double> lower,
                                   std::span<const double> upper, double total) {
    const std::size_t k = weights.size();
    Vector out(k, 0.0);
    std::vector<char> fixed(k, 0);
    for (std::size_t it = 0; it <= 2 * k + 1; ++it) {
        double budget = total;
        double wsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (fixed[j]) budget -= out[j];
            else wsum += weights[j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (!fixed[j]) out[j] = wsum > 0.0 ? budget * weights[j] / wsum : 0.0;
        }
        bool changed = false;
        for (std::size_t j = 0; j < k; ++j) {
            if (!fixed[j] && out[j] > upper[j]) {
                out[j] = upper[j];
                fixed[j] = 1;
                changed = true;
            }
        }
        if (changed) continue;
        for (std::size_t j = 0; j < k; ++j) {
            if (!fixed[j] && out[j] < lower[j]) {
                out[j] = lower[j];
                fixed[j] = 1;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return out;
}

} // namespace detail

/// Largest-remainder (Hamilton) rounding of `targets` to integers summing to
/// `total`, never exceeding `caps`. Ties go to the lower index.
inline std::vector<std::size_t> integerize(std::span<const double> targets, std::span<const std::size_t> caps,
                                           std::size_t total) {
    const std::size_t k = targets.size();
    std::vector<std::size_t> out(k);
    Vector remainder(k);
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < k; ++j) {
        const double t = std::max(0.0, targets[j]);
        const double fl = std::floor(t);
        out[j] = std::min(static_cast<std::size_t>(fl), caps[j]);
        remainder[j] = out[j] == caps[j] ? -1.0 : t - fl;
        assigned += out[j];
    }
    if (assigned > total) throw Error(ErrorCode::InvalidArgument, "integerize: targets exceed total");
    std::size_t capacity = 0;
    for (std::size_t j = 0; j < k; ++j) capacity += caps[j] - out[j];
    if (total - assigned > capacity) throw Error(ErrorCode::InfeasibleBudget, "integerize: caps below total");

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    while (assigned < total) {
        for (std::size_t j : order) {
            if (assigned == total) break;
            if (out[j] < caps[j]) {
                ++out[j];
                ++assigned;
            }
        }
    }
    return out;
}

/// Case-control design: min(n/2, #cases) cases, the rest controls, any
/// shortfall of controls handed back to cases. Stratum 0 holds the controls
/// and stratum 1 the cases.
inline StratifiedDesign case_control(std::span<const int> outcome, std::size_t n) {
    const std::size_t total = outcome.size();
    if (n > total) throw Error(ErrorCode::InfeasibleBudget, "case-control budget exceeds population");
    std::vector<long long> labels(outcome.begin(), outcome.end());
    StrataAssignment strata = strata_from_labels(labels, {{0, "control"}, {1, "case"}});
    if (strata.k != 2) throw Error(ErrorCode::DegenerateOutcome, "case-control needs both cases and controls");
    if (n < 2) throw Error(ErrorCode::InfeasibleBudget, "case-control needs n >= 2");
    const std::size_t cases = strata.counts[1];
    const std::size_t controls = strata.counts[0];
    std::size_t n_case = std::min(n / 2, cases);
    std::size_t n_control = n - n_case;
    if (n_control > controls) {
        n_control = controls;
        n_case = n - controls;
    }
    return {std::move(strata), {n_control, n_case}};
}

/// Normalises non-negative scores to intensities summing to n, capped at 1.
///
/// Zero scores get the floor n / (100 N); capped units are frozen at 1 and
/// the leftover budget is re-spread over the others in proportion to their
/// scores until nothing exceeds 1.
inline IndividualizedDesign proportional_intensities(std::span<const double> scores, std::size_t n,
                                                     Mechanism mechanism = Mechanism::PoissonIndependent) {
    const std::size_t total = scores.size();
    if (total == 0) throw Error(ErrorCode::EmptyInput, "no units");
    if (n == 0 || n > total) throw Error(ErrorCode::InfeasibleBudget, "budget must lie in [1, N]");
    double score_sum = 0.0;
    std::size_t zeros = 0;
    for (double s : scores) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "scores must be finite and >= 0");
        score_sum += s;
        if (s == 0.0) ++zeros;
    }
    if (score_sum <= 0.0) throw Error(ErrorCode::AllZeroNorms, "every score is zero");

    const double budget = static_cast<double>(n);
    const double floor_pi = budget / (100.0 * static_cast<double>(total));
    IndividualizedDesign d{Vector(total, 0.0), mechanism};
    std::vector<char> capped(total, 0);
    double free_budget = budget - floor_pi * static_cast<double>(zeros);
    std::size_t n_capped = 0;
    for (std::size_t it = 0; it <= total; ++it) {
        double free_sum = 0.0;
        for (std::size_t i = 0; i < total; ++i) {
            if (!capped[i] && scores[i] > 0.0) free_sum += scores[i];
        }
        const double remaining = free_budget - static_cast<double>(n_capped);
        bool changed = false;
        for (std::size_t i = 0; i < total; ++i) {
            if (capped[i] || scores[i] == 0.0) continue;
            d.pi[i] = free_sum > 0.0 ? remaining * scores[i] / free_sum : 0.0;
            if (d.pi[i] > 1.0) {
                d.pi[i] = 1.0;
                capped[i] = 1;
                ++n_capped;
                changed = true;
            }
        }
        if (!changed) break;
    }
    // Leftover budget when every positive-score unit is capped goes to the
    // floor units (only reachable when n is close to N).
    double floor_value = floor_pi;
    if (zeros > 0 && n_capped == total - zeros) {
        const double leftover = free_budget - static_cast<double>(n_capped);
        floor_value = std::min(1.0, floor_pi + leftover / static_cast<double>(zeros));
    }
    for (std::size_t i = 0; i < total; ++i) {
        if (scores[i] == 0.0) d.pi[i] = floor_value;
    }
    return d;
}

/// OSMAC intensities: proportional to the influence-function norms.
inline IndividualizedDesign osmac(std::span<const double> influence_norms, std::size_t n,
                                  Mechanism mechanism = Mechanism::PoissonIndependent) {
    return proportional_intensities(influence_norms, n, mechanism);
}

/// Surrogate-assisted intensities,
///   pi_i  ∝  sqrt(ps_i - 2 ps_i p_i + p_i^2) * ||M_x^{-1} x_i||,
/// normalised to n2 and capped like osmac.
inline IndividualizedDesign ossat(std::span<const double> p_hat, std::span<const double> p_s_hat, const Matrix& x,
                                  const Matrix& m_x, std::size_t n2,
                                  Mechanism mechanism = Mechanism::WithReplacement) {
    const std::size_t total = x.rows();
    if (p_hat.size() != total || p_s_hat.size() != total) throw Error(ErrorCode::DimensionMismatch, "ossat");
    if (n2 < 1) throw Error(ErrorCode::InfeasibleBudget, "ossat needs n2 >= 1");
    const Vector lev = leverage_norms(x, m_x);
    Vector score(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double p = p_hat[i];
        const double ps = p_s_hat[i];
        if (p < 0.0 || p > 1.0 || ps < 0.0 || ps > 1.0) {
            throw Error(ErrorCode::InvalidArgument, "probabilities must lie in [0,1]");
        }
        double radicand = ps - 2.0 * ps * p + p * p;
        if (radicand < -1e-12) {
            throw Error(ErrorCode::NegativeRadicand, "radicand " + std::to_string(radicand) + " at unit " +
                                                         std::to_string(i));
        }
        radicand = std::max(radicand, 0.0);
        score[i] = std::sqrt(radicand) * lev[i];
    }
    return proportional_intensities(score, n2, mechanism);
}

/// Quantile cut points for stratification.
struct Cuts {
    double low = 0.2;
    double high = 0.8;
};

/// Strata = (binary outcome level) x (tertile-style bin of each score column).
///
/// Each column is split at its lower empirical quantiles q_low <= q_high into
/// {<= q_low, between, > q_high}. When ties make q_low == q_high the split is
/// {< q, == q, > q} instead, so a two-valued column always separates its two
/// levels and a constant column collapses to a single bin. Empty cells are
/// dropped; strata are ordered by (outcome, bin tuple).
inline StrataAssignment build_strata(std::span<const int> outcome_like, const Matrix& score_columns, Cuts cuts = {}) {
    const std::size_t total = outcome_like.size();
    const std::size_t d = score_columns.cols();
    if (d < 1) throw Error(ErrorCode::InvalidArgument, "need at least one score column");
    if (score_columns.rows() != total) throw Error(ErrorCode::DimensionMismatch, "build_strata");
    if (!(cuts.low > 0.0 && cuts.low < cuts.high && cuts.high < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "cuts must satisfy 0 < low < high < 1");
    }

    std::vector<long long> key(total, 0);
    for (std::size_t i = 0; i < total; ++i) key[i] = outcome_like[i];
    for (std::size_t j = 0; j < d; ++j) {
        const Vector column = score_columns.col(j);
        const double lo = empirical_quantile(column, cuts.low);
        const double hi = empirical_quantile(column, cuts.high);
        for (std::size_t i = 0; i < total; ++i) {
            const double v = column[i];
            int bin;
            if (lo < hi) bin = v <= lo ? 0 : (v > hi ? 2 : 1);
            else bin = v < lo ? 0 : (v > hi ? 2 : 1);
            key[i] = key[i] * 3 + bin;
        }
    }
    std::map<long long, std::string> names;
    for (long long k : key) {
        if (names.contains(k)) continue;
        std::vector<int> bins(d);
        long long rest = k;
        for (std::size_t j = d; j-- > 0;) {
            bins[j] = static_cast<int>(rest % 3);
            rest /= 3;
        }
        std::string label = "y=" + std::to_string(rest) + "|";
        for (std::size_t j = 0; j < d; ++j) label += (j ? "," : "") + std::to_string(bins[j]);
        names.emplace(k, std::move(label));
    }
    return strata_from_labels(key, names);
}

/// Real-valued Neyman targets n N_k sd_k / sum N_k' sd_k', with zero-sd
/// strata pinned to 1 and everything held inside [1, N_k]. When every sd is
/// zero the budget is spread in proportion to N_k instead.
inline Vector neyman_targets(std::span<const std::size_t> counts, std::span<const double> stratum_sd, std::size_t n) {
    const std::size_t k = counts.size();
    if (stratum_sd.size() != k) throw Error(ErrorCode::DimensionMismatch, "one sd per stratum");
    if (n < k) throw Error(ErrorCode::BudgetBelowStratumCount,
                           "budget " + std::to_string(n) + " below stratum count " + std::to_string(k));
    const std::size_t population = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (n > population) throw Error(ErrorCode::InfeasibleBudget, "budget exceeds population");

    bool any_positive = false;
    for (double sd : stratum_sd) {
        if (!(sd >= 0.0) || !std::isfinite(sd)) throw Error(ErrorCode::InvalidArgument, "sd must be finite and >= 0");
        any_positive = any_positive || sd > 0.0;
    }
    Vector weights(k), lower(k, 1.0), upper(k);
    for (std::size_t j = 0; j < k; ++j) {
        upper[j] = static_cast<double>(counts[j]);
        if (any_positive) {
            weights[j] = static_cast<double>(counts[j]) * stratum_sd[j];
            if (stratum_sd[j] == 0.0) upper[j] = 1.0;
        } else {
            weights[j] = static_cast<double>(counts[j]);
        }
    }
    return detail::bounded_proportional(weights, lower, upper, static_cast<double>(n));
}

/// Neyman allocation of n across strata, integerised by largest remainder.
inline StratifiedDesign neyman_allocation(const StrataAssignment& strata, std::span<const double> stratum_sd,
                                          std::size_t n) {
    const Vector targets = neyman_targets(strata.counts, stratum_sd, n);
    return {strata, integerize(targets, strata.counts, n)};
}

/// Second-wave allocation: the Neyman targets for the full budget n minus
/// what wave 1 already drew, floored at zero and rescaled to n - n1 without
/// exceeding the units left in each stratum.
inline std::vector<std::size_t> second_wave_allocation(const StratifiedDesign& wave1, std::span<const double> stratum_sd,
                                                       std::size_t n) {
    const auto& counts = wave1.strata.counts;
    const std::size_t k = counts.size();
    const std::size_t n1 = wave1.total();
    if (n <= n1) throw Error(ErrorCode::InfeasibleBudget, "total budget must exceed the pilot size");
    const Vector targets = neyman_targets(counts, stratum_sd, n);
    Vector deficit(k), lower(k, 0.0), room(k);
    std::vector<std::size_t> caps(k);
    double deficit_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        deficit[j] = std::max(0.0, targets[j] - static_cast<double>(wave1.allocation[j]));
        caps[j] = counts[j] - wave1.allocation[j];
        room[j] = static_cast<double>(caps[j]);
        deficit_sum += deficit[j];
    }
    const double remaining = static_cast<double>(n - n1);
    const Vector spread = detail::bounded_proportional(deficit_sum > 0.0 ? std::span<const double>(deficit)
                                                                         : std::span<const double>(room),
                                                       lower, room, remaining);
    return integerize(spread, caps, n - n1);
}

/// sqrt(trace) of the sample covariance (divisor m - 1) of a set of rows.
inline double root_trace_sample_variance(const Matrix& rows, std::span<const std::size_t> which) {
    const std::size_t m = which.size();
    if (m < 2) return 0.0;
    const std::size_t q = rows.cols();
    Vector mean(q, 0.0);
    for (std::size_t i : which)
        for (std::size_t j = 0; j < q; ++j) mean[j] += rows(i, j);
    for (double& v : mean) v /= static_cast<double>(m);
    double ss = 0.0;
    for (std::size_t i : which)
        for (std::size_t j = 0; j < q; ++j) {
            const double dlt = rows(i, j) - mean[j];
            ss += dlt * dlt;
        }
    return std::sqrt(ss / static_cast<double>(m - 1));
}

/// Per-stratum sd estimates from pilot influence rows. `pilot_units[r]` is
/// the population index of pilot row r. Strata with fewer than two pilot
/// units fall back to the sd of all pilot rows pooled together.
inline Vector pilot_stratum_sd(const StrataAssignment& strata, std::span<const std::size_t> pilot_units,
                               const Matrix& pilot_influence) {
    if (pilot_units.size() != pilot_influence.rows()) throw Error(ErrorCode::DimensionMismatch, "pilot rows");
    std::vector<std::vector<std::size_t>> by_stratum(strata.k);
    std::vector<std::size_t> all(pilot_units.size());
    for (std::size_t r = 0; r < pilot_units.size(); ++r) {
        by_stratum[static_cast<std::size_t>(strata.stratum_of[pilot_units[r]])].push_back(r);
        all[r] = r;
    }
    const double pooled = root_trace_sample_variance(pilot_influence, all);
    Vector sd(strata.k);
    for (std::size_t k = 0; k < strata.k; ++k) {
        sd[k] = by_stratum[k].size() < 2 ? pooled : root_trace_sample_variance(pilot_influence, by_stratum[k]);
    }
    return sd;
}

} // namespace subopt
