#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "subopt/designs.hpp"
#include "subopt/error.hpp"
#include "subopt/numerics.hpp"

namespace subopt {

/// A realised subsample: distinct unit ids in increasing order, their draw
/// multiplicities and the estimation weight attached to each.
struct SampleDraw {
    std::vector<std::size_t> indices;
    std::vector<std::size_t> multiplicity;
    Vector weight;
    std::size_t realized_size = 0;

    [[nodiscard]] std::size_t distinct() const noexcept { return indices.size(); }
};

/// Independent Bernoulli(pi_i) inclusion; weight 1/pi_i.
inline SampleDraw draw_poisson(const IndividualizedDesign& design, RngStream& rng) {
    if (design.mechanism != Mechanism::PoissonIndependent) {
        throw Error(ErrorCode::InvalidArgument, "draw_poisson needs a PoissonIndependent design");
    }
    SampleDraw out;
    for (std::size_t i = 0; i < design.pi.size(); ++i) {
        const double p = design.pi[i];
        if (rng.uniform() < p) {
            out.indices.push_back(i);
            out.multiplicity.push_back(1);
            out.weight.push_back(1.0 / p);
        }
    }
    out.realized_size = out.indices.size();
    return out;
}

/// n categorical draws with single-draw probabilities pi_i / sum(pi);
/// Hansen-Hurwitz weights multiplicity / (n p_i).
inline SampleDraw draw_with_replacement(const IndividualizedDesign& design, std::size_t n, RngStream& rng) {
    if (design.mechanism != Mechanism::WithReplacement) {
        throw Error(ErrorCode::InvalidArgument, "draw_with_replacement needs a WithReplacement design");
    }
    const std::size_t total = design.pi.size();
    if (total == 0) throw Error(ErrorCode::EmptyInput, "empty design");
    Vector cumulative(total);
    std::partial_sum(design.pi.begin(), design.pi.end(), cumulative.begin());
    const double mass = cumulative.back();
    if (!(mass > 0.0)) throw Error(ErrorCode::InvalidArgument, "design has no mass");

    std::vector<std::size_t> counts(total, 0);
    for (std::size_t d = 0; d < n; ++d) {
        const double u = rng.uniform() * mass;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        auto i = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
        if (i >= total) i = total - 1;
        ++counts[i];
    }
    SampleDraw out;
    for (std::size_t i = 0; i < total; ++i) {
        if (counts[i] == 0) continue;
        const double p = design.pi[i] / mass;
        out.indices.push_back(i);
        out.multiplicity.push_back(counts[i]);
        out.weight.push_back(static_cast<double>(counts[i]) / (static_cast<double>(n) * p));
    }
    out.realized_size = n;
    return out;
}

namespace detail {

// Uniform m-subset of `pool` by a partial Fisher-Yates shuffle.
inline void choose_subset(std::vector<std::size_t>& pool, std::size_t m, RngStream& rng) {
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t r = j + static_cast<std::size_t>(rng.uniform_index(pool.size() - j));
        std::swap(pool[j], pool[r]);
    }
    pool.resize(m);
}

} // namespace detail

/// SRS without replacement of n_k units within each stratum; weight N_k/n_k.
inline SampleDraw draw_stratified(const StratifiedDesign& design, RngStream& rng) {
    const auto& strata = design.strata;
    if (design.allocation.size() != strata.k) throw Error(ErrorCode::DimensionMismatch, "allocation per stratum");
    auto members = strata.members();
    std::vector<std::pair<std::size_t, double>> picked;
    for (std::size_t k = 0; k < strata.k; ++k) {
        const std::size_t nk = design.allocation[k];
        if (nk > strata.counts[k]) throw Error(ErrorCode::InfeasibleBudget, "n_k exceeds N_k");
        if (nk == 0) continue;
        detail::choose_subset(members[k], nk, rng);
        const double w = static_cast<double>(strata.counts[k]) / static_cast<double>(nk);
        for (std::size_t i : members[k]) picked.emplace_back(i, w);
    }
    std::sort(picked.begin(), picked.end());
    SampleDraw out;
    for (const auto& [i, w] : picked) {
        out.indices.push_back(i);
        out.multiplicity.push_back(1);
        out.weight.push_back(w);
    }
    out.realized_size = out.indices.size();
    return out;
}

/// Second wave of a two-wave design: SRS of wave2_allocation[k] units from
/// the stratum members not drawn in `wave1`. The returned draw covers both
/// waves with combined weights N_k / (n1_k + n2_k).
inline SampleDraw draw_second_wave(const TwoWaveDesign& design, const SampleDraw& wave1, RngStream& rng) {
    const auto& strata = design.wave1.strata;
    std::vector<char> taken(strata.size(), 0);
    for (std::size_t i : wave1.indices) taken[i] = 1;
    std::vector<std::vector<std::size_t>> pool(strata.k);
    for (std::size_t i = 0; i < strata.size(); ++i) {
        if (!taken[i]) pool[static_cast<std::size_t>(strata.stratum_of[i])].push_back(i);
    }
    const auto combined = design.combined_allocation();
    std::vector<std::size_t> units(wave1.indices.begin(), wave1.indices.end());
    for (std::size_t k = 0; k < strata.k; ++k) {
        const std::size_t m = design.wave2_allocation[k];
        if (m > pool[k].size()) throw Error(ErrorCode::InfeasibleBudget, "wave-2 n_k exceeds remaining units");
        detail::choose_subset(pool[k], m, rng);
        units.insert(units.end(), pool[k].begin(), pool[k].end());
    }
    std::sort(units.begin(), units.end());
    SampleDraw out;
    for (std::size_t i : units) {
        const auto k = static_cast<std::size_t>(strata.stratum_of[i]);
        out.indices.push_back(i);
        out.multiplicity.push_back(1);
        out.weight.push_back(static_cast<double>(strata.counts[k]) / static_cast<double>(combined[k]));
    }
    out.realized_size = out.indices.size();
    return out;
}

} // namespace subopt
