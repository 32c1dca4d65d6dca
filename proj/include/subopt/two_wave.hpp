#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "subopt/designs.hpp"
#include "subopt/error.hpp"
#include "subopt/logistic.hpp"
#include "subopt/numerics.hpp"
#include "subopt/sampling.hpp"
#include "subopt/variance.hpp"

namespace subopt {

/// What stratified designs bin on besides the outcome.
enum class StrataSource {
    Influence,  // quantile bins of influence columns beta_1..beta_d
    Covariates, // quantile bins of the covariates (exact cells for binary X)
};

struct StrataOptions {
    Cuts cuts{};
    StrataSource source = StrataSource::Influence;
    std::size_t columns = 3;
};

/// Score columns handed to build_strata: columns 1..d of H or of X.
inline Matrix stratification_scores(const Matrix& x, const InfluenceMatrix& infl, const StrataOptions& opts) {
    const std::size_t d = std::min(opts.columns, x.cols() - 1);
    if (d == 0) throw Error(ErrorCode::InvalidArgument, "no covariates to stratify on");
    const Matrix& src = opts.source == StrataSource::Influence ? infl.h : x;
    Matrix out(src.rows(), d);
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) out(i, j) = src(i, j + 1);
    return out;
}

/// Returns the true outcome for the requested units.
using OutcomeReader = std::function<Binary(std::span<const std::size_t>)>;

struct AdaptiveTwoWave {
    TwoWaveDesign design;
    SampleDraw wave1;     // realised pilot
    Vector surrogate_sd;  // sds that set the wave-1 allocation
    Vector pilot_sd;      // sds that set the wave-2 allocation
    bool pilot_fit_ok = false;
};

/// Surrogate-driven two-wave stratified design.
///
/// Wave 1 allocates n1 by Neyman with the within-stratum sds of influence
/// functions from the full-cohort MLE of s on X. After the pilot's y is
/// read, sds of the true-y influence functions are re-estimated from the
/// pilot and wave 2 tops the sample up towards Neyman(n). If the pilot fit
/// fails, the surrogate sds are reused for wave 2.
inline AdaptiveTwoWave adaptive_two_wave(const Dataset& data, std::size_t n1, std::size_t n, const StrataOptions& opts,
                                         RngStream& rng, const OutcomeReader& read_y,
                                         const InfluenceMatrix* surrogate_influence = nullptr,
                                         const FitOptions& fit = {}) {
    if (!data.s) throw Error(ErrorCode::MissingOutcomeColumns, "two-wave design needs the surrogate s");
    if (!(n1 >= 1 && n1 < n && n <= data.size())) throw Error(ErrorCode::InfeasibleBudget, "need 1 <= n1 < n <= N");

    InfluenceMatrix local;
    if (!surrogate_influence) {
        local = influence(data.x, *data.s, fit_mle(data.x, *data.s, fit));
        surrogate_influence = &local;
    }
    const StrataAssignment strata =
        build_strata(*data.s, stratification_scores(data.x, *surrogate_influence, opts), opts.cuts);

    AdaptiveTwoWave out;
    out.surrogate_sd = stratum_root_traces(surrogate_influence->h, strata);
    out.design.wave1 = neyman_allocation(strata, out.surrogate_sd, n1);
    out.wave1 = draw_stratified(out.design.wave1, rng);

    out.pilot_sd = out.surrogate_sd;
    const Binary y_pilot = read_y(out.wave1.indices);
    Matrix x_pilot(out.wave1.indices.size(), data.x.cols());
    for (std::size_t r = 0; r < out.wave1.indices.size(); ++r) {
        const auto src = data.x.row(out.wave1.indices[r]);
        std::copy(src.begin(), src.end(), x_pilot.row(r).begin());
    }
    try {
        const FittedModel pilot_fit = fit_weighted_mle(x_pilot, y_pilot, out.wave1.weight, fit);
        if (pilot_fit.converged) {
            const InfluenceMatrix pilot_infl = influence(x_pilot, y_pilot, pilot_fit);
            out.pilot_sd = pilot_stratum_sd(strata, out.wave1.indices, pilot_infl.h);
            out.pilot_fit_ok = true;
        }
    } catch (const Error&) {
        // degenerate pilot (e.g. no cases drawn): keep the surrogate sds
    }
    out.design.wave2_allocation = second_wave_allocation(out.design.wave1, out.pilot_sd, n);
    return out;
}

} // namespace subopt
