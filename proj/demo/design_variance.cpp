// Design variance of the influence total under OSMAC, proportional and
// Neyman-stratified sampling at one budget.
#include <cstdio>

#include "subopt/simgen.hpp"
#include "subopt/two_wave.hpp"
#include "subopt/variance.hpp"

int main() {
    using namespace subopt;
    const ScenarioSpec spec = make_scenario(Scenario::MixNormal, 3, 5000, ErrorLevel::None);
    const Dataset data = generate_dataset(spec, RngStream(11, 0));
    const FittedModel fit = fit_mle(data.x, *data.y);
    const InfluenceMatrix infl = influence(data.x, *data.y, fit);
    const std::size_t n = 500;

    const StrataAssignment strata =
        build_strata(*data.y, stratification_scores(data.x, infl, StrataOptions{}), Cuts{});
    std::vector<long long> one(data.size(), 0);
    const StrataAssignment single = strata_from_labels(one);

    std::printf("strata: %zu\n", strata.k);
    std::printf("SRS                 %.6e\n", neyman_variance(infl.h, single, n).trace);
    std::printf("OSMAC (Poisson)     %.6e\n", poisson_variance(infl.h, osmac(infl.norms, n).pi).trace);
    std::printf("Neyman, fractional  %.6e\n", neyman_variance(infl.h, strata, n).trace);
    const StratifiedDesign integer = neyman_allocation(strata, stratum_root_traces(infl.h, strata), n);
    std::printf("Neyman, integer     %.6e\n", stratified_variance(infl.h, integer).trace);
}
