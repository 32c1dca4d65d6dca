// One simulated population, every strategy once, estimates next to the truth.
#include <cstdio>

#include "subopt/harness.hpp"

int main() {
    using namespace subopt;
    const ScenarioSpec spec = make_scenario(Scenario::ZeroMeanNormal, 3, 10000, ErrorLevel::Low);
    const Dataset data = generate_dataset(spec, RngStream(7, 0).derive(0));
    const PopulationFits fits = prepare_population(data);

    std::printf("%-13s %8s %8s %8s %8s %10s\n", "strategy", "b0", "b1", "b2", "b3", "sq_error");
    std::printf("%-13s %8.4f %8.4f %8.4f %8.4f\n", "truth", spec.beta[0], spec.beta[1], spec.beta[2], spec.beta[3]);
    for (StrategyId s : kAllStrategies) {
        RngStream rng(7, 1 + strategy_number(s));
        const StrategyResult r = run_strategy(data, s, 1200, 600, rng, default_options(spec.name), &fits);
        double sq = 0;
        for (std::size_t j = 0; j < r.beta.size(); ++j) sq += (r.beta[j] - spec.beta[j]) * (r.beta[j] - spec.beta[j]);
        std::printf("%-13s %8.4f %8.4f %8.4f %8.4f %10.5f%s\n", std::string(to_string(s)).c_str(), r.beta[0],
                    r.beta[1], r.beta[2], r.beta[3], sq, r.converged ? "" : "  (not converged)");
    }
}
