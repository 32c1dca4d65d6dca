// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "subopt/harness.hpp"
#include "subopt/variance.hpp"

using namespace subopt;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* id, const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = limit_s <= 0 || secs < limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s %s %s: %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
                in_time ? "" : ", over time limit");
    std::fflush(stdout);
}

std::string str(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

Matrix centred_normal_rows(std::size_t n, std::size_t q, RngStream& rng, bool heavy) {
    Matrix h(n, q);
    for (std::size_t i = 0; i < n; ++i) {
        const double scale = heavy ? std::pow(rng.exponential(1.0), 2.0) : 1.0;
        for (std::size_t j = 0; j < q; ++j) h(i, j) = scale * rng.normal();
    }
    for (std::size_t j = 0; j < q; ++j) {
        double m = 0;
        for (std::size_t i = 0; i < n; ++i) m += h(i, j);
        m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) h(i, j) -= m;
    }
    return h;
}

// random labels with every one of k strata non-empty
StrataAssignment random_strata(std::size_t n, std::size_t k, RngStream& rng) {
    std::vector<long long> lab(n);
    for (std::size_t i = 0; i < n; ++i) lab[i] = i < k ? static_cast<long long>(i) : static_cast<long long>(rng.uniform_index(k));
    return strata_from_labels(lab);
}

Outcome stratified_vs_enumeration() {
    RngStream rng(101, 0);
    double worst = 0;
    int instances = 0;
    for (; instances < 300; ++instances) {
        const std::size_t k = 1 + rng.uniform_index(3);
        const std::size_t n_pop = std::max<std::size_t>(k + 1, 2 + rng.uniform_index(11));
        const StrataAssignment strata = random_strata(n_pop, k, rng);
        std::vector<std::size_t> alloc(k);
        for (std::size_t s = 0; s < k; ++s) alloc[s] = 1 + rng.uniform_index(strata.counts[s]);
        const Matrix h = centred_normal_rows(n_pop, 1 + rng.uniform_index(3), rng, false);
        const StratifiedDesign d{strata, alloc};
        const Matrix a = stratified_variance(h, d).matrix;
        const Matrix b = brute_force_design_variance(h, d).matrix;
        const double scale = std::max(1.0, b.max_abs());
        worst = std::max(worst, (a - b).max_abs() / scale);
    }
    return {worst <= 1e-12, std::to_string(instances) + " instances, max scaled difference " + str(worst)};
}

Outcome poisson_vs_monte_carlo() {
    RngStream rng(102, 0);
    const std::size_t n_pop = 50, q = 3;
    const Matrix h = centred_normal_rows(n_pop, q, rng, false);
    Vector pi(n_pop);
    for (auto& p : pi) p = 0.1 + 0.8 * rng.uniform();
    const IndividualizedDesign d{pi};
    const double exact = poisson_variance(h, pi).trace;

    const int reps = 100000;
    Vector sum(q, 0.0), sum2(q, 0.0);
    for (int r = 0; r < reps; ++r) {
        const SampleDraw s = draw_poisson(d, rng);
        Vector t(q, 0.0);
        for (std::size_t m = 0; m < s.indices.size(); ++m)
            for (std::size_t j = 0; j < q; ++j) t[j] += s.weight[m] * h(s.indices[m], j) / n_pop;
        for (std::size_t j = 0; j < q; ++j) {
            sum[j] += t[j];
            sum2[j] += t[j] * t[j];
        }
    }
    double mc = 0;
    for (std::size_t j = 0; j < q; ++j) mc += (sum2[j] - sum[j] * sum[j] / reps) / (reps - 1);
    const double rel = std::abs(mc / exact - 1.0);
    return {rel <= 0.02, "closed form " + str(exact) + ", Monte Carlo " + str(mc) + ", relative gap " + str(rel)};
}

Outcome perfect_stratification() {
    ExperimentConfig cfg;
    cfg.scenario = make_scenario(Scenario::DiscreteX, 3, 10000, ErrorLevel::Low);
    cfg.n_values = {1200};
    cfg.n1_values = {600};
    cfg.strategies = {StrategyId::StratOracle};
    cfg.replicates = 100;
    cfg.base_seed = 103;
    cfg.fixed_x = true;
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    cfg.options = default_options(Scenario::DiscreteX);
    const auto rows = run_grid(cfg);

    const Dataset data = generate_dataset(cfg.scenario, RngStream(cfg.base_seed, 0).derive(0));
    const FittedModel mle = fit_mle(data.x, *data.y);
    double worst = 0;
    bool all_ok = mle.converged;
    for (const auto& r : rows) {
        all_ok = all_ok && r.converged;
        for (std::size_t j = 0; j < mle.beta.size(); ++j) worst = std::max(worst, std::abs(r.beta_hat[j] - mle.beta[j]));
    }
    const auto summary = summarize_mse(rows);
    const double var_sum = summary.at(0).variance_sum.value_or(INFINITY);
    return {all_ok && rows.size() == 100 && worst <= 1e-8 && var_sum <= 1e-14,
            std::to_string(rows.size()) + " replicates, max |beta - MLE| " + str(worst) + ", variance-sum " +
                str(var_sum)};
}

ExperimentConfig ordering_grid(std::size_t threads) {
    ExperimentConfig cfg;
    cfg.scenario = make_scenario(Scenario::ZeroMeanNormal, 3, 10000, ErrorLevel::Low);
    cfg.n_values = {1200};
    cfg.n1_values = {600};
    cfg.replicates = 300;
    cfg.base_seed = 2024;
    cfg.threads = threads;
    cfg.options = default_options(Scenario::ZeroMeanNormal);
    return cfg;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream o;
    write_results_csv(rows, o);
    return o.str();
}

double cell_mse(const std::vector<SummaryRow>& s, StrategyId id) {
    for (const auto& r : s)
        if (r.strategy == id) return r.mse.value_or(INFINITY);
    return INFINITY;
}

// first beats second: lower MSE and a significant one-sided sign test
bool beats(const std::vector<ResultRow>& rows, const std::vector<SummaryRow>& s, StrategyId a, StrategyId b,
           std::string& detail) {
    const auto [ea, eb] = paired_errors(rows, a, b, 1200, 600);
    const SignTest t = paired_sign_test(ea, eb);
    const bool ok = cell_mse(s, a) < cell_mse(s, b) && t.p_value < 0.05;
    detail += std::string(detail.empty() ? "" : "; ") + std::to_string(strategy_number(a)) + " vs " +
              std::to_string(strategy_number(b)) + ": MSE " + str(cell_mse(s, a)) + " < " + str(cell_mse(s, b)) +
              ", wins " + std::to_string(t.wins) + "/" + std::to_string(t.wins + t.losses) + ", p " + str(t.p_value);
    return ok;
}

Outcome uninformative_strata() {
    RngStream rng(106, 0);
    const std::size_t n_pop = 2000, n = 200, k = 5;
    int within = 0;
    double worst_rel = -INFINITY;
    for (int inst = 0; inst < 50; ++inst) {
        const Matrix h = centred_normal_rows(n_pop, 3, rng, true);
        const InfluenceMatrix infl = make_influence(h);
        const StrataAssignment strata = random_strata(n_pop, k, rng);
        const double pois = poisson_variance(h, osmac(infl.norms, n).pi).trace;
        const double strat = neyman_variance(h, strata, n, Divisor::Population).trace;
        if (pois <= strat + 1e-3 * strat) ++within;
        worst_rel = std::max(worst_rel, (pois - strat) / strat);
    }
    // constant norms: zero-mean rows on a circle, K = 1
    Matrix c(n_pop, 2);
    for (std::size_t i = 0; i < n_pop; ++i) {
        const double a = 2.0 * M_PI * static_cast<double>(i) / n_pop;
        c(i, 0) = 2.0 * std::cos(a);
        c(i, 1) = 2.0 * std::sin(a);
    }
    const double gap = trace_gap(make_influence(c), n, strata_from_labels(std::vector<long long>(n_pop, 0)));
    const double rel_gap = std::abs(gap) / poisson_variance(c, Vector(n_pop, double(n) / n_pop)).trace;
    return {within >= 48 && rel_gap <= 1e-12,
            std::to_string(within) + "/50 within slack (largest relative gap " + str(worst_rel) +
                "), constant-norm relative gap " + str(rel_gap)};
}

Outcome neyman_argmin() {
    RngStream rng(107, 0);
    double worst = -INFINITY;
    std::size_t trials = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t k = 2 + rng.uniform_index(4);
        const std::size_t n_pop = 100 + rng.uniform_index(200);
        const StrataAssignment strata = random_strata(n_pop, k, rng);
        Matrix h = centred_normal_rows(n_pop, 2, rng, false);
        // give strata different spreads so the optimum is not proportional
        for (std::size_t i = 0; i < n_pop; ++i)
            for (std::size_t j = 0; j < 2; ++j) h(i, j) *= 1.0 + 3.0 * strata.stratum_of[i];
        const std::size_t n = n_pop / 10;
        const Vector ney = neyman_fractional_allocation(h, strata, n);
        for (std::size_t s = 0; s < k; ++s)
            if (ney[s] > static_cast<double>(strata.counts[s])) return {false, "Neyman allocation infeasible"};
        const double best = neyman_variance(h, strata, n).trace;
        for (int t = 0; t < 1000;) {
            Vector alloc(k);
            double tot = 0;
            for (auto& a : alloc) tot += a = rng.exponential(1.0);
            bool ok = true;
            for (std::size_t s = 0; s < k; ++s) {
                alloc[s] *= static_cast<double>(n) / tot;
                ok = ok && alloc[s] <= static_cast<double>(strata.counts[s]) && alloc[s] > 0;
            }
            if (!ok) continue;
            ++t;
            ++trials;
            const double tr = stratified_variance(h, strata, alloc).trace;
            worst = std::max(worst, (best - tr) / best);
        }
    }
    return {worst <= 1e-9, std::to_string(trials) + " random allocations, largest relative improvement over Neyman " +
                               str(worst)};
}

Outcome surrogate_calibration() {
    double worst_z = 0;
    for (ErrorLevel level : {ErrorLevel::Low, ErrorLevel::High}) {
        const auto spec = make_scenario(Scenario::ZeroMeanNormal, 3, 100000, level);
        const Dataset d = generate_dataset(spec, RngStream(108, static_cast<std::uint64_t>(level)));
        const SurrogateSpec ss = surrogate_spec(level, surrogate_threshold(d.x, spec.name));
        // [sens below, sens above, spec below, spec above]
        double hits[4] = {}, total[4] = {};
        for (std::size_t i = 0; i < d.size(); ++i) {
            const bool below = d.x(i, 1) < ss.threshold;
            const int y = (*d.y)[i], s = (*d.s)[i];
            const int cell = (y == 1 ? 0 : 2) + (below ? 0 : 1);
            total[cell] += 1;
            hits[cell] += y == 1 ? s : 1 - s;
        }
        const double target[4] = {ss.sens_below, ss.sens_above, ss.spec_below, ss.spec_above};
        for (int c = 0; c < 4; ++c) {
            const double se = std::sqrt(target[c] * (1 - target[c]) / total[c]);
            worst_z = std::max(worst_z, std::abs(hits[c] / total[c] - target[c]) / se);
        }
    }
    return {worst_z <= 3.0, "8 rates, largest |z| " + str(worst_z)};
}

Outcome cohort_smoke() {
    const Dataset cohort = gen_vccc_like(RngStream(110, 0));
    RunOptions opts;
    opts.strata.source = StrataSource::Covariates;
    const std::vector<std::size_t> n{200}, n1{75, 100, 125};
    const std::vector<StrategyId> all(std::begin(kAllStrategies), std::end(kAllStrategies));
    const auto rows = run_cohort(cohort, "cohort", n, n1, all, 50, 110, std::max(1u, std::thread::hardware_concurrency()),
                                 opts);
    const auto summary = summarize_mse(rows);
    std::size_t finite = 0, excluded = 0;
    for (const auto& s : summary) {
        finite += s.mse && std::isfinite(*s.mse);
        excluded += s.excluded;
    }
    return {finite == summary.size() && summary.size() == 18,
            std::to_string(finite) + "/" + std::to_string(summary.size()) + " cells with finite MSE, " +
                std::to_string(excluded) + " non-converged fits excluded"};
}

} // namespace

int main() {
    report("C1", "stratified variance equals exhaustive enumeration", 10, stratified_vs_enumeration);
    report("C2", "Poisson variance matches Monte Carlo", 30, poisson_vs_monte_carlo);
    report("C3", "perfect stratification recovers the full-data MLE", 120, perfect_stratification);

    std::vector<ResultRow> grid;
    std::vector<SummaryRow> summary;
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    report("C4", "stratified oracle < OSMAC < case-control", 1200, [&] {
        grid = run_grid(ordering_grid(hw));
        summary = summarize_mse(grid);
        std::string detail;
        const bool a = beats(grid, summary, StrategyId::StratOracle, StrategyId::OsmacOracle, detail);
        const bool b = beats(grid, summary, StrategyId::OsmacOracle, StrategyId::CcTrue, detail);
        return Outcome{a && b, detail};
    });
    report("C5", "pilot-stratified beats surrogate case-control and OSSAT", 0, [&] {
        if (grid.empty()) return Outcome{false, "grid unavailable"};
        std::string detail;
        const bool a = beats(grid, summary, StrategyId::StratPilot, StrategyId::CcSurrogate, detail);
        const bool b = beats(grid, summary, StrategyId::StratPilot, StrategyId::OssatPilot, detail);
        return Outcome{a && b, detail};
    });
    report("C6", "uninformative strata never beat OSMAC beyond slack", 60, uninformative_strata);
    report("C7", "Neyman allocation minimises the stratified trace", 60, neyman_argmin);
    report("C8", "surrogate confusion rates match their targets", 30, surrogate_calibration);
    report("C9", "results are identical across thread counts", 0, [&] {
        if (grid.empty()) return Outcome{false, "grid unavailable"};
        const std::size_t other = hw == 1 ? 4 : 1;
        const std::string a = results_csv(grid);
        const std::string b = results_csv(run_grid(ordering_grid(other)));
        return Outcome{a == b, std::to_string(hw) + " vs " + std::to_string(other) + " threads, " +
                                   std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different")};
    });
    report("S1", "cohort pipeline at n=200, n1 in {75,100,125}", 0, cohort_smoke);

    std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
