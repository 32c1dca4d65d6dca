#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "subopt/designs.hpp"
#include "subopt/error.hpp"
#include "subopt/logistic.hpp"
#include "subopt/numerics.hpp"
#include "subopt/sampling.hpp"
#include "subopt/simgen.hpp"
#include "subopt/two_wave.hpp"
#include "subopt/variance.hpp"

namespace subopt {

enum class StrategyId { CcTrue, CcSurrogate, OsmacOracle, OssatPilot, StratOracle, StratPilot };

inline constexpr StrategyId kAllStrategies[] = {StrategyId::CcTrue,      StrategyId::CcSurrogate,
                                                StrategyId::OsmacOracle, StrategyId::OssatPilot,
                                                StrategyId::StratOracle, StrategyId::StratPilot};

constexpr std::string_view to_string(StrategyId s) noexcept {
    switch (s) {
    case StrategyId::CcTrue: return "CC_TRUE";
    case StrategyId::CcSurrogate: return "CC_SURROGATE";
    case StrategyId::OsmacOracle: return "OSMAC_ORACLE";
    case StrategyId::OssatPilot: return "OSSAT_PILOT";
    case StrategyId::StratOracle: return "STRAT_ORACLE";
    case StrategyId::StratPilot: return "STRAT_PILOT";
    }
    return "?";
}

constexpr int strategy_number(StrategyId s) noexcept { return static_cast<int>(s) + 1; }

/// Oracle strategies need y for every unit; the others only see y for units
/// they have sampled.
constexpr bool is_oracle(StrategyId s) noexcept {
    return s == StrategyId::CcTrue || s == StrategyId::OsmacOracle || s == StrategyId::StratOracle;
}

/// Accepts the strategy name or its number 1..6.
inline StrategyId parse_strategy(std::string_view text) {
    for (StrategyId s : kAllStrategies) {
        if (to_string(s) == text || std::to_string(strategy_number(s)) == text) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(text) + "'");
}

/// Access guard for the true outcome. Every read goes through reveal(),
/// which records the unit so tests can check that surrogate-based strategies
/// only looked at units they sampled.
class OutcomeOracle {
public:
    explicit OutcomeOracle(std::span<const int> y) : y_(y), seen_(y.size(), 0) {}

    int reveal(std::size_t i) {
        seen_[i] = 1;
        return y_[i];
    }

    Binary reveal(std::span<const std::size_t> units) {
        Binary out(units.size());
        for (std::size_t r = 0; r < units.size(); ++r) out[r] = reveal(units[r]);
        return out;
    }

    Binary reveal_all() {
        std::fill(seen_.begin(), seen_.end(), 1);
        return Binary(y_.begin(), y_.end());
    }

    [[nodiscard]] std::vector<std::size_t> revealed() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < seen_.size(); ++i)
            if (seen_[i]) out.push_back(i);
        return out;
    }

private:
    std::span<const int> y_;
    std::vector<char> seen_;
};

struct RunOptions {
    StrataOptions strata{};
    FitOptions fit{};
};

/// Full-data quantities shared by every strategy on one dataset.
struct PopulationFits {
    std::optional<FittedModel> y_fit;
    std::optional<InfluenceMatrix> y_influence;
    std::optional<FittedModel> s_fit;
    std::optional<InfluenceMatrix> s_influence;
};

inline PopulationFits prepare_population(const Dataset& data, const FitOptions& fit = {}) {
    PopulationFits out;
    if (data.y) {
        out.y_fit = fit_mle(data.x, *data.y, fit);
        if (!out.y_fit->converged) throw Error(ErrorCode::SolverFailure, "full-data MLE on y did not converge");
        out.y_influence = influence(data.x, *data.y, *out.y_fit);
    }
    if (data.s) {
        out.s_fit = fit_mle(data.x, *data.s, fit);
        if (!out.s_fit->converged) throw Error(ErrorCode::SolverFailure, "full-data MLE on s did not converge");
        out.s_influence = influence(data.x, *data.s, *out.s_fit);
    }
    return out;
}

struct StrategyResult {
    Vector beta;
    std::size_t realized_size = 0;
    bool converged = false;
    std::string failure;
    std::vector<std::size_t> sampled;  // distinct units whose y entered the final fit
    std::vector<std::size_t> revealed; // units whose y was read at any point
};

namespace detail {

inline Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto src = x.row(rows[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

inline Matrix append_column(const Matrix& x, std::span<const int> extra) {
    Matrix out(x.rows(), x.cols() + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto src = x.row(i);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        dst[x.cols()] = extra[i];
    }
    return out;
}

// IPW fit on the drawn units; y is read through the oracle.
inline void final_fit(const Dataset& data, const SampleDraw& draw, OutcomeOracle& oracle, const RunOptions& opts,
                      StrategyResult& out) {
    out.sampled = draw.indices;
    out.realized_size = draw.realized_size;
    const Binary y = oracle.reveal(draw.indices);
    const Matrix xs = select_rows(data.x, draw.indices);
    try {
        FittedModel fit = fit_weighted_mle(xs, y, draw.weight, opts.fit);
        out.beta = std::move(fit.beta);
        out.converged = fit.converged;
        if (!fit.converged) out.failure = "IPW fit did not converge";
    } catch (const Error& e) {
        out.beta.assign(data.x.cols(), std::numeric_limits<double>::quiet_NaN());
        out.converged = false;
        out.failure = e.what();
    }
}

inline void require(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

} // namespace detail

/// Runs one strategy end to end on one dataset and returns the IPW estimate.
///
/// `fits` may carry precomputed full-data MLEs; they are computed here when
/// absent. Solver failures in the final fit come back as converged = false;
/// infeasible inputs (budget, missing outcome) throw.
inline StrategyResult run_strategy(const Dataset& data, StrategyId strategy, std::size_t n, std::size_t n1,
                                   RngStream& rng, const RunOptions& opts = {}, const PopulationFits* fits = nullptr) {
    const std::size_t total = data.size();
    detail::require(data.y.has_value(), "strategy needs y (for oracle use or pilot validation)");
    if (n > total || n == 0) throw Error(ErrorCode::InfeasibleBudget, "n must lie in [1, N]");
    const bool pilot_based = strategy == StrategyId::OssatPilot || strategy == StrategyId::StratPilot;
    if (pilot_based && !(n1 >= 1 && n1 < n)) throw Error(ErrorCode::InfeasibleBudget, "need 1 <= n1 < n");
    if (!is_oracle(strategy)) detail::require(data.s.has_value(), "strategy needs the surrogate s");

    PopulationFits local;
    auto y_fits = [&]() -> std::pair<const FittedModel&, const InfluenceMatrix&> {
        if (fits && fits->y_fit) return {*fits->y_fit, *fits->y_influence};
        if (!local.y_fit) {
            local.y_fit = fit_mle(data.x, *data.y, opts.fit);
            local.y_influence = influence(data.x, *data.y, *local.y_fit);
        }
        return {*local.y_fit, *local.y_influence};
    };
    auto s_fits = [&]() -> std::pair<const FittedModel&, const InfluenceMatrix&> {
        if (fits && fits->s_fit) return {*fits->s_fit, *fits->s_influence};
        if (!local.s_fit) {
            local.s_fit = fit_mle(data.x, *data.s, opts.fit);
            local.s_influence = influence(data.x, *data.s, *local.s_fit);
        }
        return {*local.s_fit, *local.s_influence};
    };

    OutcomeOracle oracle(*data.y);
    StrategyResult out;

    switch (strategy) {
    case StrategyId::CcTrue: {
        const Binary y = oracle.reveal_all();
        const SampleDraw draw = draw_stratified(case_control(y, n), rng);
        detail::final_fit(data, draw, oracle, opts, out);
        break;
    }
    case StrategyId::CcSurrogate: {
        const SampleDraw draw = draw_stratified(case_control(*data.s, n), rng);
        detail::final_fit(data, draw, oracle, opts, out);
        break;
    }
    case StrategyId::OsmacOracle: {
        oracle.reveal_all();
        const auto [fit, infl] = y_fits();
        const SampleDraw draw = draw_poisson(osmac(infl.norms, n), rng);
        detail::final_fit(data, draw, oracle, opts, out);
        break;
    }
    case StrategyId::OssatPilot: {
        const StratifiedDesign pilot_design = case_control(*data.s, n1);
        const SampleDraw pilot = draw_stratified(pilot_design, rng);
        const Binary y_pilot = oracle.reveal(pilot.indices);
        const Matrix x_pilot = detail::select_rows(data.x, pilot.indices);
        Binary s_pilot(pilot.indices.size());
        for (std::size_t r = 0; r < pilot.indices.size(); ++r) s_pilot[r] = (*data.s)[pilot.indices[r]];

        FittedModel p_model, ps_model;
        try {
            p_model = fit_weighted_mle(x_pilot, y_pilot, pilot.weight, opts.fit);
            ps_model = fit_weighted_mle(detail::append_column(x_pilot, s_pilot), y_pilot, pilot.weight, opts.fit);
        } catch (const Error& e) {
            out.sampled = pilot.indices;
            out.realized_size = pilot.realized_size;
            out.beta.assign(data.x.cols(), std::numeric_limits<double>::quiet_NaN());
            out.failure = std::string("pilot fit failed: ") + e.what();
            break;
        }
        const Vector p_hat = fitted_probabilities(data.x, p_model.beta);
        const Vector ps_hat = fitted_probabilities(detail::append_column(data.x, *data.s), ps_model.beta);
        const std::size_t n2 = n - n1;
        const IndividualizedDesign second = ossat(p_hat, ps_hat, data.x, p_model.m_x, n2, Mechanism::WithReplacement);
        const SampleDraw draw2 = draw_with_replacement(second, n2, rng);

        // Mixture weights m_i / (pi1_i + pi2_i) over the union of both stages.
        std::map<std::size_t, std::size_t> mult;
        for (std::size_t i : pilot.indices) mult[i] += 1;
        for (std::size_t r = 0; r < draw2.indices.size(); ++r) mult[draw2.indices[r]] += draw2.multiplicity[r];
        SampleDraw combined;
        const double n2d = static_cast<double>(n2);
        const double mass = second.total();
        for (const auto& [i, m] : mult) {
            const double pi1 = pilot_design.inclusion_probability(i);
            const double pi2 = n2d * second.pi[i] / mass;
            combined.indices.push_back(i);
            combined.multiplicity.push_back(m);
            combined.weight.push_back(static_cast<double>(m) / (pi1 + pi2));
        }
        combined.realized_size = pilot.realized_size + draw2.realized_size;
        detail::final_fit(data, combined, oracle, opts, out);
        break;
    }
    case StrategyId::StratOracle: {
        const Binary y = oracle.reveal_all();
        const auto [fit, infl] = y_fits();
        const StrataAssignment strata =
            build_strata(y, stratification_scores(data.x, infl, opts.strata), opts.strata.cuts);
        const Vector sd = stratum_root_traces(infl.h, strata);
        const SampleDraw draw = draw_stratified(neyman_allocation(strata, sd, n), rng);
        detail::final_fit(data, draw, oracle, opts, out);
        break;
    }
    case StrategyId::StratPilot: {
        const auto [s_fit, s_infl] = s_fits();
        const AdaptiveTwoWave plan = adaptive_two_wave(
            data, n1, n, opts.strata, rng, [&](std::span<const std::size_t> units) { return oracle.reveal(units); },
            &s_infl, opts.fit);
        const SampleDraw draw = draw_second_wave(plan.design, plan.wave1, rng);
        detail::final_fit(data, draw, oracle, opts, out);
        break;
    }
    }
    out.revealed = oracle.revealed();
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo grid
// ---------------------------------------------------------------------------

struct ResultRow {
    std::string scenario;
    std::size_t p = 0;
    std::string error_level;
    std::size_t n = 0;
    std::size_t n1 = 0;
    StrategyId strategy = StrategyId::CcTrue;
    std::size_t replicate = 0;
    std::size_t realized_size = 0;
    bool converged = false;
    Vector beta_hat;
    double sq_error = 0.0;
};

struct ExperimentConfig {
    ScenarioSpec scenario;
    std::vector<std::size_t> n_values{1200};
    std::vector<std::size_t> n1_values{600};
    std::vector<StrategyId> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
    std::size_t replicates = 1;
    std::uint64_t base_seed = 1;
    bool fixed_x = false;
    std::size_t threads = 1;
    RunOptions options{};
};

/// Default run options for a scenario: binary covariates are stratified on
/// their exact levels, everything else on influence-function quantiles.
inline RunOptions default_options(Scenario name) {
    RunOptions o;
    o.strata.source = name == Scenario::DiscreteX ? StrataSource::Covariates : StrataSource::Influence;
    return o;
}

/// Data for one replicate together with the coefficient it is scored against.
struct ReplicateData {
    std::shared_ptr<const Dataset> data;
    std::shared_ptr<const PopulationFits> fits;
    Vector beta_ref;
};

struct GridLabels {
    std::string scenario;
    std::size_t p = 0;
    std::string error_level;
};

namespace detail {

inline std::uint64_t strategy_tag(StrategyId s, std::size_t n, std::size_t n1) {
    return mix(mix(static_cast<std::uint64_t>(s) + 1, n), n1);
}

inline double squared_error(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
}

} // namespace detail

/// Core replicate loop shared by simulate and analyze.
///
/// Replicate r uses RngStream(base_seed, r); each (strategy, n, n1) cell gets
/// its own child stream, so results do not depend on the thread count, the
/// schedule or which other strategies are run. Rows come back ordered by
/// (replicate, n, n1, strategy).
inline std::vector<ResultRow> run_replicates(const GridLabels& labels,
                                             const std::function<ReplicateData(std::size_t)>& provide,
                                             std::span<const std::size_t> n_values,
                                             std::span<const std::size_t> n1_values,
                                             std::span<const StrategyId> strategies, std::size_t replicates,
                                             std::uint64_t base_seed, std::size_t threads, const RunOptions& opts) {
    if (replicates == 0) throw Error(ErrorCode::InvalidArgument, "replicates must be >= 1");
    std::vector<std::vector<ResultRow>> per_rep(replicates);
    std::vector<std::exception_ptr> errors(replicates);
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= replicates) return;
            try {
                const ReplicateData rep = provide(r);
                const RngStream base(base_seed, r);
                for (std::size_t n : n_values) {
                    for (std::size_t n1 : n1_values) {
                        for (StrategyId s : strategies) {
                            RngStream rng = base.derive(detail::strategy_tag(s, n, n1));
                            const StrategyResult res = run_strategy(*rep.data, s, n, n1, rng, opts, rep.fits.get());
                            ResultRow row{labels.scenario, labels.p, labels.error_level, n, n1, s, r,
                                          res.realized_size, res.converged, res.beta, 0.0};
                            row.sq_error = res.converged ? detail::squared_error(res.beta, rep.beta_ref)
                                                         : std::numeric_limits<double>::quiet_NaN();
                            per_rep[r].push_back(std::move(row));
                        }
                    }
                }
            } catch (...) {
                errors[r] = std::current_exception();
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, replicates));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<ResultRow> rows;
    for (auto& v : per_rep) std::move(v.begin(), v.end(), std::back_inserter(rows));
    return rows;
}

/// Simulation grid: a fresh dataset per replicate (or one shared dataset
/// when fixed_x), every strategy at every (n, n1), scored against true beta.
inline std::vector<ResultRow> run_grid(const ExperimentConfig& config) {
    const ScenarioSpec& spec = config.scenario;
    for (std::size_t n : config.n_values) {
        if (n > spec.population) throw Error(ErrorCode::InfeasibleBudget, "n exceeds N");
        for (std::size_t n1 : config.n1_values) {
            if (n1 >= n) throw Error(ErrorCode::InfeasibleBudget, "n1 must be below n");
        }
    }
    const GridLabels labels{std::string(to_string(spec.name)), spec.p, std::string(to_string(spec.error_level))};

    auto make = [&](std::size_t stream) {
        auto data = std::make_shared<const Dataset>(generate_dataset(spec, RngStream(config.base_seed, stream).derive(0)));
        auto fits = std::make_shared<const PopulationFits>(prepare_population(*data, config.options.fit));
        return ReplicateData{std::move(data), std::move(fits), spec.beta};
    };
    std::optional<ReplicateData> fixed;
    if (config.fixed_x) fixed = make(0);
    auto provide = [&](std::size_t r) { return fixed ? *fixed : make(r); };
    return run_replicates(labels, provide, config.n_values, config.n1_values, config.strategies, config.replicates,
                          config.base_seed, config.threads, config.options);
}

/// Repeated subsampling of one fixed cohort, scored against its full-data MLE.
inline std::vector<ResultRow> run_cohort(const Dataset& cohort, const std::string& name,
                                         std::span<const std::size_t> n_values,
                                         std::span<const std::size_t> n1_values,
                                         std::span<const StrategyId> strategies, std::size_t replicates,
                                         std::uint64_t base_seed, std::size_t threads, const RunOptions& opts) {
    if (!cohort.y) throw Error(ErrorCode::MissingOutcomeColumns, "cohort analysis needs the validated outcome y");
    auto data = std::make_shared<const Dataset>(cohort);
    auto fits = std::make_shared<const PopulationFits>(prepare_population(*data, opts.fit));
    const ReplicateData rep{data, fits, fits->y_fit->beta};
    const GridLabels labels{name, cohort.p(), cohort.s ? "observed" : "none"};
    return run_replicates(labels, [&](std::size_t) { return rep; }, n_values, n1_values, strategies, replicates,
                          base_seed, threads, opts);
}

// ---------------------------------------------------------------------------
// Results table
// ---------------------------------------------------------------------------

inline void write_results_csv(std::span<const ResultRow> rows, std::ostream& out) {
    std::size_t p = 0;
    for (const auto& r : rows) p = std::max(p, r.beta_hat.size() ? r.beta_hat.size() - 1 : 0);
    out << "scenario,p,error_level,n,n1,strategy,replicate,realized_size,converged";
    for (std::size_t j = 0; j <= p; ++j) out << ",beta_hat_" << j;
    out << ",sq_error\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.p << ',' << r.error_level << ',' << r.n << ',' << r.n1 << ','
            << to_string(r.strategy) << ',' << r.replicate << ',' << r.realized_size << ',' << (r.converged ? 1 : 0);
        for (std::size_t j = 0; j <= p; ++j) {
            out << ',' << (j < r.beta_hat.size() ? detail::format_double(r.beta_hat[j]) : std::string("nan"));
        }
        out << ',' << detail::format_double(r.sq_error) << '\n';
    }
}

struct SummaryRow {
    std::string scenario;
    std::size_t p = 0;
    std::string error_level;
    std::size_t n = 0;
    std::size_t n1 = 0;
    StrategyId strategy = StrategyId::CcTrue;
    std::size_t replicates = 0; // converged replicates used
    std::size_t excluded = 0;   // non-converged replicates dropped
    std::optional<double> mse;
    std::optional<double> variance_sum; // trace of the across-replicate covariance of beta_hat
    double mean_realized_size = 0.0;
};

/// Empirical MSE and variance-sum per (scenario, p, error, n, n1, strategy)
/// cell over converged replicates.
inline std::vector<SummaryRow> summarize_mse(std::span<const ResultRow> rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyCell, "no result rows to summarise");
    using Key = std::tuple<std::string, std::size_t, std::string, std::size_t, std::size_t, int>;
    std::map<Key, std::vector<const ResultRow*>> cells;
    for (const auto& r : rows) {
        cells[{r.scenario, r.p, r.error_level, r.n, r.n1, static_cast<int>(r.strategy)}].push_back(&r);
    }
    std::vector<SummaryRow> out;
    for (const auto& [key, members] : cells) {
        SummaryRow s;
        s.scenario = std::get<0>(key);
        s.p = std::get<1>(key);
        s.error_level = std::get<2>(key);
        s.n = std::get<3>(key);
        s.n1 = std::get<4>(key);
        s.strategy = static_cast<StrategyId>(std::get<5>(key));
        std::vector<const ResultRow*> ok;
        double size_sum = 0.0;
        for (const ResultRow* r : members) {
            size_sum += static_cast<double>(r->realized_size);
            if (r->converged) ok.push_back(r);
        }
        s.mean_realized_size = size_sum / static_cast<double>(members.size());
        s.replicates = ok.size();
        s.excluded = members.size() - ok.size();
        if (!ok.empty()) {
            double sum = 0.0;
            for (const ResultRow* r : ok) sum += r->sq_error;
            s.mse = sum / static_cast<double>(ok.size());
        }
        if (ok.size() >= 2) {
            const std::size_t q = ok.front()->beta_hat.size();
            double tr = 0.0;
            for (std::size_t j = 0; j < q; ++j) {
                double mean = 0.0;
                for (const ResultRow* r : ok) mean += r->beta_hat[j];
                mean /= static_cast<double>(ok.size());
                double ss = 0.0;
                for (const ResultRow* r : ok) ss += (r->beta_hat[j] - mean) * (r->beta_hat[j] - mean);
                tr += ss / static_cast<double>(ok.size() - 1);
            }
            s.variance_sum = tr;
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_summary_csv(std::span<const SummaryRow> rows, std::ostream& out) {
    out << "scenario,p,error_level,n,n1,strategy,replicates,excluded,mse,variance_sum,mean_realized_size\n";
    auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.p << ',' << r.error_level << ',' << r.n << ',' << r.n1 << ','
            << to_string(r.strategy) << ',' << r.replicates << ',' << r.excluded << ',' << opt(r.mse) << ','
            << opt(r.variance_sum) << ',' << detail::format_double(r.mean_realized_size) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Paired comparison
// ---------------------------------------------------------------------------

struct SignTest {
    std::size_t wins = 0;   // pairs where the first strategy had the smaller error
    std::size_t losses = 0;
    std::size_t ties = 0;
    double p_value = 1.0;   // one-sided, H1: first strategy wins more often
};

/// Exact one-sided sign test on paired squared errors; ties are dropped.
inline SignTest paired_sign_test(std::span<const double> first, std::span<const double> second) {
    if (first.size() != second.size()) throw Error(ErrorCode::DimensionMismatch, "paired samples");
    SignTest t;
    for (std::size_t i = 0; i < first.size(); ++i) {
        if (first[i] < second[i]) ++t.wins;
        else if (first[i] > second[i]) ++t.losses;
        else ++t.ties;
    }
    const std::size_t m = t.wins + t.losses;
    // P(Binomial(m, 1/2) >= wins), summed in log space
    double p = 0.0;
    for (std::size_t k = t.wins; k <= m; ++k) {
        const double log_term = std::lgamma(static_cast<double>(m) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                                std::lgamma(static_cast<double>(m - k) + 1) -
                                static_cast<double>(m) * std::log(2.0);
        p += std::exp(log_term);
    }
    t.p_value = std::min(1.0, p);
    return t;
}

/// Squared errors of two strategies paired by replicate within one (n, n1)
/// cell; replicates where either failed are skipped.
inline std::pair<Vector, Vector> paired_errors(std::span<const ResultRow> rows, StrategyId a, StrategyId b,
                                               std::size_t n, std::size_t n1) {
    std::map<std::size_t, std::pair<double, double>> by_rep;
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : rows) {
        if (r.n != n || r.n1 != n1) continue;
        if (r.strategy != a && r.strategy != b) continue;
        auto [it, inserted] = by_rep.try_emplace(r.replicate, nan, nan);
        const double v = r.converged ? r.sq_error : nan;
        (r.strategy == a ? it->second.first : it->second.second) = v;
    }
    Vector x, y;
    for (const auto& [rep, pr] : by_rep) {
        if (std::isnan(pr.first) || std::isnan(pr.second)) continue;
        x.push_back(pr.first);
        y.push_back(pr.second);
    }
    return {x, y};
}

} // namespace subopt
