// subopt: subsampling-design experiments for logistic regression.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "subopt/designs.hpp"
#include "subopt/harness.hpp"
#include "subopt/logistic.hpp"
#include "subopt/plots.hpp"
#include "subopt/simgen.hpp"
#include "subopt/variance.hpp"

namespace fs = std::filesystem;
using namespace subopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::MissingOutcomeColumns:
    case ErrorCode::NonBinaryOutcome:
    case ErrorCode::EmptyInput:
    case ErrorCode::DegenerateOutcome:
    case ErrorCode::DegenerateDesign:
    case ErrorCode::IoError:
        return kExitData;
    case ErrorCode::SolverFailure:
    case ErrorCode::NotPositiveDefinite:
        return kExitNumeric;
    default:
        return kExitConfig;
    }
}

std::vector<StrategyId> parse_strategies(const std::vector<std::string>& names) {
    std::vector<StrategyId> out;
    for (const auto& n : names) {
        if (n == "all") return {std::begin(kAllStrategies), std::end(kAllStrategies)};
        out.push_back(parse_strategy(n));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

StrataSource parse_strata_source(const std::string& s) {
    if (s == "influence") return StrataSource::Influence;
    if (s == "covariates") return StrataSource::Covariates;
    throw Error(ErrorCode::InvalidArgument, "strata source must be influence or covariates");
}

std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Writes results, summary and plots; returns the exit code.
int persist(const std::vector<ResultRow>& rows, const fs::path& out, bool plots) {
    fs::create_directories(out);
    {
        std::ofstream f(out / "results.csv");
        if (!f) throw Error(ErrorCode::IoError, "cannot write " + (out / "results.csv").string());
        write_results_csv(rows, f);
    }
    const auto summary = summarize_mse(rows);
    if (plots) {
        emit_plots(summary, out);
    } else {
        std::ofstream f(out / "summary.csv");
        write_summary_csv(summary, f);
    }
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.converged ? 0 : 1;
    std::cout << "wrote " << rows.size() << " rows to " << (out / "results.csv").string() << " (" << failed
              << " non-converged)\n";
    for (const auto& s : summary) {
        std::cout << "  n=" << s.n << " n1=" << s.n1 << ' ' << to_string(s.strategy)
                  << " mse=" << (s.mse ? detail::format_double(*s.mse) : std::string("NA")) << " used=" << s.replicates
                  << " excluded=" << s.excluded << '\n';
    }
    return failed == rows.size() ? kExitNumeric : kExitOk;
}

const Binary& outcome_column(const Dataset& d, const std::string& which) {
    if (which == "y") {
        if (!d.y) throw Error(ErrorCode::MissingOutcomeColumns, "data has no y column");
        return *d.y;
    }
    if (which == "s") {
        if (!d.s) throw Error(ErrorCode::MissingOutcomeColumns, "data has no s column");
        return *d.s;
    }
    throw Error(ErrorCode::InvalidArgument, "outcome must be y or s");
}

// Design CSV: either unit_id,pi or unit_id,stratum,allocation.
struct DesignFile {
    std::optional<IndividualizedDesign> individual;
    std::optional<StratifiedDesign> stratified;
};

DesignFile read_design_csv(const std::string& path, std::size_t units) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::string header;
    std::getline(in, header);
    const auto cols = detail::split_commas(header);
    DesignFile out;
    std::string line;
    std::size_t row = 1;
    auto number = [&](std::string_view tok, auto& value) {
        const auto t = detail::trim(tok);
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
        if (ec != std::errc{} || ptr != t.data() + t.size()) {
            throw Error(ErrorCode::ParseError, path + ": bad value on row " + std::to_string(row));
        }
    };
    if (cols.size() == 2 && detail::trim(cols[1]) == "pi") {
        IndividualizedDesign d;
        d.pi.assign(units, 0.0);
        while (std::getline(in, line)) {
            ++row;
            if (detail::trim(line).empty()) continue;
            const auto tok = detail::split_commas(line);
            if (tok.size() != 2) throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(row));
            std::size_t id = 0;
            double pi = 0.0;
            number(tok[0], id);
            number(tok[1], pi);
            if (id >= units) throw Error(ErrorCode::DimensionMismatch, "unit_id outside the data");
            d.pi[id] = pi;
        }
        out.individual = std::move(d);
        return out;
    }
    if (cols.size() == 3 && detail::trim(cols[1]) == "stratum" && detail::trim(cols[2]) == "allocation") {
        std::vector<long long> label(units, -1);
        std::map<long long, std::size_t> alloc;
        while (std::getline(in, line)) {
            ++row;
            if (detail::trim(line).empty()) continue;
            const auto tok = detail::split_commas(line);
            if (tok.size() != 3) throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(row));
            std::size_t id = 0, a = 0;
            long long k = 0;
            number(tok[0], id);
            number(tok[1], k);
            number(tok[2], a);
            if (id >= units) throw Error(ErrorCode::DimensionMismatch, "unit_id outside the data");
            label[id] = k;
            alloc[k] = a;
        }
        if (std::find(label.begin(), label.end(), -1) != label.end()) {
            throw Error(ErrorCode::DimensionMismatch, "stratified design must list every unit");
        }
        StratifiedDesign d;
        d.strata = strata_from_labels(label);
        for (const auto& [k, a] : alloc) d.allocation.push_back(a);
        out.stratified = std::move(d);
        return out;
    }
    throw Error(ErrorCode::ParseError, path + ": header must be unit_id,pi or unit_id,stratum,allocation");
}

nlohmann::json report_json(const VarianceReport& r) {
    nlohmann::json m = nlohmann::json::array();
    for (std::size_t i = 0; i < r.matrix.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < r.matrix.cols(); ++j) row.push_back(r.matrix(i, j));
        m.push_back(row);
    }
    return {{"design", r.design_tag}, {"trace", r.trace}, {"matrix", m}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal subsampling designs for logistic regression"};
    app.config_formatter(std::make_shared<CLI::ConfigINI>());
    app.set_config("--config", "", "INI file; [simulate], [analyze], ... sections hold option defaults");
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison of strategies on a simulated scenario");
    std::string scenario = "zeroMeanNormal", error = "low", sim_out = "out";
    std::size_t p = 3, population = 10000, replicates = 100, threads = default_threads();
    std::vector<std::size_t> n_values{800, 1200, 1600}, n1_values{200, 600};
    std::vector<std::string> strategy_names{"all"};
    std::uint64_t seed = 1;
    bool fixed_x = false, no_plots = false;
    std::string strata_on;
    sim->add_option("--scenario", scenario, "zeroMeanNormal|rareEvent|unequalVar|mixNormal|T3|Exp|DiscreteX")
        ->capture_default_str();
    sim->add_option("--p", p, "number of non-intercept covariates (3 or 7)")->capture_default_str();
    sim->add_option("--N", population, "population size")->capture_default_str();
    sim->add_option("--n", n_values, "total budgets")->delimiter(',')->capture_default_str();
    sim->add_option("--n1", n1_values, "pilot sizes")->delimiter(',')->capture_default_str();
    sim->add_option("--error", error, "surrogate error level: none|low|high")->capture_default_str();
    sim->add_option("--strategies", strategy_names, "names or numbers 1-6, or all")->delimiter(',');
    sim->add_option("--replicates", replicates)->capture_default_str();
    sim->add_option("--seed", seed)->capture_default_str();
    sim->add_flag("--fixed-x", fixed_x, "reuse one dataset for every replicate");
    sim->add_option("--out", sim_out, "output directory")->capture_default_str();
    sim->add_option("--threads", threads)->capture_default_str();
    sim->add_option("--strata-on", strata_on, "influence|covariates (default depends on scenario)");
    sim->add_flag("--no-plots", no_plots);

    // analyze
    auto* ana = app.add_subcommand("analyze", "Repeated subsampling of a cohort CSV against its full-data MLE");
    std::string data_path, ana_out = "out", ana_name = "cohort", ana_strata = "covariates";
    std::vector<std::size_t> ana_n{200}, ana_n1{75, 100, 125};
    std::vector<std::string> ana_strategies{"all"};
    std::size_t ana_reps = 100, ana_threads = default_threads(), ana_columns = 3;
    std::uint64_t ana_seed = 1;
    bool ana_no_plots = false;
    ana->add_option("--data", data_path, "CSV with covariate columns, y and s")->required();
    ana->add_option("--n", ana_n)->delimiter(',')->capture_default_str();
    ana->add_option("--n1", ana_n1)->delimiter(',')->capture_default_str();
    ana->add_option("--strategies", ana_strategies)->delimiter(',');
    ana->add_option("--replicates", ana_reps)->capture_default_str();
    ana->add_option("--seed", ana_seed)->capture_default_str();
    ana->add_option("--out", ana_out)->capture_default_str();
    ana->add_option("--name", ana_name, "label written to the scenario column")->capture_default_str();
    ana->add_option("--threads", ana_threads)->capture_default_str();
    ana->add_option("--strata-on", ana_strata, "influence|covariates")->capture_default_str();
    ana->add_option("--strata-columns", ana_columns, "covariate columns binned at the 0.2 and 0.8 quantiles")->capture_default_str();
    ana->add_flag("--no-plots", ana_no_plots);

    // design
    auto* des = app.add_subcommand("design", "Compute a sampling design for a dataset and write it as CSV");
    std::string des_data, method = "osmac", des_outcome = "y", des_out = "-", des_strata = "influence";
    std::size_t des_n = 0, des_n1 = 0;
    des->add_option("--data", des_data)->required();
    des->add_option("--method", method, "osmac|neyman|two-wave")
        ->check(CLI::IsMember({"osmac", "neyman", "two-wave"}))
        ->capture_default_str();
    des->add_option("--n", des_n, "budget (wave-1 size for two-wave uses --n1)")->required();
    des->add_option("--n1", des_n1, "pilot size for two-wave");
    des->add_option("--outcome", des_outcome, "y or s; two-wave always uses s")->capture_default_str();
    des->add_option("--strata-on", des_strata, "influence|covariates")->capture_default_str();
    des->add_option("--out", des_out, "output CSV, - for stdout")->capture_default_str();

    // variance
    auto* var = app.add_subcommand("variance", "Closed-form design variance of the influence-function total");
    std::string var_data, var_design, var_outcome = "y";
    bool brute = false;
    var->add_option("--data", var_data)->required();
    var->add_option("--design", var_design)->required();
    var->add_option("--outcome", var_outcome, "y or s")->capture_default_str();
    var->add_flag("--brute-force", brute, "also enumerate the design exactly (small N only)");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a simulated dataset as CSV");
    std::string gen_scenario = "zeroMeanNormal", gen_error = "low", gen_out = "-";
    std::size_t gen_p = 3, gen_population = 10000;
    std::uint64_t gen_seed = 1;
    bool gen_cohort = false;
    gen->add_option("--scenario", gen_scenario)->capture_default_str();
    gen->add_option("--p", gen_p)->capture_default_str();
    gen->add_option("--N", gen_population)->capture_default_str();
    gen->add_option("--error", gen_error)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_flag("--cohort", gen_cohort, "synthetic HIV-cohort-like data (N=1595, age and cd4)");
    gen->add_option("--out", gen_out, "output CSV, - for stdout")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*sim) {
            ExperimentConfig cfg;
            cfg.scenario = make_scenario(parse_scenario(scenario), p, population, parse_error_level(error));
            cfg.n_values = n_values;
            cfg.n1_values = n1_values;
            cfg.strategies = parse_strategies(strategy_names);
            cfg.replicates = replicates;
            cfg.base_seed = seed;
            cfg.fixed_x = fixed_x;
            cfg.threads = threads;
            cfg.options = default_options(cfg.scenario.name);
            if (!strata_on.empty()) cfg.options.strata.source = parse_strata_source(strata_on);
            return persist(run_grid(cfg), sim_out, !no_plots);
        }
        if (*ana) {
            const Dataset cohort = load_dataset_csv(data_path);
            RunOptions opts;
            opts.strata.source = parse_strata_source(ana_strata);
            opts.strata.columns = ana_columns;
            const auto strategies = parse_strategies(ana_strategies);
            return persist(run_cohort(cohort, ana_name, ana_n, ana_n1, strategies, ana_reps, ana_seed, ana_threads,
                                      opts),
                           ana_out, !ana_no_plots);
        }
        if (*des) {
            const Dataset data = load_dataset_csv(des_data);
            std::ostringstream csv;
            RunOptions opts;
            opts.strata.source = parse_strata_source(des_strata);
            if (method == "osmac") {
                const Binary& y = outcome_column(data, des_outcome);
                const auto infl = influence(data.x, y, fit_mle(data.x, y));
                const auto d = osmac(infl.norms, des_n);
                csv << "unit_id,pi\n";
                for (std::size_t i = 0; i < d.pi.size(); ++i) csv << i << ',' << detail::format_double(d.pi[i]) << '\n';
            } else {
                const bool two_wave = method == "two-wave";
                const Binary& y = outcome_column(data, two_wave ? "s" : des_outcome);
                const auto infl = influence(data.x, y, fit_mle(data.x, y));
                const auto strata = build_strata(y, stratification_scores(data.x, infl, opts.strata), opts.strata.cuts);
                const std::size_t budget = two_wave ? des_n1 : des_n;
                if (two_wave && (des_n1 == 0 || des_n1 >= des_n)) {
                    throw Error(ErrorCode::InfeasibleBudget, "two-wave needs 0 < n1 < n");
                }
                const auto d = neyman_allocation(strata, stratum_root_traces(infl.h, strata), budget);
                csv << "unit_id,stratum,allocation\n";
                for (std::size_t i = 0; i < strata.size(); ++i) {
                    const auto k = static_cast<std::size_t>(strata.stratum_of[i]);
                    csv << i << ',' << k << ',' << d.allocation[k] << '\n';
                }
            }
            if (des_out == "-") {
                std::cout << csv.str();
            } else {
                std::ofstream f(des_out);
                if (!f) throw Error(ErrorCode::IoError, "cannot write " + des_out);
                f << csv.str();
            }
            return kExitOk;
        }
        if (*var) {
            const Dataset data = load_dataset_csv(var_data);
            const Binary& y = outcome_column(data, var_outcome);
            const auto infl = influence(data.x, y, fit_mle(data.x, y));
            const DesignFile design = read_design_csv(var_design, data.size());
            nlohmann::json out;
            if (design.individual) {
                out = report_json(poisson_variance(infl.h, design.individual->pi));
                if (brute) out["brute_force"] = report_json(brute_force_design_variance(infl.h, *design.individual));
            } else {
                out = report_json(stratified_variance(infl.h, *design.stratified));
                if (brute) out["brute_force"] = report_json(brute_force_design_variance(infl.h, *design.stratified));
            }
            std::cout << out.dump(2) << '\n';
            return kExitOk;
        }
        if (*gen) {
            const Dataset d = gen_cohort ? gen_vccc_like(RngStream(gen_seed, 0).derive(0))
                                         : generate_dataset(make_scenario(parse_scenario(gen_scenario), gen_p,
                                                                          gen_population,
                                                                          parse_error_level(gen_error)),
                                                            RngStream(gen_seed, 0).derive(0));
            if (gen_out == "-") {
                write_dataset_csv(d, std::cout);
            } else {
                save_dataset_csv(d, gen_out);
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}
