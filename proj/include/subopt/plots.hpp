#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "subopt/error.hpp"
#include "subopt/harness.hpp"

namespace subopt {

namespace detail {

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

inline const char* strategy_colour(StrategyId s) {
    switch (s) {
    case StrategyId::CcTrue: return "#1f77b4";
    case StrategyId::CcSurrogate: return "#ff7f0e";
    case StrategyId::OsmacOracle: return "#2ca02c";
    case StrategyId::OssatPilot: return "#d62728";
    case StrategyId::StratOracle: return "#9467bd";
    case StrategyId::StratPilot: return "#8c564b";
    }
    return "#000000";
}

struct Series {
    StrategyId strategy;
    std::vector<std::pair<double, double>> points;
};

inline std::string render_chart(const std::string& title, const std::string& x_label,
                                const std::vector<Series>& series) {
    constexpr double width = 720, height = 440;
    constexpr double left = 80, right = 200, top = 40, bottom = 60;
    const double plot_w = width - left - right, plot_h = height - top - bottom;

    double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    if (x_hi == x_lo) { x_lo -= 1; x_hi += 1; }
    if (y_hi == y_lo) { y_lo = y_lo > 0 ? 0 : y_lo - 1; y_hi += y_hi == 0 ? 1 : std::abs(y_hi) * 0.1; }
    y_lo = std::min(0.0, y_lo);
    y_hi += 0.05 * (y_hi - y_lo);

    auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto sy = [&](double y) { return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h; };

    std::ostringstream o;
    o << R"(<?xml version="1.0" encoding="UTF-8"?>)" << '\n';
    o << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height
      << R"(" font-family="sans-serif" font-size="12">)" << '\n';
    o << R"(<rect x="0" y="0" width=")" << width << R"(" height=")" << height << R"(" fill="white"/>)" << '\n';
    o << R"(<text x=")" << left + plot_w / 2 << R"(" y="22" text-anchor="middle" font-size="14">)"
      << xml_escape(title) << "</text>\n";
    o << R"(<rect x=")" << left << R"(" y=")" << top << R"(" width=")" << plot_w << R"(" height=")" << plot_h
      << R"(" fill="none" stroke="#444"/>)" << '\n';

    constexpr int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        const double yv = y_lo + (y_hi - y_lo) * t / ticks;
        const double xv = x_lo + (x_hi - x_lo) * t / ticks;
        o << R"(<line x1=")" << left - 4 << R"(" x2=")" << left << R"(" y1=")" << sy(yv) << R"(" y2=")" << sy(yv)
          << R"(" stroke="#444"/>)" << '\n';
        o << R"(<text x=")" << left - 8 << R"(" y=")" << sy(yv) + 4 << R"(" text-anchor="end">)" << fmt(yv)
          << "</text>\n";
        o << R"(<line x1=")" << sx(xv) << R"(" x2=")" << sx(xv) << R"(" y1=")" << top + plot_h << R"(" y2=")"
          << top + plot_h + 4 << R"(" stroke="#444"/>)" << '\n';
        o << R"(<text x=")" << sx(xv) << R"(" y=")" << top + plot_h + 18 << R"(" text-anchor="middle">)"
          << fmt(xv) << "</text>\n";
    }
    o << R"(<text x=")" << left + plot_w / 2 << R"(" y=")" << height - 16 << R"(" text-anchor="middle">)"
      << xml_escape(x_label) << "</text>\n";
    o << R"(<text x="18" y=")" << top + plot_h / 2 << R"(" text-anchor="middle" transform="rotate(-90 18 )"
      << top + plot_h / 2 << ")\">MSE</text>\n";

    double legend_y = top + 10;
    for (const auto& s : series) {
        const char* colour = strategy_colour(s.strategy);
        const char* dash = is_oracle(s.strategy) ? R"( stroke-dasharray="6,4")" : "";
        o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"" << dash << " points=\"";
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            o << (i ? " " : "") << sx(s.points[i].first) << ',' << sy(s.points[i].second);
        }
        o << "\"/>\n";
        for (const auto& [x, y] : s.points) {
            o << R"(<circle cx=")" << sx(x) << R"(" cy=")" << sy(y) << R"(" r="3" fill=")" << colour << R"("/>)"
              << '\n';
        }
        const double lx = left + plot_w + 16;
        o << R"(<line x1=")" << lx << R"(" x2=")" << lx + 28 << R"(" y1=")" << legend_y << R"(" y2=")" << legend_y
          << R"(" stroke=")" << colour << R"(" stroke-width="2")" << dash << "/>\n";
        o << R"(<text x=")" << lx + 34 << R"(" y=")" << legend_y + 4 << R"(">)" << to_string(s.strategy)
          << (is_oracle(s.strategy) ? " (oracle)" : "") << "</text>\n";
        legend_y += 20;
    }
    o << "</svg>\n";
    return o.str();
}

inline std::string file_token(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    return s;
}

} // namespace detail

/// Writes one MSE-vs-budget SVG per (scenario, p, error level, fixed budget)
/// plus summary.csv into `dir`. The x axis is n when several n were run and
/// n1 otherwise. Oracle strategies are drawn dashed. Returns the SVG paths.
inline std::vector<std::filesystem::path> emit_plots(std::span<const SummaryRow> summary,
                                                     const std::filesystem::path& dir) {
    if (summary.empty()) throw Error(ErrorCode::NoData, "nothing to plot");
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / "summary.csv");
        if (!csv) throw Error(ErrorCode::IoError, "cannot write " + (dir / "summary.csv").string());
        write_summary_csv(summary, csv);
    }

    using Group = std::tuple<std::string, std::size_t, std::string>;
    std::map<Group, std::vector<const SummaryRow*>> groups;
    for (const auto& r : summary) groups[{r.scenario, r.p, r.error_level}].push_back(&r);

    std::vector<std::filesystem::path> written;
    for (const auto& [group, rows] : groups) {
        std::set<std::size_t> ns;
        for (const SummaryRow* r : rows) ns.insert(r->n);
        const bool x_is_n = ns.size() > 1;

        std::map<std::size_t, std::map<int, detail::Series>> panels; // fixed value -> strategy -> series
        for (const SummaryRow* r : rows) {
            if (!r->mse) continue;
            const std::size_t fixed = x_is_n ? r->n1 : r->n;
            const double x = static_cast<double>(x_is_n ? r->n : r->n1);
            auto& series = panels[fixed].try_emplace(static_cast<int>(r->strategy), detail::Series{r->strategy, {}})
                               .first->second;
            series.points.emplace_back(x, *r->mse);
        }
        for (auto& [fixed, by_strategy] : panels) {
            std::vector<detail::Series> series;
            for (auto& [id, s] : by_strategy) {
                std::sort(s.points.begin(), s.points.end());
                series.push_back(std::move(s));
            }
            const auto& [scenario, p, error] = group;
            const std::string fixed_name = x_is_n ? "n1" : "n";
            const std::string title = scenario + ", p=" + std::to_string(p) + ", error=" + error + ", " +
                                      fixed_name + "=" + std::to_string(fixed);
            const auto path = dir / ("mse_" + detail::file_token(scenario) + "_p" + std::to_string(p) + "_" +
                                     detail::file_token(error) + "_" + fixed_name + "-" + std::to_string(fixed) +
                                     ".svg");
            std::ofstream svg(path);
            if (!svg) throw Error(ErrorCode::IoError, "cannot write " + path.string());
            svg << detail::render_chart(title, x_is_n ? "n (total budget)" : "n1 (pilot size)", series);
            written.push_back(path);
        }
    }
    if (written.empty()) throw Error(ErrorCode::NoData, "no cell has a finite MSE");
    return written;
}

} // namespace subopt
