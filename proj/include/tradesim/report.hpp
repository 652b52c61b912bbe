#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tradesim/evaluator.hpp"

// Report rendering: canonical JSON for machines, one self-contained HTML
// file for humans, CSV ledgers for spreadsheets. No network fetches, no
// external assets.

namespace tradesim {

/// One executed-trade annotation on the price chart.
struct TradeMark {
    SimTime time = 0;
    Price price = 0;
    Side side = Side::buy;
    Qty qty = 0;
    std::string explanation;
};

// ===========================================================================
// JSON
// ===========================================================================

/// Canonical report document: sorted keys, stable bytes across identical
/// runs. `run_meta` carries engine-level facts (seed, mode, symbol...).
inline nlohmann::json report_to_json(const Evaluator& ev, const nlohmann::json& run_meta) {
    nlohmann::json doc;
    doc["aggregate"] = ev.compute().to_json();
    nlohmann::json agents = nlohmann::json::object();
    for (const auto& id : ev.agent_ids()) agents[id] = ev.compute_agent(id).to_json();
    doc["agents"] = agents;
    doc["run"] = run_meta;
    return doc;
}

inline void write_report_json(const std::string& path, const Evaluator& ev,
                              const nlohmann::json& run_meta) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw error("cannot write report: " + path);
    out << report_to_json(ev, run_meta).dump(2) << "\n";
    if (!out) throw error("report write failed: " + path);
}

// ===========================================================================
// CSV ledgers
// ===========================================================================

inline void write_trades_csv(const std::string& path, const std::vector<TradeRecord>& trades) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw error("cannot write trades: " + path);
    out << "agent_id,direction,qty,entry_price,exit_price,open_time_ms,close_time_ms,"
           "realized_pnl,open\n";
    for (const auto& t : trades) {
        out << t.agent_id << ','
            << (t.direction == TradeRecord::Direction::long_side ? "long" : "short") << ','
            << t.qty << ',' << format_price(t.entry_notional / (t.qty == 0 ? 1 : t.qty)) << ','
            << (t.open ? "" : format_price(t.exit_price)) << ',' << t.open_time << ','
            << (t.open ? std::string() : std::to_string(t.close_time)) << ','
            << format_price(t.realized_pnl) << ',' << (t.open ? "true" : "false") << "\n";
    }
}

inline void write_equity_csv(const std::string& path, const std::vector<EquityPoint>& equity) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw error("cannot write equity: " + path);
    out << "sim_time_ms,value\n";
    for (const auto& pt : equity) out << pt.sim_time << ',' << format_price(pt.value) << "\n";
}

// ===========================================================================
// HTML
// ===========================================================================

namespace detail_html {

inline std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
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

inline std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

inline std::string opt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string("–");
}

}  // namespace detail_html

/// Renders the candlestick series with ▲/▼ execution markers, the equity
/// curve, volume bars and the metric table into one static page. Hover
/// detail (price, explanation) rides on SVG <title> elements.
inline std::string render_report_html(const Evaluator& ev, const std::vector<Candle>& candles,
                                      const std::vector<TradeMark>& marks,
                                      const nlohmann::json& run_meta) {
    using detail_html::escape;
    using detail_html::fmt;
    using detail_html::opt;

    MetricsReport m = ev.compute();
    const auto& equity = ev.equity();
    std::ostringstream html;
    html << "<!doctype html>\n<html><head><meta charset=\"utf-8\">\n"
         << "<title>tradesim report</title>\n<style>\n"
         << "body{font-family:sans-serif;margin:24px;color:#222}\n"
         << "table{border-collapse:collapse;margin-bottom:24px}\n"
         << "td,th{border:1px solid #ccc;padding:4px 10px;text-align:right}\n"
         << "th{background:#f2f2f2;text-align:left}\n"
         << ".up{fill:#1a7f37}.down{fill:#b3261e}\n"
         << ".buy{fill:#1a7f37}.sell{fill:#b3261e}\n"
         << ".wick{stroke:#555;stroke-width:1}\n"
         << ".equity{stroke:#1f4e9c;fill:none;stroke-width:1.5}\n"
         << ".vol{fill:#9bb4d4}\n"
         << "</style></head><body>\n<h1>Simulation report</h1>\n";

    if (run_meta.is_object() && !run_meta.empty())
        html << "<p>" << escape(run_meta.dump()) << "</p>\n";

    html << "<table>\n";
    auto row = [&](const char* name, const std::string& value) {
        html << "<tr><th>" << name << "</th><td>" << value << "</td></tr>\n";
    };
    row("ROI", fmt(m.roi));
    row("Sharpe Ratio", opt(m.sharpe));
    row("Annualized SR", opt(m.annualized_sharpe));
    row("Sortino Ratio", opt(m.sortino));
    row("Win Rate", opt(m.win_rate));
    row("Profit Factor", opt(m.profit_factor));
    row("Max Drawdown", fmt(m.max_drawdown));
    row("Num Trades", std::to_string(m.num_trades));
    row("Num Closed Trades", std::to_string(m.num_closed_trades));
    row("Total Traded Volume", fmt(m.total_traded_volume));
    row("Average Trade Size", opt(m.average_trade_size));
    row("ROIC", opt(m.roic));
    row("Profit per Trade", opt(m.profit_per_trade));
    row("Last Portfolio Value", fmt(m.last_portfolio_value));
    row("Realized P&amp;L", fmt(m.realized_pnl));
    for (const auto& [k, v] : m.extras) row(escape(k).c_str(), fmt(v));
    html << "</table>\n";

    if (ev.all_trades().empty()) html << "<p><em>no trades</em></p>\n";

    if (!candles.empty()) {
        const double W = 960.0, H = 320.0, pad = 10.0;
        Price lo = candles.front().low, hi = candles.front().high;
        Qty max_vol = 1;
        for (const auto& c : candles) {
            lo = std::min(lo, c.low);
            hi = std::max(hi, c.high);
            max_vol = std::max(max_vol, c.volume);
        }
        SimTime t0 = candles.front().bar_start;
        SimTime t1 = candles.back().bar_end();
        auto x_of = [&](SimTime t) {
            return pad + (W - 2 * pad) * static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
        };
        auto y_of = [&](Price p) {
            if (hi == lo) return H / 2;
            return pad + (H - 2 * pad) * (1.0 - static_cast<double>(p - lo) /
                                                    static_cast<double>(hi - lo));
        };
        double bw = std::max(1.5, (W - 2 * pad) / static_cast<double>(candles.size()) * 0.6);

        html << "<h2>Price</h2>\n<svg width=\"" << W << "\" height=\"" << H
             << "\" role=\"img\">\n";
        for (const auto& c : candles) {
            double xc = x_of(c.bar_start + c.timeframe_ms / 2);
            html << "<line class=\"wick\" x1=\"" << xc << "\" x2=\"" << xc << "\" y1=\""
                 << y_of(c.high) << "\" y2=\"" << y_of(c.low) << "\"/>\n";
            double top = y_of(std::max(c.open, c.close));
            double bot = y_of(std::min(c.open, c.close));
            html << "<rect class=\"" << (c.close >= c.open ? "up" : "down") << "\" x=\""
                 << xc - bw / 2 << "\" y=\"" << top << "\" width=\"" << bw << "\" height=\""
                 << std::max(1.0, bot - top) << "\"><title>O " << format_price(c.open) << " H "
                 << format_price(c.high) << " L " << format_price(c.low) << " C "
                 << format_price(c.close) << " V " << c.volume << "</title></rect>\n";
        }
        for (const auto& mk : marks) {
            double x = x_of(mk.time), y = y_of(mk.price);
            bool buy = mk.side == Side::buy;
            double dy = buy ? 7.0 : -7.0;
            html << "<polygon class=\"" << (buy ? "buy" : "sell") << "\" points=\"" << x - 5
                 << "," << y + dy << " " << x + 5 << "," << y + dy << " " << x << ","
                 << y + (buy ? 1.0 : -1.0) << "\"><title>" << (buy ? "buy " : "sell ") << mk.qty
                 << " @ " << format_price(mk.price);
            if (!mk.explanation.empty()) html << " — " << escape(mk.explanation);
            html << "</title></polygon>\n";
        }
        html << "</svg>\n";

        html << "<h2>Volume</h2>\n<svg width=\"" << W << "\" height=\"120\">\n";
        for (const auto& c : candles) {
            double xc = x_of(c.bar_start + c.timeframe_ms / 2);
            double h = 100.0 * static_cast<double>(c.volume) / static_cast<double>(max_vol);
            html << "<rect class=\"vol\" x=\"" << xc - bw / 2 << "\" y=\"" << 110.0 - h
                 << "\" width=\"" << bw << "\" height=\"" << h << "\"/>\n";
        }
        html << "</svg>\n";
    }

    if (equity.size() >= 2) {
        const double W = 960.0, H = 200.0, pad = 10.0;
        Money lo = equity.front().value, hi = equity.front().value;
        for (const auto& pt : equity) {
            lo = std::min(lo, pt.value);
            hi = std::max(hi, pt.value);
        }
        SimTime t0 = equity.front().sim_time, t1 = equity.back().sim_time;
        html << "<h2>Equity</h2>\n<svg width=\"" << W << "\" height=\"" << H
             << "\">\n<polyline class=\"equity\" points=\"";
        for (const auto& pt : equity) {
            double x = t1 == t0 ? pad
                                : pad + (W - 2 * pad) * static_cast<double>(pt.sim_time - t0) /
                                      static_cast<double>(t1 - t0);
            double y = hi == lo ? H / 2
                                : pad + (H - 2 * pad) * (1.0 - static_cast<double>(pt.value - lo) /
                                                                   static_cast<double>(hi - lo));
            html << x << "," << y << " ";
        }
        html << "\"/>\n</svg>\n";
    }

    html << "</body></html>\n";
    return html.str();
}

inline void write_report_html(const std::string& path, const Evaluator& ev,
                              const std::vector<Candle>& candles,
                              const std::vector<TradeMark>& marks,
                              const nlohmann::json& run_meta) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw error("cannot write report: " + path);
    out << render_report_html(ev, candles, marks, run_meta);
    if (!out) throw error("report write failed: " + path);
}

}  // namespace tradesim
