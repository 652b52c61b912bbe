#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tradesim/agents.hpp"
#include "tradesim/domain.hpp"

// Execution-side bookkeeping: the closed-trade ledger, equity history and
// the full performance-metric suite with JSON / HTML / CSV exports.

namespace tradesim {

// ===========================================================================
// Ledger
// ===========================================================================

struct TradeRecord {
    SimTime open_time = 0;
    SimTime close_time = 0;
    enum class Direction { long_side, short_side } direction = Direction::long_side;
    Qty qty = 0;
    Money entry_notional = 0;  // total entry cost/proceeds, exact
    Price exit_price = 0;
    Money realized_pnl = 0;
    bool open = true;
    std::string agent_id;

    double entry_price() const {
        return qty == 0 ? 0.0 : price_to_double(entry_notional) / static_cast<double>(qty);
    }
};

struct EquityPoint {
    SimTime sim_time = 0;
    Money value = 0;
};

struct MetricsConfig {
    double risk_free_rate = 0.0;   // annual; divided by periods_per_year per period
    double periods_per_year = 252.0;
};

// ===========================================================================
// Metric arithmetic
// ===========================================================================

namespace metrics {

inline double mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double stdev_pop(const std::vector<double>& xs) {
    double m = mean(xs);
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::sqrt(v / static_cast<double>(xs.size()));
}

/// mean(r - rf) / stdev(r); invariant under a common shift of returns and
/// the risk-free rate.
inline std::optional<double> sharpe_ratio(const std::vector<double>& returns,
                                          double rf_per_period) {
    if (returns.size() < 2) return std::nullopt;
    double sd = stdev_pop(returns);
    if (sd == 0.0) return std::nullopt;
    return (mean(returns) - rf_per_period) / sd;
}

/// mean excess over the stdev of the negative returns only.
inline std::optional<double> sortino_ratio(const std::vector<double>& returns,
                                           double rf_per_period) {
    if (returns.empty()) return std::nullopt;
    std::vector<double> downside;
    for (double r : returns)
        if (r < 0.0) downside.push_back(r);
    if (downside.size() < 1) return std::nullopt;
    double sd = stdev_pop(downside);
    if (sd == 0.0) return std::nullopt;
    return (mean(returns) - rf_per_period) / sd;
}

/// Largest fractional decline from a running peak, single streaming pass.
inline double max_drawdown(const std::vector<EquityPoint>& equity) {
    double peak = 0.0, worst = 0.0;
    for (const auto& pt : equity) {
        double v = price_to_double(pt.value);
        peak = std::max(peak, v);
        if (peak > 0.0) worst = std::max(worst, (peak - v) / peak);
    }
    return worst;
}

}  // namespace metrics

// ===========================================================================
// Metrics report
// ===========================================================================

/// Field set mirrors the published summary-table rows one-for-one. Values
/// undefined on empty sub-populations are absent and export as null.
struct MetricsReport {
    double roi = 0.0;
    std::optional<double> sharpe;
    std::optional<double> annualized_sharpe;
    std::optional<double> sortino;
    std::optional<double> win_rate;
    std::optional<double> profit_factor;  // 999.0 sentinel when loss-free
    double max_drawdown = 0.0;
    std::int64_t num_trades = 0;         // executed trades (fills)
    std::int64_t num_closed_trades = 0;
    double total_traded_volume = 0.0;    // monetary
    std::optional<double> average_trade_size;
    std::optional<double> roic;
    std::optional<double> profit_per_trade;
    double last_portfolio_value = 0.0;
    double realized_pnl = 0.0;
    std::map<std::string, double> extras;  // registered custom metrics

    nlohmann::json to_json() const {
        nlohmann::json j;
        auto put = [&j](const char* key, const std::optional<double>& v) {
            if (v) j[key] = *v;
            else j[key] = nullptr;
        };
        j["roi"] = roi;
        put("sharpe", sharpe);
        put("annualized_sharpe", annualized_sharpe);
        put("sortino", sortino);
        put("win_rate", win_rate);
        put("profit_factor", profit_factor);
        j["max_drawdown"] = max_drawdown;
        j["num_trades"] = num_trades;
        j["num_closed_trades"] = num_closed_trades;
        j["total_traded_volume"] = total_traded_volume;
        put("average_trade_size", average_trade_size);
        put("roic", roic);
        put("profit_per_trade", profit_per_trade);
        j["last_portfolio_value"] = last_portfolio_value;
        j["realized_pnl"] = realized_pnl;
        for (const auto& [k, v] : extras) j["extras"][k] = v;
        return j;
    }
};

struct FillStats {
    std::int64_t count = 0;
    Money notional = 0;
};

inline MetricsReport compute_metrics(const std::vector<TradeRecord>& ledger,
                                     const std::vector<EquityPoint>& equity,
                                     const MetricsConfig& cfg, const FillStats& fills) {
    if (equity.empty()) throw error("NO_EQUITY: metrics need at least one equity point");
    MetricsReport m;
    double initial = price_to_double(equity.front().value);
    double final_v = price_to_double(equity.back().value);
    m.roi = initial != 0.0 ? (final_v - initial) / initial : 0.0;
    m.last_portfolio_value = final_v;

    std::vector<double> returns;
    for (std::size_t i = 1; i < equity.size(); ++i) {
        double prev = price_to_double(equity[i - 1].value);
        if (prev != 0.0)
            returns.push_back(price_to_double(equity[i].value) / prev - 1.0);
    }
    double rf_per_period = cfg.periods_per_year > 0 ? cfg.risk_free_rate / cfg.periods_per_year
                                                    : 0.0;
    m.sharpe = metrics::sharpe_ratio(returns, rf_per_period);
    if (m.sharpe) m.annualized_sharpe = *m.sharpe * std::sqrt(cfg.periods_per_year);
    m.sortino = metrics::sortino_ratio(returns, rf_per_period);
    m.max_drawdown = metrics::max_drawdown(equity);

    Money realized = 0;
    Money entry_deployed = 0;
    std::int64_t closed = 0, winners = 0;
    double gross_profit = 0.0, gross_loss = 0.0;
    for (const auto& t : ledger) {
        if (t.open) continue;
        ++closed;
        realized += t.realized_pnl;
        entry_deployed += t.entry_notional;
        if (t.realized_pnl > 0) {
            ++winners;
            gross_profit += price_to_double(t.realized_pnl);
        } else if (t.realized_pnl < 0) {
            gross_loss += price_to_double(-t.realized_pnl);
        }
    }
    m.num_closed_trades = closed;
    m.realized_pnl = price_to_double(realized);
    if (closed > 0) {
        m.win_rate = static_cast<double>(winners) / static_cast<double>(closed);
        m.profit_per_trade = m.realized_pnl / static_cast<double>(closed);
        if (gross_loss > 0.0) m.profit_factor = gross_profit / gross_loss;
        else if (gross_profit > 0.0) m.profit_factor = 999.0;  // loss-free sentinel
        if (entry_deployed > 0)
            m.roic = m.realized_pnl / price_to_double(entry_deployed);
    }
    m.num_trades = fills.count;
    m.total_traded_volume = price_to_double(fills.notional);
    if (fills.count > 0)
        m.average_trade_size = m.total_traded_volume / static_cast<double>(fills.count);
    return m;
}

// ===========================================================================
// Evaluator
// ===========================================================================

using MetricFn =
    std::function<double(const std::vector<TradeRecord>&, const std::vector<EquityPoint>&)>;

/// Subscribes to the execution stream, keeps per-agent books independent of
/// the agent runtime, and turns them into reports once the session ends.
class Evaluator {
public:
    explicit Evaluator(MetricsConfig cfg = {}) : cfg_(cfg) {}

    void add_agent(const std::string& agent_id, Money initial_cash) {
        auto& st = agents_[agent_id];
        st.id = agent_id;
        st.portfolio.cash = initial_cash;
        st.initial_cash = initial_cash;
        total_initial_ += initial_cash;
    }

    /// Average-cost trade pairing consistent with the runtime's accounting;
    /// fills must arrive time-ordered.
    void record_fill(const std::string& agent_id, Side side, const Fill& fill) {
        if (fill.exec_time < last_fill_time_)
            throw error("OUT_OF_ORDER: fills must arrive time-sorted");
        last_fill_time_ = fill.exec_time;
        auto it = agents_.find(agent_id);
        if (it == agents_.end()) throw error("unknown agent in fill: " + agent_id);
        AgentState& st = it->second;

        st.fills.count += 1;
        st.fills.notional += fill.price * fill.quantity;
        fills_.count += 1;
        fills_.notional += fill.price * fill.quantity;

        apply_to_ledger(st, side, fill);
        st.portfolio = apply_fill(st.portfolio, side, fill.price, fill.quantity);
        st.last_mark = fill.price;
    }

    /// Close-marked equity sample, one per action interval. Returns the
    /// aggregate point.
    EquityPoint mark_interval(SimTime t, Price mark) {
        Money total = 0;
        for (auto& [id, st] : agents_) {
            st.last_mark = mark;
            Money v = st.portfolio.market_value(mark);
            st.equity.push_back({t, v});
            total += v;
        }
        EquityPoint pt{t, total};
        equity_.push_back(pt);
        return pt;
    }

    void register_metric(const std::string& name, MetricFn fn) {
        if (extra_metrics_.count(name)) throw config_error("DUPLICATE_METRIC: " + name);
        extra_metrics_[name] = std::move(fn);
    }

    MetricsReport compute() const {
        auto report = compute_metrics(all_trades(), equity_, cfg_, fills_);
        for (const auto& [name, fn] : extra_metrics_) report.extras[name] = fn(all_trades(), equity_);
        return report;
    }

    MetricsReport compute_agent(const std::string& agent_id) const {
        const AgentState& st = agents_.at(agent_id);
        auto report = compute_metrics(st.trades, st.equity, cfg_, st.fills);
        for (const auto& [name, fn] : extra_metrics_) report.extras[name] = fn(st.trades, st.equity);
        return report;
    }

    std::vector<TradeRecord> all_trades() const {
        std::vector<TradeRecord> out;
        for (const auto& [id, st] : agents_)
            out.insert(out.end(), st.trades.begin(), st.trades.end());
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
            return a.open_time < b.open_time;
        });
        return out;
    }

    const std::vector<EquityPoint>& equity() const { return equity_; }
    const std::vector<EquityPoint>& agent_equity(const std::string& id) const {
        return agents_.at(id).equity;
    }
    const PortfolioState& agent_portfolio(const std::string& id) const {
        return agents_.at(id).portfolio;
    }
    std::vector<std::string> agent_ids() const {
        std::vector<std::string> out;
        for (const auto& [id, st] : agents_) out.push_back(id);
        return out;
    }
    Money total_initial_cash() const { return total_initial_; }

private:
    struct AgentState {
        std::string id;
        PortfolioState portfolio;
        Money initial_cash = 0;
        std::vector<TradeRecord> trades;
        std::optional<std::size_t> open_index;  // at most one open episode
        std::vector<EquityPoint> equity;
        FillStats fills;
        Price last_mark = 0;
    };

    void apply_to_ledger(AgentState& st, Side side, const Fill& fill) {
        Qty qty = fill.quantity;
        // close against an opposite-direction open episode first
        if (st.open_index) {
            TradeRecord& open = st.trades[*st.open_index];
            bool closing = (side == Side::sell) == (open.direction == TradeRecord::Direction::long_side);
            if (closing) {
                Qty close_qty = std::min(qty, open.qty);
                Money portion = detail::basis_portion(open.entry_notional, close_qty, open.qty);
                TradeRecord closed = open;
                closed.qty = close_qty;
                closed.entry_notional = portion;
                closed.exit_price = fill.price;
                closed.close_time = fill.exec_time;
                closed.open = false;
                closed.realized_pnl = open.direction == TradeRecord::Direction::long_side
                                          ? close_qty * fill.price - portion
                                          : portion - close_qty * fill.price;
                open.qty -= close_qty;
                open.entry_notional -= portion;
                qty -= close_qty;
                if (open.qty == 0) {
                    // the episode ends; replace the open record with the close
                    st.trades[*st.open_index] = closed;
                    st.open_index.reset();
                } else {
                    st.trades.push_back(closed);
                }
            }
        }
        if (qty == 0) return;
        // remainder opens or extends an episode in the fill's direction
        auto dir = side == Side::buy ? TradeRecord::Direction::long_side
                                     : TradeRecord::Direction::short_side;
        if (st.open_index && st.trades[*st.open_index].direction == dir) {
            TradeRecord& open = st.trades[*st.open_index];
            open.qty += qty;
            open.entry_notional += qty * fill.price;
        } else {
            TradeRecord rec;
            rec.open_time = fill.exec_time;
            rec.direction = dir;
            rec.qty = qty;
            rec.entry_notional = qty * fill.price;
            rec.open = true;
            rec.agent_id = st.id;
            st.trades.push_back(rec);
            st.open_index = st.trades.size() - 1;
        }
    }

    MetricsConfig cfg_;
    std::map<std::string, AgentState> agents_;
    std::vector<EquityPoint> equity_;
    FillStats fills_;
    Money total_initial_ = 0;
    SimTime last_fill_time_ = std::numeric_limits<SimTime>::min();
    std::map<std::string, MetricFn> extra_metrics_;
};

}  // namespace tradesim
