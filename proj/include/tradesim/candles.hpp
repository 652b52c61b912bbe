#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "tradesim/domain.hpp"
#include "tradesim/matching.hpp"  // OrderStatus / StatusEvent

// Candlestick-level execution: bar-range fill semantics driven by a
// deterministic synthetic intra-bar price path, plus the trading-session
// clock that queues and expires orders around open and close.

namespace tradesim {

// ===========================================================================
// Synthetic intra-bar path
// ===========================================================================

struct PathPoint {
    double fraction = 0.0;  // position within the bar, 0..1
    Price price = 0;
};

struct SyntheticPath {
    std::vector<PathPoint> points;  // piecewise linear between waypoints
};

/// Waypoints O -> X -> Y -> C with (X, Y) = (L, H) on up bars and (H, L) on
/// down bars, at fractions 0, 1/3, 2/3, 1. Touches both extremes exactly
/// once and is a pure function of the bar.
inline SyntheticPath synth_path(const Candle& c) {
    SyntheticPath path;
    bool up = c.close >= c.open;
    Price x = up ? c.low : c.high;
    Price y = up ? c.high : c.low;
    path.points = {{0.0, c.open}, {1.0 / 3.0, x}, {2.0 / 3.0, y}, {1.0, c.close}};
    return path;
}

// ===========================================================================
// Bar resolution
// ===========================================================================

namespace detail {

// First path position where price <= target (dir < 0) or >= target (dir > 0).
// Fraction 0 covers the gap-through-at-open case.
inline std::optional<double> first_crossing(const SyntheticPath& path, Price target, int dir) {
    auto hit = [&](Price p) { return dir < 0 ? p <= target : p >= target; };
    const auto& pts = path.points;
    if (hit(pts.front().price)) return 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (!hit(pts[i + 1].price)) continue;
        // linear interpolation inside the segment; prior point missed, so
        // the segment moves strictly toward the target
        double span = static_cast<double>(pts[i].price - target);
        double drop = static_cast<double>(pts[i].price - pts[i + 1].price);
        double f = pts[i].fraction + (pts[i + 1].fraction - pts[i].fraction) * (span / drop);
        return f;
    }
    return std::nullopt;
}

}  // namespace detail

struct BarResolution {
    std::vector<Fill> fills;        // in path order
    std::vector<Order> surviving;   // untouched by the bar's range
};

/// Resolves queued orders against one bar. Market orders fill fully at the
/// open; limit and stop orders fill where the synthetic path first crosses
/// their price (at the open when the bar gaps through); everything else
/// survives. No partial fills at candle level: bars carry no depth.
inline BarResolution resolve_bar(const std::vector<Order>& open_orders, const Candle& bar) {
    BarResolution out;
    SyntheticPath path = synth_path(bar);

    struct Pending {
        std::size_t input_index;
        double fraction;
        Price price;
    };
    std::vector<Pending> hits;

    for (std::size_t i = 0; i < open_orders.size(); ++i) {
        const Order& o = open_orders[i];
        std::optional<double> frac;
        Price fill_price = 0;
        switch (o.type) {
            case OrderType::market:
                frac = 0.0;
                fill_price = bar.open;
                break;
            case OrderType::limit: {
                int dir = o.side == Side::buy ? -1 : +1;
                frac = detail::first_crossing(path, *o.limit_price, dir);
                // a gap through the limit fills at the (better) open
                if (frac) fill_price = *frac == 0.0 ? bar.open : *o.limit_price;
                break;
            }
            case OrderType::stop: {
                int dir = o.side == Side::buy ? +1 : -1;
                frac = detail::first_crossing(path, *o.stop_price, dir);
                // a gap through the stop fills at the (worse) open
                if (frac) fill_price = *frac == 0.0 ? bar.open : *o.stop_price;
                break;
            }
        }
        if (frac) hits.push_back({i, *frac, fill_price});
        else out.surviving.push_back(o);
    }

    std::stable_sort(hits.begin(), hits.end(),
                     [](const Pending& a, const Pending& b) { return a.fraction < b.fraction; });

    for (const auto& h : hits) {
        const Order& o = open_orders[h.input_index];
        Fill f;
        f.order_id = o.order_id;
        f.counter_order_id = 0;  // anonymous bar liquidity
        f.price = h.price;
        f.quantity = o.quantity;
        f.exec_time = bar.bar_start +
                      static_cast<SimTime>(std::llround(h.fraction * bar.timeframe_ms));
        f.liquidity = Liquidity::taker;
        out.fills.push_back(f);
    }
    return out;
}

// ===========================================================================
// Trading sessions
// ===========================================================================

struct SessionCalendar {
    enum class Kind { always_open, daily };
    Kind kind = Kind::always_open;
    int open_minute = 0;          // minutes after UTC midnight
    int close_minute = 24 * 60;

    bool is_open(SimTime t) const {
        if (kind == Kind::always_open) return true;
        std::int64_t minute = (t % 86'400'000) / 60'000;
        if (minute < 0) minute += 24 * 60;
        return minute >= open_minute && minute < close_minute;
    }

    /// Next open/close boundary strictly after t; absent for 24/7 markets.
    std::optional<SimTime> next_transition(SimTime t) const {
        if (kind == Kind::always_open) return std::nullopt;
        SimTime day = t - (t % 86'400'000);
        for (int d = 0; d < 2; ++d) {
            SimTime open_at = day + static_cast<SimTime>(open_minute) * 60'000;
            SimTime close_at = day + static_cast<SimTime>(close_minute) * 60'000;
            if (open_at > t) return open_at;
            if (close_at > t) return close_at;
            day += 86'400'000;
        }
        return std::nullopt;
    }
};

/// Tracks open/close transitions between engine steps. Orders submitted
/// while closed are queued, never dropped; survivors at close expire.
class SessionClock {
public:
    SessionClock() = default;
    SessionClock(SessionCalendar cal, SimTime start) : cal_(cal), now_(start) {}

    struct Transition {
        SimTime at;
        bool opening;
    };

    bool market_open() const { return cal_.is_open(now_); }
    SimTime now() const { return now_; }

    /// Moves the clock to `to` and reports every boundary crossed, in order.
    std::vector<Transition> advance(SimTime to) {
        std::vector<Transition> out;
        while (auto next = cal_.next_transition(now_)) {
            if (*next > to) break;
            now_ = *next;
            out.push_back({now_, cal_.is_open(now_)});
        }
        now_ = std::max(now_, to);
        return out;
    }

private:
    SessionCalendar cal_;
    SimTime now_ = 0;
};

/// Order lifecycle around bars and sessions for one instrument: queues
/// closed-market submissions, resolves active orders per bar, and expires
/// survivors at session close.
class CandleExecutor {
public:
    CandleExecutor() = default;
    CandleExecutor(SessionCalendar cal, SimTime start) : clock_(cal, start) {}

    /// Queues the order for the next open when the market is closed.
    StatusEvent add_order(const Order& order, SimTime now) {
        bool open = clock_.market_open();
        (open ? active_ : queued_).push_back(order);
        return {order.order_id, order.agent_id, OrderStatus::accepted, RejectReason::none, 0,
                order.quantity, now};
    }

    bool cancel(OrderId id, StatusEvent* ev = nullptr, SimTime now = 0) {
        for (auto* list : {&active_, &queued_}) {
            for (auto it = list->begin(); it != list->end(); ++it) {
                if (it->order_id != id) continue;
                if (ev)
                    *ev = {id, it->agent_id, OrderStatus::canceled, RejectReason::none, 0,
                           it->quantity, now};
                list->erase(it);
                return true;
            }
        }
        return false;
    }

    /// Applies session transitions up to `to`: expiries at close,
    /// activation of the queue at open.
    std::vector<StatusEvent> advance_session(SimTime to) {
        std::vector<StatusEvent> out;
        for (const auto& tr : clock_.advance(to)) {
            if (tr.opening) {
                for (auto& o : queued_) active_.push_back(o);
                queued_.clear();
            } else {
                for (const auto& o : active_)
                    out.push_back({o.order_id, o.agent_id, OrderStatus::session_expired,
                                   RejectReason::session_expired, 0, o.quantity, tr.at});
                active_.clear();
            }
        }
        return out;
    }

    /// Resolves active orders against the bar; fills leave the executor,
    /// survivors stay queued for the next bar.
    BarResolution on_bar(const Candle& bar) {
        auto res = resolve_bar(active_, bar);
        active_ = res.surviving;
        return res;
    }

    bool market_open() const { return clock_.market_open(); }
    const std::vector<Order>& active_orders() const { return active_; }
    const std::vector<Order>& queued_orders() const { return queued_; }

    const Order* find(OrderId id) const {
        for (const auto* list : {&active_, &queued_}) {
            for (const auto& o : *list)
                if (o.order_id == id) return &o;
        }
        return nullptr;
    }

private:
    SessionClock clock_;
    std::vector<Order> active_;
    std::vector<Order> queued_;
};

}  // namespace tradesim
