#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tradesim/domain.hpp"
#include "tradesim/indicators.hpp"  // Ladder

// Order-level execution: price-time-priority book, latency injection, stop
// triggering and exogenous event replay. The book is single-owner; callers
// serialize arrivals by SimTime.

namespace tradesim {

// ===========================================================================
// Latency
// ===========================================================================

struct LatencyModel {
    enum class Mode { fixed, uniform_jitter };
    Mode mode = Mode::fixed;
    std::int64_t base_ms = 0;
    std::int64_t jitter_ms = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

/// Order-path delay. The jitter stream is a pure function of
/// (seed, agent_id, per-agent order seq), so replays are exact.
inline SimTime apply_latency(const Order& order, const LatencyModel& model,
                             std::uint64_t agent_order_seq) {
    std::int64_t delay = model.base_ms;
    if (model.mode == LatencyModel::Mode::uniform_jitter && model.jitter_ms > 0) {
        std::uint64_t h = detail::splitmix64(model.seed ^ detail::fnv1a(order.agent_id) ^
                                             detail::splitmix64(agent_order_seq));
        delay += static_cast<std::int64_t>(h % static_cast<std::uint64_t>(model.jitter_ms + 1));
    }
    return order.submit_time + delay;
}

// ===========================================================================
// Book state
// ===========================================================================

struct RestingOrder {
    OrderId order_id = 0;
    std::string agent_id;  // empty = exogenous book liquidity
    Qty remaining_qty = 0;
    Price price = 0;
    SimTime arrival_time = 0;
    std::uint64_t seq = 0;  // engine-assigned monotone arrival sequence
};

enum class BookEventKind { add, cancel, execute };

inline const char* to_string(BookEventKind k) {
    switch (k) {
        case BookEventKind::add: return "add";
        case BookEventKind::cancel: return "cancel";
        default: return "execute";
    }
}

struct BookEvent {
    SimTime event_time = 0;
    BookEventKind kind = BookEventKind::add;
    OrderId order_id = 0;
    Side side = Side::buy;
    Price price = 0;
    Qty quantity = 0;
};

enum class OrderStatus { accepted, filled, partial, rejected, canceled, session_expired };

inline const char* to_string(OrderStatus s) {
    switch (s) {
        case OrderStatus::accepted: return "accepted";
        case OrderStatus::filled: return "filled";
        case OrderStatus::partial: return "partial";
        case OrderStatus::rejected: return "rejected";
        case OrderStatus::canceled: return "canceled";
        default: return "session_expired";
    }
}

struct StatusEvent {
    OrderId order_id = 0;
    std::string agent_id;
    OrderStatus status = OrderStatus::accepted;
    RejectReason reason = RejectReason::none;
    Qty filled_qty = 0;
    Qty remaining_qty = 0;
    SimTime time = 0;
};

struct MatchResult {
    std::vector<Fill> fills;           // chronological, taker fill then maker fill per match
    std::vector<StatusEvent> statuses;
    std::uint64_t warnings = 0;        // tolerated dataset noise (unknown ids)
};

// ===========================================================================
// Matching engine
// ===========================================================================

/// Price-time-priority matcher with a stop-trigger list held outside the
/// book (stops are invisible to depth queries). All state transitions are a
/// function of the arrival-ordered input stream.
class MatchingEngine {
public:
    /// Marketable quantity crosses best-price-first, FIFO within a level;
    /// fills print at the resting order's price. Unfilled limit remainder
    /// rests; unfilled market remainder is rejected. Stop orders triggered
    /// by resulting prints are re-submitted as market orders at the same
    /// SimTime, in (price toward trigger, arrival) order.
    MatchResult submit(const Order& order, SimTime arrival_time) {
        MatchResult out;
        submit_inner(order, arrival_time, out);
        drain_stop_activations(arrival_time, out);
        return out;
    }

    /// Removes a resting or pending-stop order. Unknown or already-filled
    /// ids report canceled=false and leave the book untouched.
    std::pair<bool, MatchResult> cancel(OrderId order_id, SimTime now) {
        MatchResult out;
        if (auto loc = locate_.find(order_id); loc != locate_.end()) {
            auto erase_from = [&](auto& levels) {
                auto level = levels.find(loc->second.price);
                auto& queue = level->second;
                for (auto it = queue.begin(); it != queue.end(); ++it) {
                    if (it->order_id != order_id) continue;
                    StatusEvent ev{order_id, it->agent_id, OrderStatus::canceled,
                                   RejectReason::none, 0, it->remaining_qty, now};
                    queue.erase(it);
                    if (queue.empty()) levels.erase(level);
                    locate_.erase(loc);
                    out.statuses.push_back(ev);
                    return true;
                }
                return false;
            };
            bool done = loc->second.side == Side::buy ? erase_from(bids_) : erase_from(asks_);
            if (done) return {true, out};
        }
        for (auto it = stops_.begin(); it != stops_.end(); ++it) {
            if (it->order.order_id != order_id) continue;
            out.statuses.push_back({order_id, it->order.agent_id, OrderStatus::canceled,
                                    RejectReason::none, 0, it->order.quantity, now});
            stops_.erase(it);
            return {true, out};
        }
        return {false, out};
    }

    /// Applies one exogenous replay event. Adds flow through the matcher (a
    /// crossing add fills like any limit order), cancels remove, executes
    /// print a trade against the referenced resting order. Unknown ids are
    /// tolerated and counted.
    MatchResult apply_event(const BookEvent& ev) {
        MatchResult out;
        switch (ev.kind) {
            case BookEventKind::add: {
                Order o;
                o.order_id = ev.order_id;
                o.side = ev.side;
                o.type = OrderType::limit;
                o.limit_price = ev.price;
                o.quantity = ev.quantity;
                o.submit_time = ev.event_time;
                submit_inner(o, ev.event_time, out);
                drain_stop_activations(ev.event_time, out);
                break;
            }
            case BookEventKind::cancel: {
                auto [ok, res] = cancel(ev.order_id, ev.event_time);
                out = std::move(res);
                if (!ok) ++out.warnings;
                break;
            }
            case BookEventKind::execute: {
                Qty done = reduce_resting(ev.order_id, ev.quantity);
                if (done == 0) ++out.warnings;
                Fill f;
                f.order_id = ev.order_id;
                f.counter_order_id = 0;
                f.price = ev.price;
                f.quantity = ev.quantity;
                f.exec_time = ev.event_time;
                f.liquidity = Liquidity::maker;
                out.fills.push_back(f);
                last_trade_ = ev.price;
                pending_prints_.push_back(ev.price);
                drain_stop_activations(ev.event_time, out);
                break;
            }
        }
        return out;
    }

    /// Pure replay of a time-sorted exogenous stream. Throws on unsorted
    /// input; returns the concatenated fills.
    MatchResult replay_events(const std::vector<BookEvent>& events) {
        MatchResult out;
        SimTime prev = std::numeric_limits<SimTime>::min();
        for (const auto& ev : events) {
            if (ev.event_time < prev) throw error("UNSORTED_INPUT: book events not time-sorted");
            prev = ev.event_time;
            auto r = apply_event(ev);
            out.fills.insert(out.fills.end(), r.fills.begin(), r.fills.end());
            out.statuses.insert(out.statuses.end(), r.statuses.begin(), r.statuses.end());
            out.warnings += r.warnings;
        }
        return out;
    }

    /// Depth ladder, best-first, quantities summed per level.
    Ladder top_bids(int depth) const { return ladder(bids_, depth); }
    Ladder top_asks(int depth) const { return ladder(asks_, depth); }

    std::optional<Price> best_bid() const {
        return bids_.empty() ? std::nullopt : std::make_optional(bids_.begin()->first);
    }
    std::optional<Price> best_ask() const {
        return asks_.empty() ? std::nullopt : std::make_optional(asks_.begin()->first);
    }
    std::optional<Price> last_trade_price() const { return last_trade_; }

    bool crossed() const {
        return best_bid() && best_ask() && *best_bid() >= *best_ask();
    }

    std::size_t resting_count() const { return locate_.size(); }
    std::size_t pending_stop_count() const { return stops_.size(); }

private:
    struct PendingStop {
        Order order;
        SimTime arrival_time = 0;
        std::uint64_t seq = 0;
    };

    using BidLevels = std::map<Price, std::deque<RestingOrder>, std::greater<Price>>;
    using AskLevels = std::map<Price, std::deque<RestingOrder>>;

    struct Location {
        Side side;
        Price price;
    };

    void submit_inner(const Order& order, SimTime arrival_time, MatchResult& out) {
        if (order.type == OrderType::stop) {
            stops_.push_back({order, arrival_time, next_seq_++});
            out.statuses.push_back({order.order_id, order.agent_id, OrderStatus::accepted,
                                    RejectReason::none, 0, order.quantity, arrival_time});
            return;
        }

        Qty remaining = order.quantity;
        Qty filled = 0;
        const bool is_buy = order.side == Side::buy;

        auto cross = [&](auto& levels) {
            while (remaining > 0 && !levels.empty()) {
                auto level = levels.begin();
                Price level_price = level->first;
                if (order.type == OrderType::limit) {
                    if (is_buy && level_price > *order.limit_price) break;
                    if (!is_buy && level_price < *order.limit_price) break;
                }
                auto& queue = level->second;
                RestingOrder& maker = queue.front();
                Qty traded = std::min(remaining, maker.remaining_qty);
                bool self = !order.agent_id.empty() && order.agent_id == maker.agent_id;

                Fill taker_fill{order.order_id, maker.order_id, level_price, traded,
                                arrival_time, Liquidity::taker, self};
                Fill maker_fill{maker.order_id, order.order_id, level_price, traded,
                                arrival_time, Liquidity::maker, self};
                out.fills.push_back(taker_fill);
                out.fills.push_back(maker_fill);

                remaining -= traded;
                filled += traded;
                maker.remaining_qty -= traded;
                last_trade_ = level_price;
                pending_prints_.push_back(level_price);
                if (maker.remaining_qty == 0) {
                    locate_.erase(maker.order_id);
                    queue.pop_front();
                    if (queue.empty()) levels.erase(level);
                }
            }
        };

        if (is_buy) cross(asks_);
        else cross(bids_);

        StatusEvent ev;
        ev.order_id = order.order_id;
        ev.agent_id = order.agent_id;
        ev.filled_qty = filled;
        ev.remaining_qty = remaining;
        ev.time = arrival_time;

        if (remaining == 0) {
            ev.status = OrderStatus::filled;
        } else if (order.type == OrderType::market) {
            // A resting market order has no price; the remainder is rejected.
            ev.status = filled > 0 ? OrderStatus::partial : OrderStatus::rejected;
            ev.reason = RejectReason::empty_book;
        } else {
            rest(order, remaining, arrival_time);
            ev.status = OrderStatus::accepted;
        }
        out.statuses.push_back(ev);
    }

    void rest(const Order& order, Qty remaining, SimTime arrival_time) {
        RestingOrder ro{order.order_id, order.agent_id, remaining, *order.limit_price,
                        arrival_time, next_seq_++};
        if (order.side == Side::buy) bids_[ro.price].push_back(ro);
        else asks_[ro.price].push_back(ro);
        locate_[order.order_id] = {order.side, ro.price};
    }

    Qty reduce_resting(OrderId id, Qty qty) {
        auto loc = locate_.find(id);
        if (loc == locate_.end()) return 0;
        auto& levels_any = loc->second.side;
        auto reduce = [&](auto& levels) -> Qty {
            auto level = levels.find(loc->second.price);
            auto& queue = level->second;
            for (auto it = queue.begin(); it != queue.end(); ++it) {
                if (it->order_id != id) continue;
                Qty done = std::min(qty, it->remaining_qty);
                it->remaining_qty -= done;
                if (it->remaining_qty == 0) {
                    queue.erase(it);
                    if (queue.empty()) levels.erase(level);
                    locate_.erase(loc);
                }
                return done;
            }
            return 0;
        };
        return levels_any == Side::buy ? reduce(bids_) : reduce(asks_);
    }

    // Stops fire on each print, highest sell stop / lowest buy stop first,
    // then by arrival; activations cascade until no print triggers anything.
    void drain_stop_activations(SimTime now, MatchResult& out) {
        while (!pending_prints_.empty()) {
            std::vector<Price> prints;
            prints.swap(pending_prints_);
            for (Price p : prints) {
                auto activated = collect_triggered(p);
                for (auto& stop : activated) {
                    Order market = stop.order;
                    market.type = OrderType::market;
                    market.stop_price.reset();
                    submit_inner(market, now, out);
                }
            }
        }
    }

    std::vector<PendingStop> collect_triggered(Price print) {
        std::vector<PendingStop> sells, buys;
        for (auto it = stops_.begin(); it != stops_.end();) {
            const Order& o = it->order;
            bool hit = (o.side == Side::sell && print <= *o.stop_price) ||
                       (o.side == Side::buy && print >= *o.stop_price);
            if (hit) {
                (o.side == Side::sell ? sells : buys).push_back(*it);
                it = stops_.erase(it);
            } else {
                ++it;
            }
        }
        auto by_arrival = [](const PendingStop& a, const PendingStop& b) {
            return a.arrival_time != b.arrival_time ? a.arrival_time < b.arrival_time
                                                    : a.seq < b.seq;
        };
        std::stable_sort(sells.begin(), sells.end(), [&](const auto& a, const auto& b) {
            if (*a.order.stop_price != *b.order.stop_price)
                return *a.order.stop_price > *b.order.stop_price;
            return by_arrival(a, b);
        });
        std::stable_sort(buys.begin(), buys.end(), [&](const auto& a, const auto& b) {
            if (*a.order.stop_price != *b.order.stop_price)
                return *a.order.stop_price < *b.order.stop_price;
            return by_arrival(a, b);
        });
        sells.insert(sells.end(), buys.begin(), buys.end());
        return sells;
    }

    template <typename Levels>
    Ladder ladder(const Levels& levels, int depth) const {
        Ladder out;
        for (const auto& [price, queue] : levels) {
            if (static_cast<int>(out.size()) == depth) break;
            Qty total = 0;
            for (const auto& ro : queue) total += ro.remaining_qty;
            out.emplace_back(price, total);
        }
        return out;
    }

    BidLevels bids_;
    AskLevels asks_;
    std::unordered_map<OrderId, Location> locate_;
    std::vector<PendingStop> stops_;
    std::vector<Price> pending_prints_;
    std::optional<Price> last_trade_;
    std::uint64_t next_seq_ = 0;
};

}  // namespace tradesim
