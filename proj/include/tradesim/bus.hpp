#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tradesim/agents.hpp"
#include "tradesim/data.hpp"
#include "tradesim/domain.hpp"
#include "tradesim/indicators.hpp"
#include "tradesim/matching.hpp"

// The asynchronous message contract between engine and agents: envelopes,
// topic routing, consumer-side dedupe, and the canonical JSON codec shared
// by the in-process and TCP transports.

namespace tradesim {

// ===========================================================================
// Envelope
// ===========================================================================

/// (sender, seq) is unique and gapless per sender per connection; payloads
/// are tagged JSON objects ("type" field). Canonical serialization uses
/// sorted keys, so identical envelopes are identical bytes.
struct Envelope {
    std::string topic;
    std::string sender;
    std::uint64_t seq = 0;
    SimTime sim_time = 0;
    nlohmann::json payload;
};

inline nlohmann::json envelope_to_json(const Envelope& e) {
    nlohmann::json j;
    j["topic"] = e.topic;
    j["sender"] = e.sender;
    j["seq"] = e.seq;
    j["sim_time"] = e.sim_time;
    j["payload"] = e.payload;
    return j;
}

inline Envelope envelope_from_json(const nlohmann::json& j) {
    Envelope e;
    e.topic = j.at("topic").get<std::string>();
    e.sender = j.at("sender").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    e.sim_time = j.at("sim_time").get<SimTime>();
    e.payload = j.at("payload");
    return e;
}

/// Exact match, or a trailing '*' wildcard ("market.*", "*").
inline bool topic_matches(const std::string& pattern, const std::string& topic) {
    if (pattern == topic) return true;
    if (!pattern.empty() && pattern.back() == '*')
        return topic.rfind(pattern.substr(0, pattern.size() - 1), 0) == 0;
    return false;
}

// Well-known topics.
inline std::string topic_market(const std::string& symbol) { return "market." + symbol; }
inline std::string topic_exec(const std::string& agent) { return "exec." + agent; }
inline std::string topic_external(const std::string& symbol) { return "external." + symbol; }
inline std::string topic_data(const std::string& agent) { return "data." + agent; }
constexpr const char* kTopicControl = "control";
constexpr const char* kTopicEngine = "engine";

// ===========================================================================
// Payload codec
// ===========================================================================

namespace codec {

inline nlohmann::json price_opt(const std::optional<Price>& p) {
    return p ? nlohmann::json(format_price(*p)) : nlohmann::json(nullptr);
}

inline std::optional<Price> price_opt_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return parse_price(j.get<std::string>());
}

inline nlohmann::json order_to_json(const Order& o) {
    nlohmann::json j;
    j["order_id"] = o.order_id;
    j["agent_id"] = o.agent_id;
    j["symbol"] = o.symbol;
    j["side"] = to_string(o.side);
    j["type"] = to_string(o.type);
    j["limit_price"] = price_opt(o.limit_price);
    j["stop_price"] = price_opt(o.stop_price);
    j["quantity"] = o.quantity;
    j["submit_time"] = o.submit_time;
    j["explanation"] = o.explanation;
    return j;
}

inline Order order_from_json(const nlohmann::json& j) {
    Order o;
    o.order_id = j.at("order_id").get<OrderId>();
    o.agent_id = j.at("agent_id").get<std::string>();
    o.symbol = j.at("symbol").get<std::string>();
    o.side = j.at("side").get<std::string>() == "buy" ? Side::buy : Side::sell;
    std::string type = j.at("type").get<std::string>();
    o.type = type == "market" ? OrderType::market
                              : (type == "limit" ? OrderType::limit : OrderType::stop);
    o.limit_price = price_opt_from(j.at("limit_price"));
    o.stop_price = price_opt_from(j.at("stop_price"));
    o.quantity = j.at("quantity").get<Qty>();
    o.submit_time = j.at("submit_time").get<SimTime>();
    o.explanation = j.at("explanation").get<std::string>();
    return o;
}

inline nlohmann::json fill_to_json(const Fill& f) {
    nlohmann::json j;
    j["order_id"] = f.order_id;
    j["counter_order_id"] = f.counter_order_id;
    j["price"] = format_price(f.price);
    j["quantity"] = f.quantity;
    j["exec_time"] = f.exec_time;
    j["liquidity"] = to_string(f.liquidity);
    j["self_trade"] = f.self_trade;
    return j;
}

inline Fill fill_from_json(const nlohmann::json& j) {
    Fill f;
    f.order_id = j.at("order_id").get<OrderId>();
    f.counter_order_id = j.at("counter_order_id").get<OrderId>();
    f.price = parse_price(j.at("price").get<std::string>());
    f.quantity = j.at("quantity").get<Qty>();
    f.exec_time = j.at("exec_time").get<SimTime>();
    f.liquidity = j.at("liquidity").get<std::string>() == "maker" ? Liquidity::maker
                                                                  : Liquidity::taker;
    f.self_trade = j.at("self_trade").get<bool>();
    return f;
}

inline nlohmann::json candle_to_json(const Candle& c) {
    nlohmann::json j;
    j["symbol"] = c.symbol;
    j["open"] = format_price(c.open);
    j["high"] = format_price(c.high);
    j["low"] = format_price(c.low);
    j["close"] = format_price(c.close);
    j["volume"] = c.volume;
    j["bar_start"] = c.bar_start;
    j["timeframe_ms"] = c.timeframe_ms;
    return j;
}

inline Candle candle_from_json(const nlohmann::json& j) {
    Candle c;
    c.symbol = j.at("symbol").get<std::string>();
    c.open = parse_price(j.at("open").get<std::string>());
    c.high = parse_price(j.at("high").get<std::string>());
    c.low = parse_price(j.at("low").get<std::string>());
    c.close = parse_price(j.at("close").get<std::string>());
    c.volume = j.at("volume").get<Qty>();
    c.bar_start = j.at("bar_start").get<SimTime>();
    c.timeframe_ms = j.at("timeframe_ms").get<std::int64_t>();
    return c;
}

inline nlohmann::json ladder_to_json(const Ladder& l) {
    auto arr = nlohmann::json::array();
    for (const auto& [price, qty] : l) arr.push_back({format_price(price), qty});
    return arr;
}

inline Ladder ladder_from_json(const nlohmann::json& j) {
    Ladder l;
    for (const auto& lvl : j)
        l.emplace_back(parse_price(lvl.at(0).get<std::string>()), lvl.at(1).get<Qty>());
    return l;
}

inline nlohmann::json opt_num(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json frame_to_json(const IndicatorFrame& f) {
    nlohmann::json j;
    j["bar_start"] = f.bar_start;
    j["sma"] = opt_num(f.sma);
    j["ema"] = opt_num(f.ema);
    j["rsi"] = opt_num(f.rsi);
    j["macd_line"] = opt_num(f.macd_line);
    j["macd_signal"] = opt_num(f.macd_signal);
    j["macd_hist"] = opt_num(f.macd_hist);
    j["tr"] = opt_num(f.tr);
    j["atr"] = opt_num(f.atr);
    j["bb_mid"] = opt_num(f.bb_mid);
    j["bb_upper"] = opt_num(f.bb_upper);
    j["bb_lower"] = opt_num(f.bb_lower);
    j["vwap"] = opt_num(f.vwap);
    j["imbalance"] = opt_num(f.imbalance);
    auto sup = nlohmann::json::array(), res = nlohmann::json::array();
    for (Price p : f.support_levels) sup.push_back(format_price(p));
    for (Price p : f.resistance_levels) res.push_back(format_price(p));
    j["support_levels"] = sup;
    j["resistance_levels"] = res;
    auto extras = nlohmann::json::object();
    for (const auto& [k, v] : f.extras) extras[k] = opt_num(v);
    j["extras"] = extras;
    return j;
}

inline std::optional<double> num_opt_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

inline IndicatorFrame frame_from_json(const nlohmann::json& j) {
    IndicatorFrame f;
    f.bar_start = j.at("bar_start").get<SimTime>();
    f.sma = num_opt_from(j.at("sma"));
    f.ema = num_opt_from(j.at("ema"));
    f.rsi = num_opt_from(j.at("rsi"));
    f.macd_line = num_opt_from(j.at("macd_line"));
    f.macd_signal = num_opt_from(j.at("macd_signal"));
    f.macd_hist = num_opt_from(j.at("macd_hist"));
    f.tr = num_opt_from(j.at("tr"));
    f.atr = num_opt_from(j.at("atr"));
    f.bb_mid = num_opt_from(j.at("bb_mid"));
    f.bb_upper = num_opt_from(j.at("bb_upper"));
    f.bb_lower = num_opt_from(j.at("bb_lower"));
    f.vwap = num_opt_from(j.at("vwap"));
    f.imbalance = num_opt_from(j.at("imbalance"));
    for (const auto& p : j.at("support_levels"))
        f.support_levels.push_back(parse_price(p.get<std::string>()));
    for (const auto& p : j.at("resistance_levels"))
        f.resistance_levels.push_back(parse_price(p.get<std::string>()));
    for (const auto& [k, v] : j.at("extras").items()) f.extras[k] = num_opt_from(v);
    return f;
}

inline nlohmann::json news_to_json(const CanonicalNewsItem& n) {
    nlohmann::json j;
    j["published_at"] = n.published_at;
    j["symbols"] = n.symbols;
    j["headline"] = n.headline;
    j["summary"] = n.summary;
    j["source"] = n.source;
    j["url"] = n.url ? nlohmann::json(*n.url) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json fundamentals_to_json(const CanonicalFundamentals& f) {
    nlohmann::json j;
    j["as_of"] = f.as_of;
    j["symbol"] = f.symbol;
    j["ratios"] = f.ratios;
    auto events = nlohmann::json::array();
    for (const auto& e : f.events) {
        events.push_back({{"kind", e.kind == CorporateEvent::Kind::split ? "split" : "dividend"},
                          {"at", e.at},
                          {"value", e.value}});
    }
    j["events"] = events;
    auto extras = nlohmann::json::object();
    for (const auto& [k, v] : f.extras) extras[k] = v;
    j["extras"] = extras;
    return j;
}

}  // namespace codec

// ===========================================================================
// Message builders
// ===========================================================================

namespace msg {

inline nlohmann::json order_submit(const Order& o) {
    return {{"type", "order_submit"}, {"order", codec::order_to_json(o)}};
}

inline nlohmann::json order_cancel(OrderId id) {
    return {{"type", "order_cancel"}, {"order_id", id}};
}

inline nlohmann::json execution_report(const StatusEvent& ev, const std::vector<Fill>& fills) {
    auto arr = nlohmann::json::array();
    for (const auto& f : fills) arr.push_back(codec::fill_to_json(f));
    return {{"type", "execution_report"}, {"order_id", ev.order_id},
            {"status", to_string(ev.status)}, {"reason", to_string(ev.reason)},
            {"filled_qty", ev.filled_qty},   {"remaining_qty", ev.remaining_qty},
            {"fills", arr}};
}

inline nlohmann::json portfolio_update(const PortfolioState& p, Price mark) {
    return {{"type", "portfolio_update"},
            {"cash", format_price(p.cash)},
            {"long_qty", p.long_qty},
            {"short_qty", p.short_qty},
            {"realized_pnl", format_price(p.realized_pnl)},
            {"unrealized_pnl", format_price(p.unrealized_pnl(mark))}};
}

inline nlohmann::json time_tick(std::uint64_t tick_seq, SimTime t, bool market_open,
                                const std::optional<Price>& ref_price) {
    return {{"type", "time_tick"},
            {"tick_seq", tick_seq},
            {"sim_time", t},
            {"market_open", market_open},
            {"ref_price", codec::price_opt(ref_price)}};
}

inline nlohmann::json session_end() { return {{"type", "session_end"}}; }

inline nlohmann::json tick_ack(std::uint64_t tick_seq) {
    return {{"type", "tick_ack"}, {"tick_seq", tick_seq}};
}

inline nlohmann::json data_request(std::uint64_t request_id, const std::string& kind,
                                   const std::string& symbol, SimTime from, SimTime to) {
    return {{"type", "data_request"}, {"request_id", request_id}, {"kind", kind},
            {"symbol", symbol},       {"from", from},             {"to", to}};
}

}  // namespace msg

// ===========================================================================
// Consumer-side dedupe
// ===========================================================================

/// At-least-once delivery plus this filter yields exactly-once effects:
/// anything at or below the last seen (sender, seq) is dropped.
class DedupeFilter {
public:
    bool accept(const std::string& sender, std::uint64_t seq) {
        auto [it, inserted] = last_.try_emplace(sender, seq);
        if (inserted) return true;
        if (seq <= it->second) return false;
        it->second = seq;
        return true;
    }

private:
    std::map<std::string, std::uint64_t> last_;
};

// ===========================================================================
// In-process broker
// ===========================================================================

/// Thread-safe topic fan-out with per-sender FIFO (a single lock orders all
/// publishes). Late subscribers receive messages from the subscription
/// point onward; there is no replay.
class Broker {
public:
    class Subscription {
    public:
        std::optional<Envelope> poll() {
            std::lock_guard lk(m_);
            if (q_.empty()) return std::nullopt;
            Envelope e = std::move(q_.front());
            q_.pop_front();
            return e;
        }

        std::optional<Envelope> wait(int timeout_ms) {
            std::unique_lock lk(m_);
            if (!cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                              [&] { return !q_.empty(); }))
                return std::nullopt;
            Envelope e = std::move(q_.front());
            q_.pop_front();
            return e;
        }

        std::size_t pending() const {
            std::lock_guard lk(m_);
            return q_.size();
        }

    private:
        friend class Broker;
        void push(const Envelope& e) {
            {
                std::lock_guard lk(m_);
                q_.push_back(e);
            }
            cv_.notify_one();
        }
        mutable std::mutex m_;
        std::condition_variable cv_;
        std::deque<Envelope> q_;
    };

    std::shared_ptr<Subscription> subscribe(const std::vector<std::string>& patterns) {
        auto sub = std::make_shared<Subscription>();
        std::lock_guard lk(m_);
        subs_.push_back({patterns, sub});
        return sub;
    }

    void publish(const Envelope& e) {
        std::lock_guard lk(m_);
        if (tap_) tap_(e);
        for (auto& [patterns, sub] : subs_) {
            for (const auto& p : patterns) {
                if (topic_matches(p, e.topic)) {
                    sub->push(e);
                    break;
                }
            }
        }
    }

    /// Observation hook for transcript audits; runs under the publish lock.
    void set_tap(std::function<void(const Envelope&)> tap) {
        std::lock_guard lk(m_);
        tap_ = std::move(tap);
    }

private:
    std::mutex m_;
    std::vector<std::pair<std::vector<std::string>, std::shared_ptr<Subscription>>> subs_;
    std::function<void(const Envelope&)> tap_;
};

// ===========================================================================
// Data request service
// ===========================================================================

struct DataQuery {
    std::string kind;  // news | fundamentals | events
    std::string symbol;
    SimTime from = 0;
    SimTime to = 0;
};

/// Unified query interface over loaded external data. Windows reaching past
/// the engine clock are refused: agents can never read the future.
inline nlohmann::json answer_data_request(const ExternalDataStore& store, const DataQuery& q,
                                          SimTime now) {
    nlohmann::json reply;
    reply["type"] = "external_data";
    reply["kind"] = q.kind;
    reply["symbol"] = q.symbol;
    if (q.to > now) {
        reply["error"] = "FUTURE_WINDOW";
        reply["items"] = nlohmann::json::array();
        return reply;
    }
    auto items = nlohmann::json::array();
    if (q.kind == "news") {
        for (const auto& n : store.news_in(q.symbol, q.from, q.to))
            items.push_back(codec::news_to_json(n));
    } else if (q.kind == "fundamentals") {
        for (const auto& f : store.fundamentals_in(q.symbol, q.from, q.to))
            items.push_back(codec::fundamentals_to_json(f));
    } else if (q.kind == "events") {
        for (const auto& e : store.events_in(q.symbol, q.from, q.to)) {
            items.push_back({{"kind", e.kind == CorporateEvent::Kind::split ? "split" : "dividend"},
                             {"at", e.at},
                             {"value", e.value}});
        }
    } else {
        reply["error"] = "UNKNOWN_KIND";
    }
    reply["items"] = items;
    return reply;
}

}  // namespace tradesim
