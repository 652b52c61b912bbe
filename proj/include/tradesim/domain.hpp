#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Shared vocabulary for the whole simulator: time, fixed-point prices,
// instruments, orders, fills and OHLCV bars.

namespace tradesim {

// ===========================================================================
// Errors
// ===========================================================================

class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

class config_error : public error {
public:
    explicit config_error(const std::string& what) : error(what) {}
};

class data_error : public error {
public:
    data_error(const std::string& what, long line = 0) : error(what), line_no(line) {}
    long line_no;
};

// ===========================================================================
// Time and numeric base types
// ===========================================================================

/// Milliseconds since Unix epoch (UTC). The engine never consults wall-clock
/// time; every decision is a function of SimTime.
using SimTime = std::int64_t;

/// Fixed-point currency amount: kPriceScale units per 1.0. Prices, cash and
/// P&L all use this representation so equality and replay are exact.
using Price = std::int64_t;
using Money = std::int64_t;

/// Integer lots.
using Qty = std::int64_t;

using OrderId = std::uint64_t;

constexpr std::int64_t kPriceScale = 1'000'000;

inline double price_to_double(Price p) {
    return static_cast<double>(p) / static_cast<double>(kPriceScale);
}

/// Parses a decimal literal ("100.25", "-3", ".5") into fixed-point units.
/// Accepts at most six fractional digits; anything longer is not
/// representable and raises data_error.
inline Price parse_price(const std::string& text, long line = 0) {
    if (text.empty()) throw data_error("empty price field", line);
    std::size_t i = 0;
    bool neg = false;
    if (text[i] == '+' || text[i] == '-') {
        neg = text[i] == '-';
        ++i;
    }
    std::int64_t whole = 0, frac = 0;
    int frac_digits = 0;
    bool any = false;
    for (; i < text.size() && text[i] != '.'; ++i) {
        if (text[i] < '0' || text[i] > '9')
            throw data_error("bad price literal: " + text, line);
        whole = whole * 10 + (text[i] - '0');
        any = true;
    }
    if (i < text.size() && text[i] == '.') {
        ++i;
        for (; i < text.size(); ++i) {
            if (text[i] < '0' || text[i] > '9')
                throw data_error("bad price literal: " + text, line);
            if (++frac_digits > 6)
                throw data_error("price has more than 6 decimals: " + text, line);
            frac = frac * 10 + (text[i] - '0');
            any = true;
        }
    }
    if (!any) throw data_error("bad price literal: " + text, line);
    for (int d = frac_digits; d < 6; ++d) frac *= 10;
    Price value = whole * kPriceScale + frac;
    return neg ? -value : value;
}

/// Formats a fixed-point amount as a minimal decimal literal ("100.25", "7").
/// Pure integer arithmetic, so output bytes are stable across runs.
inline std::string format_price(Price p) {
    std::string sign = p < 0 ? "-" : "";
    std::uint64_t a = p < 0 ? static_cast<std::uint64_t>(-(p + 1)) + 1 : static_cast<std::uint64_t>(p);
    std::uint64_t whole = a / kPriceScale;
    std::uint64_t frac = a % kPriceScale;
    std::string out = sign + std::to_string(whole);
    if (frac != 0) {
        std::string f = std::to_string(frac);
        f.insert(0, 6 - f.size(), '0');
        while (!f.empty() && f.back() == '0') f.pop_back();
        out += "." + f;
    }
    return out;
}

// ===========================================================================
// Instruments
// ===========================================================================

enum class AssetClass { equity, crypto };

struct Instrument {
    std::string symbol;     // non-empty uppercase token, e.g. "NVDA"
    AssetClass asset_class = AssetClass::equity;
    Price tick_size = 10'000;  // 0.01
    Qty lot_size = 1;

    bool aligned(Price p) const { return tick_size > 0 && p % tick_size == 0; }
};

// ===========================================================================
// Orders
// ===========================================================================

enum class Side { buy, sell };

inline Side opposite(Side s) { return s == Side::buy ? Side::sell : Side::buy; }

inline const char* to_string(Side s) { return s == Side::buy ? "buy" : "sell"; }

enum class OrderType { market, limit, stop };

inline const char* to_string(OrderType t) {
    switch (t) {
        case OrderType::market: return "market";
        case OrderType::limit: return "limit";
        default: return "stop";
    }
}

struct Order {
    OrderId order_id = 0;  // engine-assigned, unique within a run
    std::string agent_id;
    std::string symbol;
    Side side = Side::buy;
    OrderType type = OrderType::market;
    std::optional<Price> limit_price;
    std::optional<Price> stop_price;
    Qty quantity = 0;
    SimTime submit_time = 0;
    std::string explanation;
};

// ===========================================================================
// Order validation
// ===========================================================================

enum class RejectReason {
    none,
    price_on_market,
    missing_limit_price,
    stop_price_on_limit,
    missing_stop_price,
    limit_price_on_stop,
    non_positive_qty,
    lot_misaligned,
    non_positive_price,
    tick_misaligned,
    symbol_mismatch,
    insufficient_cash,
    no_position,
    empty_book,
    session_expired,
    unknown_order_id,
    provider_timeout,
    provider_malformed,
};

inline const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::none: return "NONE";
        case RejectReason::price_on_market: return "PRICE_ON_MARKET";
        case RejectReason::missing_limit_price: return "MISSING_LIMIT_PRICE";
        case RejectReason::stop_price_on_limit: return "STOP_PRICE_ON_LIMIT";
        case RejectReason::missing_stop_price: return "MISSING_STOP_PRICE";
        case RejectReason::limit_price_on_stop: return "LIMIT_PRICE_ON_STOP";
        case RejectReason::non_positive_qty: return "NON_POSITIVE_QTY";
        case RejectReason::lot_misaligned: return "LOT_MISALIGNED";
        case RejectReason::non_positive_price: return "NON_POSITIVE_PRICE";
        case RejectReason::tick_misaligned: return "TICK_MISALIGNED";
        case RejectReason::symbol_mismatch: return "SYMBOL_MISMATCH";
        case RejectReason::insufficient_cash: return "INSUFFICIENT_CASH";
        case RejectReason::no_position: return "NO_POSITION";
        case RejectReason::empty_book: return "EMPTY_BOOK";
        case RejectReason::session_expired: return "SESSION_EXPIRED";
        case RejectReason::unknown_order_id: return "UNKNOWN_ORDER_ID";
        case RejectReason::provider_timeout: return "PROVIDER_TIMEOUT";
        default: return "PROVIDER_MALFORMED";
    }
}

struct ValidationResult {
    bool ok = true;
    RejectReason reason = RejectReason::none;

    static ValidationResult accept() { return {}; }
    static ValidationResult reject(RejectReason r) { return {false, r}; }
};

/// Pure structural check; rejection is a value, not a fault.
inline ValidationResult validate_order(const Order& order, const Instrument& instrument) {
    if (!order.symbol.empty() && order.symbol != instrument.symbol)
        return ValidationResult::reject(RejectReason::symbol_mismatch);
    if (order.quantity <= 0)
        return ValidationResult::reject(RejectReason::non_positive_qty);
    if (instrument.lot_size > 0 && order.quantity % instrument.lot_size != 0)
        return ValidationResult::reject(RejectReason::lot_misaligned);

    switch (order.type) {
        case OrderType::market:
            if (order.limit_price || order.stop_price)
                return ValidationResult::reject(RejectReason::price_on_market);
            break;
        case OrderType::limit:
            if (!order.limit_price)
                return ValidationResult::reject(RejectReason::missing_limit_price);
            if (order.stop_price)
                return ValidationResult::reject(RejectReason::stop_price_on_limit);
            break;
        case OrderType::stop:
            if (!order.stop_price)
                return ValidationResult::reject(RejectReason::missing_stop_price);
            if (order.limit_price)
                return ValidationResult::reject(RejectReason::limit_price_on_stop);
            break;
    }
    for (const auto& px : {order.limit_price, order.stop_price}) {
        if (!px) continue;
        if (*px <= 0) return ValidationResult::reject(RejectReason::non_positive_price);
        if (!instrument.aligned(*px)) return ValidationResult::reject(RejectReason::tick_misaligned);
    }
    return ValidationResult::accept();
}

// ===========================================================================
// Fills
// ===========================================================================

enum class Liquidity { maker, taker };

inline const char* to_string(Liquidity l) { return l == Liquidity::maker ? "maker" : "taker"; }

/// counter_order_id == 0 marks fills against anonymous book liquidity
/// (exogenous flow or candle-path execution).
struct Fill {
    OrderId order_id = 0;
    OrderId counter_order_id = 0;
    Price price = 0;
    Qty quantity = 0;
    SimTime exec_time = 0;
    Liquidity liquidity = Liquidity::taker;
    bool self_trade = false;
};

// ===========================================================================
// Candles
// ===========================================================================

struct Candle {
    std::string symbol;
    Price open = 0;
    Price high = 0;
    Price low = 0;
    Price close = 0;
    Qty volume = 0;
    SimTime bar_start = 0;
    std::int64_t timeframe_ms = 0;

    SimTime bar_end() const { return bar_start + timeframe_ms; }

    bool valid() const {
        return low <= std::min(open, close) && high >= std::max(open, close) &&
               low <= high && volume >= 0 && timeframe_ms > 0;
    }
};

/// Folds time-sorted fills within [bar_start, bar_start+timeframe) into one
/// bar. Empty input yields no bar. Throws on non-monotone timestamps.
inline std::optional<Candle> aggregate_fills_to_candle(const std::vector<Fill>& fills,
                                                       SimTime bar_start,
                                                       std::int64_t timeframe_ms,
                                                       const std::string& symbol = {}) {
    if (fills.empty()) return std::nullopt;
    Candle c;
    c.symbol = symbol;
    c.bar_start = bar_start;
    c.timeframe_ms = timeframe_ms;
    c.open = fills.front().price;
    c.high = fills.front().price;
    c.low = fills.front().price;
    SimTime prev = fills.front().exec_time;
    for (const auto& f : fills) {
        if (f.exec_time < prev) throw error("UNSORTED_INPUT: fill timestamps not monotone");
        prev = f.exec_time;
        c.high = std::max(c.high, f.price);
        c.low = std::min(c.low, f.price);
        c.close = f.price;
        c.volume += f.quantity;
    }
    return c;
}

}  // namespace tradesim
