#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tradesim/domain.hpp"
#include "tradesim/matching.hpp"

// Offline ingestion: provider file formats mapped onto the canonical types
// the engine consumes. Adapters are pure file -> records functions; all
// timestamps are epoch milliseconds UTC.

namespace tradesim {

// ===========================================================================
// Canonical external-data types
// ===========================================================================

struct CanonicalNewsItem {
    SimTime published_at = 0;
    std::vector<std::string> symbols;
    std::string headline;
    std::string summary;
    std::string source;
    std::optional<std::string> url;
};

struct CorporateEvent {
    enum class Kind { split, dividend };
    Kind kind = Kind::dividend;
    SimTime at = 0;
    double value = 0.0;  // split ratio or dividend per share
};

struct CanonicalFundamentals {
    SimTime as_of = 0;
    std::string symbol;
    std::map<std::string, double> ratios;
    std::vector<CorporateEvent> events;
    std::map<std::string, nlohmann::json> extras;  // unknown fields kept opaque
};

// ===========================================================================
// CSV helpers
// ===========================================================================

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline std::int64_t parse_int(const std::string& s, long line) {
    try {
        std::size_t used = 0;
        std::int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw data_error("PARSE_ERROR: bad integer '" + s + "'", line);
    }
}

inline double parse_double(const std::string& s, long line) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw data_error("PARSE_ERROR: bad number '" + s + "'", line);
    }
}

inline std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path);
    return in;
}

}  // namespace detail

// ===========================================================================
// OHLCV bars
// ===========================================================================

struct OhlcvLoad {
    std::vector<Candle> candles;       // validated long sorted by bar_start
    std::uint64_t out_of_order = 0;    // rows that arrived unsorted
    std::vector<std::size_t> gaps;     // indices where bar_start skips ahead
};

/// Header `timestamp_ms,open,high,low,close,volume`. Rows violating candle
/// invariants raise data_error with the offending line; unsorted rows are
/// sorted with a warning count; gap positions are reported, not filled.
inline OhlcvLoad load_ohlcv_csv(const std::string& path, std::int64_t timeframe_ms,
                                const std::string& symbol) {
    auto in = detail::open_or_throw(path);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw data_error("empty file: " + path, 0);
    ++line_no;
    if (line.rfind("timestamp_ms,open,high,low,close,volume", 0) != 0)
        throw data_error("PARSE_ERROR: bad OHLCV header in " + path, line_no);

    OhlcvLoad out;
    SimTime prev = std::numeric_limits<SimTime>::min();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != 6) throw data_error("PARSE_ERROR: expected 6 fields", line_no);
        Candle c;
        c.symbol = symbol;
        c.bar_start = detail::parse_int(f[0], line_no);
        c.open = parse_price(f[1], line_no);
        c.high = parse_price(f[2], line_no);
        c.low = parse_price(f[3], line_no);
        c.close = parse_price(f[4], line_no);
        c.volume = static_cast<Qty>(std::llround(detail::parse_double(f[5], line_no)));
        c.timeframe_ms = timeframe_ms;
        if (!c.valid())
            throw data_error("INVALID_BAR: candle invariants violated", line_no);
        if (c.bar_start < prev) ++out.out_of_order;
        prev = c.bar_start;
        out.candles.push_back(std::move(c));
    }
    std::stable_sort(out.candles.begin(), out.candles.end(),
                     [](const Candle& a, const Candle& b) { return a.bar_start < b.bar_start; });
    for (std::size_t i = 1; i < out.candles.size(); ++i) {
        if (out.candles[i].bar_start > out.candles[i - 1].bar_start + timeframe_ms)
            out.gaps.push_back(i);
    }
    return out;
}

/// Inverse of load_ohlcv_csv; loading the output reproduces the records.
inline void write_ohlcv_csv(const std::string& path, const std::vector<Candle>& candles) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write file: " + path);
    out << "timestamp_ms,open,high,low,close,volume\n";
    for (const auto& c : candles) {
        out << c.bar_start << ',' << format_price(c.open) << ',' << format_price(c.high) << ','
            << format_price(c.low) << ',' << format_price(c.close) << ',' << c.volume << "\n";
    }
    if (!out) throw data_error("write failed: " + path);
}

// ===========================================================================
// Order-book event files
// ===========================================================================

enum class EventDialect { native, lobster };

struct EventLoad {
    std::vector<BookEvent> events;
    std::uint64_t skipped = 0;  // unmapped event type codes
};

/// Native dialect: header `time_ms,kind,order_id,side,price,qty` with kind
/// in {add,cancel,execute}. LOBSTER dialect: the six-column message format
/// (time, type, id, size, price, direction); submissions map to add,
/// cancellations/deletions to cancel, visible executions to execute, other
/// type codes are skipped and counted. LOBSTER prices come scaled by 1e4.
inline EventLoad load_order_events(const std::string& path, EventDialect dialect) {
    auto in = detail::open_or_throw(path);
    EventLoad out;
    std::string line;
    long line_no = 0;

    if (dialect == EventDialect::native) {
        if (!std::getline(in, line)) throw data_error("empty file: " + path, 0);
        ++line_no;
        if (line.rfind("time_ms,kind,order_id,side,price,qty", 0) != 0)
            throw data_error("PARSE_ERROR: bad event header in " + path, line_no);
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto f = detail::split_csv(line);
            if (f.size() != 6) throw data_error("PARSE_ERROR: expected 6 fields", line_no);
            BookEvent ev;
            ev.event_time = detail::parse_int(f[0], line_no);
            if (f[1] == "add") ev.kind = BookEventKind::add;
            else if (f[1] == "cancel") ev.kind = BookEventKind::cancel;
            else if (f[1] == "execute") ev.kind = BookEventKind::execute;
            else throw data_error("PARSE_ERROR: unknown kind '" + f[1] + "'", line_no);
            ev.order_id = static_cast<OrderId>(detail::parse_int(f[2], line_no));
            if (f[3] == "buy") ev.side = Side::buy;
            else if (f[3] == "sell") ev.side = Side::sell;
            else throw data_error("PARSE_ERROR: unknown side '" + f[3] + "'", line_no);
            ev.price = parse_price(f[4], line_no);
            ev.quantity = detail::parse_int(f[5], line_no);
            out.events.push_back(ev);
        }
        return out;
    }

    // LOBSTER message file: no header
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() < 6) throw data_error("PARSE_ERROR: expected 6 fields", line_no);
        double seconds = detail::parse_double(f[0], line_no);
        std::int64_t type = detail::parse_int(f[1], line_no);
        BookEvent ev;
        ev.event_time = static_cast<SimTime>(std::llround(seconds * 1000.0));
        ev.order_id = static_cast<OrderId>(detail::parse_int(f[2], line_no));
        ev.quantity = detail::parse_int(f[3], line_no);
        // LOBSTER prices are integers scaled by 10^4
        ev.price = detail::parse_int(f[4], line_no) * (kPriceScale / 10'000);
        std::int64_t direction = detail::parse_int(f[5], line_no);
        ev.side = direction > 0 ? Side::buy : Side::sell;
        switch (type) {
            case 1: ev.kind = BookEventKind::add; break;
            case 2:
            case 3: ev.kind = BookEventKind::cancel; break;
            case 4: ev.kind = BookEventKind::execute; break;
            default:
                ++out.skipped;
                continue;
        }
        out.events.push_back(ev);
    }
    return out;
}

// ===========================================================================
// News and fundamentals (JSON lines)
// ===========================================================================

inline std::vector<CanonicalNewsItem> load_news_jsonl(const std::string& path) {
    auto in = detail::open_or_throw(path);
    std::vector<CanonicalNewsItem> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw data_error("PARSE_ERROR: bad JSON object", line_no);
        if (!j.contains("published_at") || !j["published_at"].is_number_integer())
            throw data_error("PARSE_ERROR: missing published_at", line_no);
        CanonicalNewsItem item;
        item.published_at = j["published_at"].get<SimTime>();
        if (j.contains("symbols"))
            for (const auto& s : j["symbols"]) item.symbols.push_back(s.get<std::string>());
        else if (j.contains("symbol"))
            item.symbols.push_back(j["symbol"].get<std::string>());
        item.headline = j.value("headline", "");
        item.summary = j.value("summary", "");
        item.source = j.value("source", "");
        if (j.contains("url") && j["url"].is_string()) item.url = j["url"].get<std::string>();
        out.push_back(std::move(item));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.published_at < b.published_at;
    });
    return out;
}

inline std::vector<CanonicalFundamentals> load_fundamentals_jsonl(const std::string& path) {
    auto in = detail::open_or_throw(path);
    std::vector<CanonicalFundamentals> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw data_error("PARSE_ERROR: bad JSON object", line_no);
        if (!j.contains("as_of") || !j["as_of"].is_number_integer())
            throw data_error("PARSE_ERROR: missing as_of", line_no);
        CanonicalFundamentals f;
        f.as_of = j["as_of"].get<SimTime>();
        f.symbol = j.value("symbol", "");
        if (j.contains("ratios") && j["ratios"].is_object())
            for (auto& [k, v] : j["ratios"].items()) f.ratios[k] = v.get<double>();
        if (j.contains("events") && j["events"].is_array()) {
            for (const auto& e : j["events"]) {
                CorporateEvent ev;
                std::string kind = e.value("kind", "");
                if (kind == "split") ev.kind = CorporateEvent::Kind::split;
                else if (kind == "dividend") ev.kind = CorporateEvent::Kind::dividend;
                else throw data_error("PARSE_ERROR: unknown corporate event kind", line_no);
                ev.at = e.value("at", f.as_of);
                ev.value = e.value("value", 0.0);
                f.events.push_back(ev);
            }
        }
        for (auto& [k, v] : j.items()) {
            if (k == "as_of" || k == "symbol" || k == "ratios" || k == "events") continue;
            f.extras[k] = v;
        }
        out.push_back(std::move(f));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.as_of < b.as_of; });
    return out;
}

// ===========================================================================
// External data store
// ===========================================================================

/// Immutable post-load store behind the engine's query interface. Window
/// bounds are inclusive; the no-lookahead guard lives with the engine clock,
/// not here.
class ExternalDataStore {
public:
    void add_news(std::vector<CanonicalNewsItem> items) {
        news_.insert(news_.end(), items.begin(), items.end());
        std::stable_sort(news_.begin(), news_.end(), [](const auto& a, const auto& b) {
            return a.published_at < b.published_at;
        });
    }
    void add_fundamentals(std::vector<CanonicalFundamentals> items) {
        fundamentals_.insert(fundamentals_.end(), items.begin(), items.end());
        std::stable_sort(fundamentals_.begin(), fundamentals_.end(),
                         [](const auto& a, const auto& b) { return a.as_of < b.as_of; });
    }

    std::vector<CanonicalNewsItem> news_in(const std::string& symbol, SimTime from,
                                           SimTime to) const {
        std::vector<CanonicalNewsItem> out;
        for (const auto& n : news_) {
            if (n.published_at < from || n.published_at > to) continue;
            if (!symbol.empty() &&
                std::find(n.symbols.begin(), n.symbols.end(), symbol) == n.symbols.end())
                continue;
            out.push_back(n);
        }
        return out;
    }

    std::vector<CanonicalFundamentals> fundamentals_in(const std::string& symbol, SimTime from,
                                                       SimTime to) const {
        std::vector<CanonicalFundamentals> out;
        for (const auto& f : fundamentals_) {
            if (f.as_of < from || f.as_of > to) continue;
            if (!symbol.empty() && f.symbol != symbol) continue;
            out.push_back(f);
        }
        return out;
    }

    /// Corporate events only, flattened from the fundamentals records.
    std::vector<CorporateEvent> events_in(const std::string& symbol, SimTime from,
                                          SimTime to) const {
        std::vector<CorporateEvent> out;
        for (const auto& f : fundamentals_) {
            if (!symbol.empty() && f.symbol != symbol) continue;
            for (const auto& e : f.events)
                if (e.at >= from && e.at <= to) out.push_back(e);
        }
        return out;
    }

private:
    std::vector<CanonicalNewsItem> news_;
    std::vector<CanonicalFundamentals> fundamentals_;
};

// ===========================================================================
// Adapter registry
// ===========================================================================

/// A provider adapter: one registered unit mapping an input format onto the
/// canonical schema. Exactly one loader matching `kind` is set.
struct AdapterDescriptor {
    std::string provider;
    enum class Kind { ohlcv, order_events, news, fundamentals } kind = Kind::ohlcv;
    std::function<OhlcvLoad(const std::string&, std::int64_t, const std::string&)> load_ohlcv;
    std::function<EventLoad(const std::string&)> load_events;
    std::function<std::vector<CanonicalNewsItem>(const std::string&)> load_news;
    std::function<std::vector<CanonicalFundamentals>(const std::string&)> load_fundamentals;
};

class AdapterRegistry {
public:
    void register_adapter(AdapterDescriptor desc) {
        if (adapters_.count(desc.provider))
            throw config_error("DUPLICATE_PROVIDER: " + desc.provider);
        adapters_[desc.provider] = std::move(desc);
    }

    bool contains(const std::string& provider) const { return adapters_.count(provider) > 0; }

    const AdapterDescriptor& get(const std::string& provider) const {
        auto it = adapters_.find(provider);
        if (it == adapters_.end()) throw config_error("unknown data provider: " + provider);
        return it->second;
    }

    static AdapterRegistry with_builtins() {
        AdapterRegistry reg;
        AdapterDescriptor ohlcv;
        ohlcv.provider = "ohlcv_csv";
        ohlcv.kind = AdapterDescriptor::Kind::ohlcv;
        ohlcv.load_ohlcv = load_ohlcv_csv;
        reg.register_adapter(std::move(ohlcv));

        AdapterDescriptor native;
        native.provider = "order_events_native";
        native.kind = AdapterDescriptor::Kind::order_events;
        native.load_events = [](const std::string& p) {
            return load_order_events(p, EventDialect::native);
        };
        reg.register_adapter(std::move(native));

        AdapterDescriptor lobster;
        lobster.provider = "order_events_lobster";
        lobster.kind = AdapterDescriptor::Kind::order_events;
        lobster.load_events = [](const std::string& p) {
            return load_order_events(p, EventDialect::lobster);
        };
        reg.register_adapter(std::move(lobster));

        AdapterDescriptor news;
        news.provider = "news_jsonl";
        news.kind = AdapterDescriptor::Kind::news;
        news.load_news = load_news_jsonl;
        reg.register_adapter(std::move(news));

        AdapterDescriptor fund;
        fund.provider = "fundamentals_jsonl";
        fund.kind = AdapterDescriptor::Kind::fundamentals;
        fund.load_fundamentals = load_fundamentals_jsonl;
        reg.register_adapter(std::move(fund));
        return reg;
    }

private:
    std::map<std::string, AdapterDescriptor> adapters_;
};

}  // namespace tradesim
