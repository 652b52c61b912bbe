#pragma once

#include <cerrno>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "tradesim/domain.hpp"
#include "tradesim/indicators.hpp"
#include "tradesim/matching.hpp"

// Agent runtime pieces: portfolio accounting with exact integer P&L,
// broker-style constraint enforcement, built-in deterministic strategies and
// the external-decision-provider hook.

namespace tradesim {

// ===========================================================================
// Portfolio accounting
// ===========================================================================

/// Netted single-instrument position. Cost bases are kept as integer totals
/// so the accounting identity cash + mark-to-market - initial = realized +
/// unrealized holds exactly, with no float drift.
struct PortfolioState {
    Money cash = 0;
    Qty long_qty = 0;
    Qty short_qty = 0;
    Money long_cost = 0;        // entry cost of the open long position
    Money short_proceeds = 0;   // entry proceeds of the open short position
    Money realized_pnl = 0;

    double avg_entry_long() const {
        return long_qty == 0 ? 0.0 : price_to_double(long_cost) / static_cast<double>(long_qty);
    }
    double avg_entry_short() const {
        return short_qty == 0 ? 0.0
                              : price_to_double(short_proceeds) / static_cast<double>(short_qty);
    }

    Money market_value(Price mark) const {
        return cash + long_qty * mark - short_qty * mark;
    }
    Money unrealized_pnl(Price mark) const {
        return (long_qty * mark - long_cost) + (short_proceeds - short_qty * mark);
    }
};

namespace detail {

// Proportional share of an integer cost basis; the rounding dust stays in
// the basis and realizes on the final close, conserving money exactly.
inline Money basis_portion(Money total, Qty part, Qty whole) {
    if (part == whole) return total;
    return static_cast<Money>(static_cast<__int128>(total) * part / whole);
}

}  // namespace detail

/// Average-cost fill application. A buy nets against the short side first,
/// a sell against the long side; the remainder opens or extends a position.
inline PortfolioState apply_fill(PortfolioState p, Side side, Price price, Qty qty) {
    if (side == Side::buy) {
        Qty cover = std::min(qty, p.short_qty);
        if (cover > 0) {
            Money portion = detail::basis_portion(p.short_proceeds, cover, p.short_qty);
            p.cash -= cover * price;
            p.realized_pnl += portion - cover * price;
            p.short_proceeds -= portion;
            p.short_qty -= cover;
        }
        Qty open = qty - cover;
        if (open > 0) {
            p.cash -= open * price;
            p.long_cost += open * price;
            p.long_qty += open;
        }
    } else {
        Qty close = std::min(qty, p.long_qty);
        if (close > 0) {
            Money portion = detail::basis_portion(p.long_cost, close, p.long_qty);
            p.cash += close * price;
            p.realized_pnl += close * price - portion;
            p.long_cost -= portion;
            p.long_qty -= close;
        }
        Qty open = qty - close;
        if (open > 0) {
            p.cash += open * price;
            p.short_proceeds += open * price;
            p.short_qty += open;
        }
    }
    return p;
}

// ===========================================================================
// Action requests and constraint enforcement
// ===========================================================================

enum class TradeAction { buy, sell, short_sell, short_cover };

inline const char* to_string(TradeAction a) {
    switch (a) {
        case TradeAction::buy: return "BUY";
        case TradeAction::sell: return "SELL";
        case TradeAction::short_sell: return "SHORT";
        default: return "SHORT_COVER";
    }
}

struct ActionRequest {
    TradeAction action = TradeAction::buy;
    OrderType order_type = OrderType::market;
    std::optional<Price> price;  // absent for market orders
    Qty quantity = 0;
    std::string explanation;

    Side side() const {
        return action == TradeAction::buy || action == TradeAction::short_cover ? Side::buy
                                                                                : Side::sell;
    }
};

struct ConstraintDecision {
    bool ok = false;
    ActionRequest request;  // quantity possibly clipped
    RejectReason reason = RejectReason::none;

    static ConstraintDecision accept(ActionRequest r) { return {true, std::move(r)}; }
    static ConstraintDecision reject(RejectReason why) { return {false, {}, why}; }
};

/// Broker-side position limits: buys and shorts must fit in cash, sells clip
/// to the long position, covers clip to the short position. Clipping to
/// zero is a rejection.
inline ConstraintDecision enforce_constraints(const ActionRequest& req,
                                              const PortfolioState& portfolio, Price ref_price) {
    if (req.quantity <= 0) return ConstraintDecision::reject(RejectReason::non_positive_qty);
    Price px = req.price.value_or(ref_price);
    if (px <= 0) return ConstraintDecision::reject(RejectReason::non_positive_price);
    ActionRequest out = req;
    switch (req.action) {
        case TradeAction::buy:
            if (req.quantity * px > portfolio.cash)
                return ConstraintDecision::reject(RejectReason::insufficient_cash);
            break;
        case TradeAction::short_sell:
            if (req.quantity * px > portfolio.cash)
                return ConstraintDecision::reject(RejectReason::insufficient_cash);
            break;
        case TradeAction::sell:
            if (portfolio.long_qty == 0) return ConstraintDecision::reject(RejectReason::no_position);
            out.quantity = std::min(req.quantity, portfolio.long_qty);
            break;
        case TradeAction::short_cover:
            if (portfolio.short_qty == 0)
                return ConstraintDecision::reject(RejectReason::no_position);
            out.quantity = std::min(req.quantity, portfolio.short_qty);
            // covering costs cash; an adverse move can make the full cover
            // unaffordable, so clip to what cash buys back
            if (out.quantity * px > portfolio.cash) {
                out.quantity = std::min(out.quantity, portfolio.cash / px);
                if (out.quantity == 0)
                    return ConstraintDecision::reject(RejectReason::insufficient_cash);
            }
            break;
    }
    return ConstraintDecision::accept(out);
}

inline Order to_order(const ActionRequest& req, const std::string& agent_id,
                      const std::string& symbol, SimTime now) {
    Order o;
    o.agent_id = agent_id;
    o.symbol = symbol;
    o.side = req.side();
    o.type = req.order_type;
    if (req.order_type == OrderType::limit) o.limit_price = req.price;
    if (req.order_type == OrderType::stop) o.stop_price = req.price;
    o.quantity = req.quantity;
    o.submit_time = now;
    o.explanation = req.explanation;
    return o;
}

// ===========================================================================
// Strategies
// ===========================================================================

/// Everything a strategy sees at one decision point. `ref_price` is the
/// tradable price right now: the current bar's open in candle mode, the
/// last trade or mid in order mode.
struct MarketView {
    SimTime now = 0;
    bool market_open = true;
    std::optional<Price> ref_price;
    std::optional<Candle> last_bar;  // most recent completed bar
    const IndicatorFrame* indicators = nullptr;
    Ladder bids, asks;               // order mode only
    PortfolioState portfolio;
};

class Strategy {
public:
    virtual ~Strategy() = default;
    virtual void on_market_data(const MarketView&) {}
    virtual std::vector<ActionRequest> decide(const MarketView& view) = 0;
};

/// Single maximal market buy at the first tradable price, then holds.
class BuyAndHoldStrategy : public Strategy {
public:
    std::vector<ActionRequest> decide(const MarketView& view) override {
        if (done_ || !view.ref_price || *view.ref_price <= 0) return {};
        done_ = true;
        Qty qty = view.portfolio.cash / *view.ref_price;
        if (qty < 1) return {};
        ActionRequest r;
        r.action = TradeAction::buy;
        r.order_type = OrderType::market;
        r.quantity = qty;
        r.explanation = "buy and hold entry";
        return {r};
    }

private:
    bool done_ = false;
};

/// All-in on a fast/slow SMA cross above, all-out on the cross below.
class MaCrossoverStrategy : public Strategy {
public:
    MaCrossoverStrategy(int fast_n, int slow_n) : fast_n_(fast_n), slow_n_(slow_n) {
        if (fast_n < 1 || fast_n >= slow_n)
            throw config_error("BAD_WINDOWS: ma_crossover needs 1 <= fast < slow");
    }

    void on_market_data(const MarketView& view) override {
        if (view.last_bar && (closes_.empty() || view.last_bar->bar_start != last_seen_)) {
            closes_.push_back(price_to_double(view.last_bar->close));
            last_seen_ = view.last_bar->bar_start;
        }
    }

    std::vector<ActionRequest> decide(const MarketView& view) override {
        auto fast = sma(closes_, fast_n_);
        auto slow = sma(closes_, slow_n_);
        std::optional<bool> above;
        if (fast && slow && *fast != *slow) above = *fast > *slow;

        std::vector<ActionRequest> out;
        if (above && prev_above_ && *above != *prev_above_ && view.ref_price &&
            *view.ref_price > 0) {
            ActionRequest r;
            r.order_type = OrderType::market;
            if (*above) {
                Qty qty = view.portfolio.cash / *view.ref_price;
                if (qty >= 1) {
                    r.action = TradeAction::buy;
                    r.quantity = qty;
                    r.explanation = "fast sma crossed above slow";
                    out.push_back(r);
                }
            } else if (view.portfolio.long_qty > 0) {
                r.action = TradeAction::sell;
                r.quantity = view.portfolio.long_qty;
                r.explanation = "fast sma crossed below slow";
                out.push_back(r);
            }
        }
        if (above) prev_above_ = above;
        return out;
    }

private:
    int fast_n_, slow_n_;
    std::vector<double> closes_;
    SimTime last_seen_ = -1;
    std::optional<bool> prev_above_;
};

// ===========================================================================
// External decision provider
// ===========================================================================

/// Strict Appendix-style action schema: exactly the five documented keys,
/// exact enum spellings. Any deviation rejects the whole document.
inline std::optional<std::vector<ActionRequest>> parse_action_requests(const std::string& text,
                                                                       std::string* diag = nullptr) {
    auto fail = [&](const std::string& why) -> std::optional<std::vector<ActionRequest>> {
        if (diag) *diag = why;
        return std::nullopt;
    };
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) return fail("response is not valid JSON");
    if (!doc.is_array()) return fail("response is not a JSON array");

    std::vector<ActionRequest> out;
    for (const auto& item : doc) {
        if (!item.is_object()) return fail("array element is not an object");
        static const std::vector<std::string> kKeys = {"action", "orderType", "price", "quantity",
                                                       "explanation"};
        if (item.size() != kKeys.size()) return fail("order object must have exactly 5 fields");
        for (const auto& k : kKeys)
            if (!item.contains(k)) return fail("missing field: " + k);

        ActionRequest r;
        if (!item["action"].is_string()) return fail("action must be a string");
        std::string action = item["action"].get<std::string>();
        if (action == "BUY") r.action = TradeAction::buy;
        else if (action == "SELL") r.action = TradeAction::sell;
        else if (action == "SHORT") r.action = TradeAction::short_sell;
        else if (action == "SHORT_COVER") r.action = TradeAction::short_cover;
        else return fail("bad action: " + action);

        if (!item["orderType"].is_string()) return fail("orderType must be a string");
        std::string type = item["orderType"].get<std::string>();
        if (type == "MARKET") r.order_type = OrderType::market;
        else if (type == "LIMIT") r.order_type = OrderType::limit;
        else if (type == "STOP") r.order_type = OrderType::stop;
        else return fail("bad orderType: " + type);

        if (item["price"].is_null()) {
            if (r.order_type != OrderType::market)
                return fail("price required for LIMIT/STOP orders");
        } else if (item["price"].is_number()) {
            r.price = static_cast<Price>(
                std::llround(item["price"].get<double>() * static_cast<double>(kPriceScale)));
        } else {
            return fail("price must be a number or null");
        }

        if (!item["quantity"].is_number_integer() || item["quantity"].get<std::int64_t>() <= 0)
            return fail("quantity must be a positive integer");
        r.quantity = item["quantity"].get<std::int64_t>();

        if (!item["explanation"].is_string()) return fail("explanation must be a string");
        r.explanation = item["explanation"].get<std::string>();
        out.push_back(std::move(r));
    }
    return out;
}

struct ProviderConfig {
    enum class Mode { process, http };
    Mode mode = Mode::process;
    std::string command;   // process mode: shell command speaking NDJSON
    std::string host;      // http mode
    int port = 0;
    std::string path = "/decide";
    int timeout_ms = 10'000;
};

/// Talks newline-delimited JSON to a child process over its standard
/// streams. One request line per decision point, one response line back.
class ProcessProviderClient {
public:
    explicit ProcessProviderClient(std::string command, int timeout_ms)
        : command_(std::move(command)), timeout_ms_(timeout_ms) {}

    ~ProcessProviderClient() { shutdown(); }

    ProcessProviderClient(const ProcessProviderClient&) = delete;
    ProcessProviderClient& operator=(const ProcessProviderClient&) = delete;

    /// Sends one request line, waits for one response line. Empty optional
    /// means timeout or a dead provider.
    std::optional<std::string> round_trip(const std::string& line) {
        if (pid_ < 0 && !spawn()) return std::nullopt;
        std::string msg = line + "\n";
        if (::write(to_child_, msg.data(), msg.size()) != static_cast<ssize_t>(msg.size()))
            return std::nullopt;
        return read_line();
    }

    void shutdown() {
        if (to_child_ >= 0) ::close(to_child_);
        if (from_child_ >= 0) ::close(from_child_);
        to_child_ = from_child_ = -1;
        if (pid_ > 0) {
            // the child runs in its own process group; take the group down
            // so a shell blocked on a grandchild cannot stall the engine
            ::kill(-pid_, SIGTERM);
            int status = 0;
            for (int i = 0; i < 20 && ::waitpid(pid_, &status, WNOHANG) == 0; ++i)
                ::usleep(10'000);
            if (::waitpid(pid_, &status, WNOHANG) == 0) {
                ::kill(-pid_, SIGKILL);
                ::waitpid(pid_, &status, 0);
            }
            pid_ = -1;
        }
    }

private:
    bool spawn() {
        int in_pipe[2], out_pipe[2];
        if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) return false;
        pid_ = ::fork();
        if (pid_ < 0) return false;
        if (pid_ == 0) {
            ::setpgid(0, 0);
            ::dup2(in_pipe[0], STDIN_FILENO);
            ::dup2(out_pipe[1], STDOUT_FILENO);
            ::close(in_pipe[0]);
            ::close(in_pipe[1]);
            ::close(out_pipe[0]);
            ::close(out_pipe[1]);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(in_pipe[0]);
        ::close(out_pipe[1]);
        to_child_ = in_pipe[1];
        from_child_ = out_pipe[0];
        return true;
    }

    std::optional<std::string> read_line() {
        while (true) {
            if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
                std::string line = buffer_.substr(0, pos);
                buffer_.erase(0, pos + 1);
                return line;
            }
            pollfd pfd{from_child_, POLLIN, 0};
            int rc = ::poll(&pfd, 1, timeout_ms_);
            if (rc <= 0) return std::nullopt;  // timeout or error
            char chunk[4096];
            ssize_t n = ::read(from_child_, chunk, sizeof chunk);
            if (n <= 0) return std::nullopt;  // provider died
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    std::string command_;
    int timeout_ms_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

// ===========================================================================
// Decision audit log
// ===========================================================================

/// Append-only JSON-lines record of every decision point, including empty
/// ones. Write failures abort the run: a partial audit trail is worse than
/// no run.
class DecisionAuditLog {
public:
    DecisionAuditLog() = default;

    explicit DecisionAuditLog(const std::string& path) { open(path); }

    void open(const std::string& path) {
        out_.open(path, std::ios::out | std::ios::trunc);
        if (!out_) throw error("cannot open audit log: " + path);
    }

    bool is_open() const { return out_.is_open(); }

    void log_decision(const std::string& agent_id, SimTime sim_time,
                      const std::vector<ActionRequest>& actions, const std::string& explanation) {
        if (!out_.is_open()) return;
        nlohmann::json rec;
        rec["agent_id"] = agent_id;
        rec["sim_time"] = sim_time;
        rec["explanation"] = explanation;
        auto arr = nlohmann::json::array();
        for (const auto& a : actions) {
            nlohmann::json j;
            j["action"] = to_string(a.action);
            j["orderType"] = a.order_type == OrderType::market
                                 ? "MARKET"
                                 : (a.order_type == OrderType::limit ? "LIMIT" : "STOP");
            if (a.price) j["price"] = format_price(*a.price);
            else j["price"] = nullptr;
            j["quantity"] = a.quantity;
            j["explanation"] = a.explanation;
            arr.push_back(j);
        }
        rec["actions"] = arr;
        out_ << rec.dump() << "\n";
        if (!out_) throw error("audit log write failed");
        ++lines_;
    }

    void flush() { out_.flush(); }
    std::uint64_t lines() const { return lines_; }

private:
    std::ofstream out_;
    std::uint64_t lines_ = 0;
};

}  // namespace tradesim
