#pragma once

#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tradesim/domain.hpp"

// Deterministic indicator computation. Every function is a pure fold over
// past bars; absent values mean the warm-up window is not yet satisfied.

namespace tradesim {

/// One side of a depth ladder: (price, total quantity) per level, best first.
using Ladder = std::vector<std::pair<Price, Qty>>;

// ===========================================================================
// Batch indicator functions
// ===========================================================================

/// Arithmetic mean of the last n closes.
inline std::optional<double> sma(const std::vector<double>& closes, int n) {
    if (n < 1 || static_cast<int>(closes.size()) < n) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = closes.size() - n; i < closes.size(); ++i) sum += closes[i];
    return sum / n;
}

/// EMA series with alpha = 2/(n+1), seeded with the SMA of the first n
/// points. Entries before the seed are absent.
inline std::vector<std::optional<double>> ema_series(const std::vector<double>& closes, int n) {
    std::vector<std::optional<double>> out(closes.size());
    if (n < 1 || static_cast<int>(closes.size()) < n) return out;
    double seed = 0.0;
    for (int i = 0; i < n; ++i) seed += closes[i];
    seed /= n;
    out[n - 1] = seed;
    const double alpha = 2.0 / (n + 1);
    double e = seed;
    for (std::size_t i = n; i < closes.size(); ++i) {
        e = alpha * closes[i] + (1.0 - alpha) * e;
        out[i] = e;
    }
    return out;
}

inline std::optional<double> ema(const std::vector<double>& closes, int n) {
    auto s = ema_series(closes, n);
    return s.empty() ? std::nullopt : s.back();
}

/// Wilder-smoothed RSI over n periods; needs n+1 closes. All-gain windows
/// return 100, all-loss windows 0.
inline std::optional<double> rsi(const std::vector<double>& closes, int n) {
    if (n < 1 || static_cast<int>(closes.size()) < n + 1) return std::nullopt;
    double avg_gain = 0.0, avg_loss = 0.0;
    for (int i = 1; i <= n; ++i) {
        double d = closes[i] - closes[i - 1];
        if (d > 0) avg_gain += d;
        else avg_loss -= d;
    }
    avg_gain /= n;
    avg_loss /= n;
    for (std::size_t i = n + 1; i < closes.size(); ++i) {
        double d = closes[i] - closes[i - 1];
        avg_gain = (avg_gain * (n - 1) + (d > 0 ? d : 0.0)) / n;
        avg_loss = (avg_loss * (n - 1) + (d < 0 ? -d : 0.0)) / n;
    }
    if (avg_loss == 0.0) return 100.0;
    if (avg_gain == 0.0) return 0.0;
    double rs = avg_gain / avg_loss;
    return 100.0 - 100.0 / (1.0 + rs);
}

/// max(H-L, |H-prev_close|, |L-prev_close|); first bar falls back to H-L.
inline double true_range(const Candle& c, std::optional<Price> prev_close) {
    double h = price_to_double(c.high), l = price_to_double(c.low);
    if (!prev_close) return h - l;
    double pc = price_to_double(*prev_close);
    return std::max({h - l, std::abs(h - pc), std::abs(l - pc)});
}

/// Arithmetic mean of TR over the last n bars of the series.
inline std::optional<double> atr(const std::vector<Candle>& candles, int n) {
    if (n < 1 || static_cast<int>(candles.size()) < n) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = candles.size() - n; i < candles.size(); ++i) {
        std::optional<Price> prev;
        if (i > 0) prev = candles[i - 1].close;
        sum += true_range(candles[i], prev);
    }
    return sum / n;
}

struct MacdValue {
    double line = 0.0;
    double signal = 0.0;
    double histogram = 0.0;
};

/// line = EMA_fast - EMA_slow; signal = EMA(line, signal_n) seeded with the
/// SMA of the first signal_n line values; histogram = line - signal.
inline std::optional<MacdValue> macd(const std::vector<double>& closes, int fast, int slow,
                                     int signal_n) {
    if (fast < 1 || slow <= fast || signal_n < 1) return std::nullopt;
    auto ef = ema_series(closes, fast);
    auto es = ema_series(closes, slow);
    std::vector<double> line;
    for (std::size_t i = 0; i < closes.size(); ++i)
        if (ef[i] && es[i]) line.push_back(*ef[i] - *es[i]);
    auto sig = ema(line, signal_n);
    if (!sig) return std::nullopt;
    MacdValue v;
    v.line = line.back();
    v.signal = *sig;
    v.histogram = v.line - v.signal;
    return v;
}

struct BollingerBands {
    double mid = 0.0;
    double upper = 0.0;
    double lower = 0.0;
};

/// mid = SMA_n, bands at mid +/- k * population standard deviation.
inline std::optional<BollingerBands> bollinger(const std::vector<double>& closes, int n, double k) {
    auto mid = sma(closes, n);
    if (!mid) return std::nullopt;
    double var = 0.0;
    for (std::size_t i = closes.size() - n; i < closes.size(); ++i) {
        double d = closes[i] - *mid;
        var += d * d;
    }
    var /= n;
    double sd = std::sqrt(var);
    return BollingerBands{*mid, *mid + k * sd, *mid - k * sd};
}

/// Volume-weighted average of trade prices; absent when nothing traded.
inline std::optional<double> vwap_trades(const std::vector<Fill>& fills) {
    double pv = 0.0, vol = 0.0;
    for (const auto& f : fills) {
        pv += price_to_double(f.price) * static_cast<double>(f.quantity);
        vol += static_cast<double>(f.quantity);
    }
    if (vol <= 0.0) return std::nullopt;
    return pv / vol;
}

/// Bar-mode VWAP using typical price (H+L+C)/3 weighted by bar volume.
inline std::optional<double> vwap_bars(const std::vector<Candle>& candles) {
    double pv = 0.0, vol = 0.0;
    for (const auto& c : candles) {
        double tp = (price_to_double(c.high) + price_to_double(c.low) + price_to_double(c.close)) / 3.0;
        pv += tp * static_cast<double>(c.volume);
        vol += static_cast<double>(c.volume);
    }
    if (vol <= 0.0) return std::nullopt;
    return pv / vol;
}

/// (Qbid - Qask) / (Qbid + Qask) over ladders already cut at the desired
/// depth; 0 when both sides are empty.
inline double order_book_imbalance(const Ladder& bids, const Ladder& asks) {
    double qb = 0.0, qa = 0.0;
    for (const auto& [p, q] : bids) qb += static_cast<double>(q);
    for (const auto& [p, q] : asks) qa += static_cast<double>(q);
    if (qb + qa == 0.0) return 0.0;
    return (qb - qa) / (qb + qa);
}

struct SwingLevels {
    std::vector<Price> supports;     // most recent first
    std::vector<Price> resistances;  // most recent first
};

/// Swing lows/highs: strict extrema of low/high over a centered window of
/// 2w+1 bars. Levels closer than one tick to an already-kept (more recent)
/// level are dropped.
inline SwingLevels support_resistance(const std::vector<Candle>& candles, int w, Price tick) {
    SwingLevels out;
    const int n = static_cast<int>(candles.size());
    if (w < 1 || n < 2 * w + 1) return out;
    auto dedup_push = [&](std::vector<Price>& levels, Price p) {
        for (Price kept : levels)
            if (std::llabs(kept - p) <= tick) return;
        levels.push_back(p);
    };
    for (int i = n - 1 - w; i >= w; --i) {
        bool is_min = true, is_max = true;
        for (int j = i - w; j <= i + w; ++j) {
            if (j == i) continue;
            if (candles[j].low <= candles[i].low) is_min = false;
            if (candles[j].high >= candles[i].high) is_max = false;
            if (!is_min && !is_max) break;
        }
        if (is_min) dedup_push(out.supports, candles[i].low);
        if (is_max) dedup_push(out.resistances, candles[i].high);
    }
    return out;
}

// ===========================================================================
// Streaming engine
// ===========================================================================

struct IndicatorConfig {
    int sma_n = 20;
    int ema_n = 20;
    int rsi_n = 14;
    int atr_n = 14;
    int macd_fast = 12;
    int macd_slow = 26;
    int macd_signal = 9;
    int bollinger_n = 20;
    double bollinger_k = 2.0;
    int imbalance_depth = 5;
    int swing_window = 3;

    void validate() const {
        if (sma_n < 1 || ema_n < 1 || rsi_n < 1 || atr_n < 1 || macd_fast < 1 ||
            macd_signal < 1 || bollinger_n < 1 || imbalance_depth < 1 || swing_window < 1)
            throw config_error("indicator windows must be >= 1");
        if (macd_fast >= macd_slow)
            throw config_error("macd fast window must be smaller than slow window");
    }
};

struct IndicatorFrame {
    SimTime bar_start = 0;
    std::optional<double> sma, ema, rsi, macd_line, macd_signal, macd_hist;
    std::optional<double> tr, atr, bb_mid, bb_upper, bb_lower, vwap, imbalance;
    std::vector<Price> support_levels, resistance_levels;
    std::map<std::string, std::optional<double>> extras;
};

/// A streaming indicator: consumes one bar, yields a value once warm.
using StreamingIndicator = std::function<std::optional<double>(const Candle&)>;
using IndicatorFactory = std::function<StreamingIndicator()>;

/// Custom indicators plug in by name; the engine consults the registry when
/// building per-instrument streams, so extensions never touch engine code.
class IndicatorRegistry {
public:
    void register_indicator(const std::string& name, IndicatorFactory factory) {
        if (factories_.count(name)) throw config_error("DUPLICATE_INDICATOR: " + name);
        factories_[name] = std::move(factory);
    }

    bool contains(const std::string& name) const { return factories_.count(name) > 0; }

    StreamingIndicator make(const std::string& name) const {
        auto it = factories_.find(name);
        if (it == factories_.end()) throw config_error("unknown indicator: " + name);
        return it->second();
    }

private:
    std::map<std::string, IndicatorFactory> factories_;
};

/// Per-instrument incremental computation. on_candle() must agree with the
/// batch functions above recomputed from scratch at every step.
class IndicatorEngine {
public:
    explicit IndicatorEngine(IndicatorConfig config, Price tick_size = 10'000)
        : cfg_(config), tick_(tick_size) {
        cfg_.validate();
    }

    /// Registers an extra streaming indicator included in every frame.
    void add_extra(const std::string& name, StreamingIndicator fn) {
        if (extras_.count(name)) throw config_error("DUPLICATE_INDICATOR: " + name);
        extras_[name] = std::move(fn);
    }

    /// VWAP accumulators restart at session open.
    void reset_session() {
        vwap_pv_ = 0.0;
        vwap_vol_ = 0.0;
    }

    IndicatorFrame on_candle(const Candle& bar) {
        IndicatorFrame f;
        f.bar_start = bar.bar_start;

        closes_.push_back(price_to_double(bar.close));

        // Trend / volatility windows.
        f.sma = window_mean(cfg_.sma_n);
        f.ema = step_ema(ema_state_, cfg_.ema_n, closes_.back());
        if (auto bb = window_bollinger()) {
            f.bb_mid = bb->mid;
            f.bb_upper = bb->upper;
            f.bb_lower = bb->lower;
        }

        // RSI via Wilder recurrence.
        f.rsi = step_rsi();

        // True range and its window mean.
        double tr_now = true_range(bar, prev_close_);
        trs_.push_back(tr_now);
        if (static_cast<int>(trs_.size()) > cfg_.atr_n) trs_.pop_front();
        f.tr = tr_now;
        if (static_cast<int>(trs_.size()) == cfg_.atr_n) {
            double s = 0.0;
            for (double v : trs_) s += v;
            f.atr = s / cfg_.atr_n;
        }

        // MACD: two EMA recurrences plus a seeded signal EMA over the line.
        auto fast = step_ema(macd_fast_state_, cfg_.macd_fast, closes_.back());
        auto slow = step_ema(macd_slow_state_, cfg_.macd_slow, closes_.back());
        if (fast && slow) {
            double line = *fast - *slow;
            auto sig = step_ema(macd_signal_state_, cfg_.macd_signal, line);
            if (sig) {
                f.macd_line = line;
                f.macd_signal = *sig;
                f.macd_hist = line - *sig;
            }
        }

        // Session VWAP on typical price.
        double tp = (price_to_double(bar.high) + price_to_double(bar.low) +
                     price_to_double(bar.close)) / 3.0;
        vwap_pv_ += tp * static_cast<double>(bar.volume);
        vwap_vol_ += static_cast<double>(bar.volume);
        if (vwap_vol_ > 0.0) f.vwap = vwap_pv_ / vwap_vol_;

        // Swing levels need the full bar history.
        bars_.push_back(bar);
        auto levels = support_resistance(bars_, cfg_.swing_window, tick_);
        f.support_levels = std::move(levels.supports);
        f.resistance_levels = std::move(levels.resistances);

        if (book_imbalance_) f.imbalance = *book_imbalance_;

        for (auto& [name, fn] : extras_) f.extras[name] = fn(bar);

        prev_close_ = bar.close;
        return f;
    }

    /// Order-level mode feeds the current depth ladder before each frame.
    void set_book_top(const Ladder& bids, const Ladder& asks) {
        book_imbalance_ = order_book_imbalance(bids, asks);
    }

    const IndicatorConfig& config() const { return cfg_; }

private:
    struct EmaState {
        std::vector<double> warmup;
        std::optional<double> value;
    };

    std::optional<double> step_ema(EmaState& st, int n, double x) {
        if (st.value) {
            double alpha = 2.0 / (n + 1);
            st.value = alpha * x + (1.0 - alpha) * *st.value;
            return st.value;
        }
        st.warmup.push_back(x);
        if (static_cast<int>(st.warmup.size()) == n) {
            double s = 0.0;
            for (double v : st.warmup) s += v;
            st.value = s / n;
            st.warmup.clear();
        }
        return st.value;
    }

    std::optional<double> window_mean(int n) const {
        if (static_cast<int>(closes_.size()) < n) return std::nullopt;
        double s = 0.0;
        for (std::size_t i = closes_.size() - n; i < closes_.size(); ++i) s += closes_[i];
        return s / n;
    }

    std::optional<BollingerBands> window_bollinger() const {
        auto mid = window_mean(cfg_.bollinger_n);
        if (!mid) return std::nullopt;
        double var = 0.0;
        for (std::size_t i = closes_.size() - cfg_.bollinger_n; i < closes_.size(); ++i) {
            double d = closes_[i] - *mid;
            var += d * d;
        }
        var /= cfg_.bollinger_n;
        double sd = std::sqrt(var);
        return BollingerBands{*mid, *mid + cfg_.bollinger_k * sd, *mid - cfg_.bollinger_k * sd};
    }

    std::optional<double> step_rsi() {
        const int n = cfg_.rsi_n;
        if (closes_.size() < 2) return std::nullopt;
        double d = closes_[closes_.size() - 1] - closes_[closes_.size() - 2];
        if (!rsi_avg_gain_) {
            rsi_warm_.push_back(d);
            if (static_cast<int>(rsi_warm_.size()) < n) return std::nullopt;
            double g = 0.0, l = 0.0;
            for (double x : rsi_warm_) {
                if (x > 0) g += x;
                else l -= x;
            }
            rsi_avg_gain_ = g / n;
            rsi_avg_loss_ = l / n;
            rsi_warm_.clear();
        } else {
            rsi_avg_gain_ = (*rsi_avg_gain_ * (n - 1) + (d > 0 ? d : 0.0)) / n;
            rsi_avg_loss_ = (*rsi_avg_loss_ * (n - 1) + (d < 0 ? -d : 0.0)) / n;
        }
        if (*rsi_avg_loss_ == 0.0) return 100.0;
        if (*rsi_avg_gain_ == 0.0) return 0.0;
        double rs = *rsi_avg_gain_ / *rsi_avg_loss_;
        return 100.0 - 100.0 / (1.0 + rs);
    }

    IndicatorConfig cfg_;
    Price tick_;
    std::vector<double> closes_;
    std::vector<Candle> bars_;
    std::deque<double> trs_;
    std::optional<Price> prev_close_;
    EmaState ema_state_, macd_fast_state_, macd_slow_state_, macd_signal_state_;
    std::vector<double> rsi_warm_;
    std::optional<double> rsi_avg_gain_, rsi_avg_loss_;
    double vwap_pv_ = 0.0, vwap_vol_ = 0.0;
    std::optional<double> book_imbalance_;
    std::map<std::string, StreamingIndicator> extras_;
};

}  // namespace tradesim
