#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tradesim/report.hpp"

using namespace tradesim;
using Catch::Approx;

namespace {

Price px(const char* s) { return parse_price(s); }

Fill mk_fill(Price price, Qty qty, SimTime t) {
    Fill f;
    f.price = price;
    f.quantity = qty;
    f.exec_time = t;
    f.liquidity = Liquidity::taker;
    return f;
}

// brute-force drawdown: for every t, scan the full prefix for the peak
double drawdown_oracle(const std::vector<EquityPoint>& equity) {
    double worst = 0.0;
    for (std::size_t t = 0; t < equity.size(); ++t) {
        double peak = 0.0;
        for (std::size_t s = 0; s <= t; ++s)
            peak = std::max(peak, price_to_double(equity[s].value));
        if (peak > 0.0)
            worst = std::max(worst, (peak - price_to_double(equity[t].value)) / peak);
    }
    return worst;
}

}  // namespace

TEST_CASE("ledger pairs entries and exits", "[evaluator][ledger]") {
    SECTION("round trip closes one trade") {
        Evaluator ev;
        ev.add_agent("A1", px("10000"));
        ev.record_fill("A1", Side::buy, mk_fill(px("100"), 10, 0));
        ev.record_fill("A1", Side::sell, mk_fill(px("110"), 10, 1000));
        auto trades = ev.all_trades();
        REQUIRE(trades.size() == 1);
        CHECK_FALSE(trades[0].open);
        CHECK(trades[0].qty == 10);
        CHECK(trades[0].entry_price() == Approx(100.0));
        CHECK(trades[0].exit_price == px("110"));
        CHECK(trades[0].realized_pnl == px("100"));
        CHECK(trades[0].open_time == 0);
        CHECK(trades[0].close_time == 1000);
    }
    SECTION("partial close splits the record") {
        Evaluator ev;
        ev.add_agent("A1", px("10000"));
        ev.record_fill("A1", Side::buy, mk_fill(px("100"), 10, 0));
        ev.record_fill("A1", Side::sell, mk_fill(px("105"), 4, 1000));
        auto trades = ev.all_trades();
        REQUIRE(trades.size() == 2);
        const TradeRecord* open = nullptr;
        const TradeRecord* closed = nullptr;
        for (const auto& t : trades) (t.open ? open : closed) = &t;
        REQUIRE(open != nullptr);
        REQUIRE(closed != nullptr);
        CHECK(open->qty == 6);
        CHECK(closed->qty == 4);
        CHECK(closed->realized_pnl == px("20"));
    }
    SECTION("no fills means an empty ledger and flat equity") {
        Evaluator ev;
        ev.add_agent("A1", px("10000"));
        ev.mark_interval(0, px("100"));
        ev.mark_interval(1000, px("200"));
        CHECK(ev.all_trades().empty());
        auto m = ev.compute();
        CHECK(m.roi == Approx(0.0));
        CHECK(m.max_drawdown == Approx(0.0));
        CHECK(m.num_trades == 0);
    }
    SECTION("short episode") {
        Evaluator ev;
        ev.add_agent("A1", px("10000"));
        ev.record_fill("A1", Side::sell, mk_fill(px("100"), 5, 0));
        ev.record_fill("A1", Side::buy, mk_fill(px("90"), 5, 1000));
        auto trades = ev.all_trades();
        REQUIRE(trades.size() == 1);
        CHECK(trades[0].direction == TradeRecord::Direction::short_side);
        CHECK(trades[0].realized_pnl == px("50"));
    }
    SECTION("out of order fills are rejected") {
        Evaluator ev;
        ev.add_agent("A1", px("10000"));
        ev.record_fill("A1", Side::buy, mk_fill(px("100"), 1, 1000));
        CHECK_THROWS_AS(ev.record_fill("A1", Side::buy, mk_fill(px("100"), 1, 500)), error);
    }
}

TEST_CASE("metric formulas", "[evaluator][metrics]") {
    SECTION("loss-free ledger reports the 999.0 sentinel") {
        Evaluator ev;
        ev.add_agent("A1", px("10000"));
        ev.mark_interval(0, px("100"));
        ev.record_fill("A1", Side::buy, mk_fill(px("100"), 10, 1));
        ev.record_fill("A1", Side::sell, mk_fill(px("110"), 10, 2));
        ev.mark_interval(1000, px("110"));
        auto m = ev.compute();
        REQUIRE(m.profit_factor.has_value());
        CHECK(*m.profit_factor == 999.0);
        CHECK(*m.win_rate == Approx(1.0));
    }
    SECTION("monotone equity has zero drawdown") {
        std::vector<EquityPoint> eq = {{0, px("100")}, {1, px("110")}, {2, px("120")}};
        CHECK(metrics::max_drawdown(eq) == Approx(0.0));
    }
    SECTION("hand-computed drawdown") {
        std::vector<EquityPoint> eq = {{0, px("100")}, {1, px("110")}, {2, px("99")},
                                       {3, px("120")}};
        CHECK(metrics::max_drawdown(eq) == Approx(0.1));  // (110-99)/110
    }
    SECTION("drawdown equals the brute-force oracle on random series") {
        std::mt19937_64 rng(64);
        for (int trial = 0; trial < 300; ++trial) {
            std::vector<EquityPoint> eq;
            Money v = px("100");
            for (int i = 0; i < 80; ++i) {
                v = std::max<Money>(kPriceScale,
                                    v + (static_cast<Money>(rng() % 2'000'001) - 1'000'000));
                eq.push_back({i, v});
            }
            CHECK(metrics::max_drawdown(eq) == Approx(drawdown_oracle(eq)).margin(1e-12));
        }
    }
    SECTION("sharpe is invariant under a common shift of returns and rf") {
        std::mt19937_64 rng(7);
        std::vector<double> returns;
        for (int i = 0; i < 100; ++i)
            returns.push_back((static_cast<double>(rng() % 2001) - 1000.0) / 10'000.0);
        auto base = metrics::sharpe_ratio(returns, 0.0001);
        std::vector<double> shifted = returns;
        const double c = 0.0123;
        for (double& r : shifted) r += c;
        auto moved = metrics::sharpe_ratio(shifted, 0.0001 + c);
        REQUIRE(base.has_value());
        REQUIRE(moved.has_value());
        CHECK(*moved == Approx(*base).epsilon(1e-12));
    }
    SECTION("sortino needs negative returns") {
        CHECK_FALSE(metrics::sortino_ratio({0.01, 0.02, 0.03}, 0.0).has_value());
        auto s = metrics::sortino_ratio({0.05, -0.02, 0.01, -0.04}, 0.0);
        REQUIRE(s.has_value());
        // downside stdev over {-0.02, -0.04} only
        double m = (0.05 - 0.02 + 0.01 - 0.04) / 4.0;
        double sd = std::sqrt((std::pow(-0.02 + 0.03, 2) + std::pow(-0.04 + 0.03, 2)) / 2.0);
        CHECK(*s == Approx(m / sd).epsilon(1e-12));
    }
    SECTION("empty equity is an error") {
        CHECK_THROWS_AS(compute_metrics({}, {}, {}, {}), error);
    }
    SECTION("roi and annualization") {
        Evaluator ev(MetricsConfig{0.0, 252.0});
        ev.add_agent("A1", px("1000"));
        ev.mark_interval(0, px("1"));
        ev.record_fill("A1", Side::buy, mk_fill(px("100"), 10, 1));
        ev.mark_interval(86'400'000, px("110"));
        ev.mark_interval(172'800'000, px("99"));
        ev.mark_interval(259'200'000, px("121"));
        auto m = ev.compute();
        CHECK(m.roi == Approx(0.21));  // 1000 -> 1210
        REQUIRE(m.sharpe.has_value());
        CHECK(*m.annualized_sharpe == Approx(*m.sharpe * std::sqrt(252.0)));
        CHECK(m.num_trades == 1);
        CHECK(m.total_traded_volume == Approx(1000.0));
    }
}

TEST_CASE("evaluator reconciles with the runtime portfolio",
          "[evaluator][property][reconciliation]") {
    std::mt19937_64 rng(909);
    for (int trial = 0; trial < 100; ++trial) {
        Evaluator ev;
        const Money initial = px("1000000");
        ev.add_agent("A1", initial);
        PortfolioState runtime;
        runtime.cash = initial;
        SimTime t = 0;
        for (int i = 0; i < 60; ++i) {
            t += 1 + static_cast<SimTime>(rng() % 100);
            Side side = rng() % 2 ? Side::buy : Side::sell;
            Price price = (50 + static_cast<Price>(rng() % 100)) * kPriceScale;
            Qty qty = 1 + static_cast<Qty>(rng() % 15);
            ev.record_fill("A1", side, mk_fill(price, qty, t));
            runtime = apply_fill(runtime, side, price, qty);
        }
        // closed-ledger realized P&L equals the runtime's, exactly
        Money ledger_realized = 0;
        for (const auto& tr : ev.all_trades())
            if (!tr.open) ledger_realized += tr.realized_pnl;
        REQUIRE(ledger_realized == runtime.realized_pnl);
        // equity marking agrees with the runtime market value
        Price mark = (50 + static_cast<Price>(rng() % 100)) * kPriceScale;
        auto pt = ev.mark_interval(t + 1, mark);
        REQUIRE(pt.value == runtime.market_value(mark));
    }
}

TEST_CASE("metric registry", "[evaluator][registry]") {
    Evaluator ev;
    ev.add_agent("A1", px("1000"));
    ev.mark_interval(0, px("100"));
    ev.record_fill("A1", Side::buy, mk_fill(px("100"), 5, 1));
    ev.record_fill("A1", Side::sell, mk_fill(px("101"), 5, 2));
    ev.mark_interval(1000, px("101"));

    auto turnover = [](const std::vector<TradeRecord>& trades,
                       const std::vector<EquityPoint>& equity) {
        double notional = 0.0;
        for (const auto& t : trades)
            if (!t.open) notional += price_to_double(t.entry_notional);
        return equity.empty() ? 0.0 : notional / price_to_double(equity.front().value);
    };
    ev.register_metric("turnover", turnover);

    SECTION("registered metric appears in json output") {
        auto doc = report_to_json(ev, nlohmann::json::object());
        REQUIRE(doc["aggregate"]["extras"].contains("turnover"));
        CHECK(doc["aggregate"]["extras"]["turnover"].get<double>() == Approx(0.5));
    }
    SECTION("duplicate name rejected") {
        CHECK_THROWS_AS(ev.register_metric("turnover", turnover), config_error);
    }
    SECTION("registered metric equals its standalone computation") {
        auto m = ev.compute();
        CHECK(m.extras.at("turnover") == Approx(turnover(ev.all_trades(), ev.equity())));
    }
}

TEST_CASE("report exports", "[evaluator][report]") {
    auto build = [] {
        auto ev = std::make_unique<Evaluator>();
        ev->add_agent("A1", px("10000"));
        ev->mark_interval(0, px("100"));
        ev->record_fill("A1", Side::buy, mk_fill(px("100"), 10, 10));
        ev->record_fill("A1", Side::sell, mk_fill(px("110"), 10, 60'010));
        ev->mark_interval(60'000, px("105"));
        ev->mark_interval(120'000, px("110"));
        return ev;
    };

    SECTION("identical runs produce byte-identical json") {
        auto a = report_to_json(*build(), {{"seed", 42}});
        auto b = report_to_json(*build(), {{"seed", 42}});
        CHECK(a.dump(2) == b.dump(2));
    }
    SECTION("all fifteen metric fields are present") {
        auto doc = report_to_json(*build(), nlohmann::json::object());
        const char* fields[] = {"roi",           "sharpe",         "annualized_sharpe",
                                "sortino",       "win_rate",       "profit_factor",
                                "max_drawdown",  "num_trades",     "num_closed_trades",
                                "total_traded_volume", "average_trade_size", "roic",
                                "profit_per_trade", "last_portfolio_value", "realized_pnl"};
        for (const char* f : fields) {
            INFO(f);
            CHECK(doc["aggregate"].contains(f));
            CHECK(doc["agents"]["A1"].contains(f));
        }
    }
    SECTION("html has one entry and one exit marker per closed trade") {
        auto ev = build();
        std::vector<Candle> candles;
        for (int i = 0; i < 2; ++i) {
            Candle c;
            c.symbol = "X";
            c.bar_start = i * 60'000;
            c.timeframe_ms = 60'000;
            c.open = px(i == 0 ? "100" : "105");
            c.close = px(i == 0 ? "105" : "110");
            c.low = std::min(c.open, c.close) - kPriceScale;
            c.high = std::max(c.open, c.close) + kPriceScale;
            c.volume = 100;
            candles.push_back(c);
        }
        std::vector<TradeMark> marks = {
            {10, px("100"), Side::buy, 10, "entry reason"},
            {60'010, px("110"), Side::sell, 10, "exit reason"},
        };
        auto html = render_report_html(*ev, candles, marks, nlohmann::json::object());
        auto count = [&](const std::string& needle) {
            std::size_t n = 0, pos = 0;
            while ((pos = html.find(needle, pos)) != std::string::npos) {
                ++n;
                pos += needle.size();
            }
            return n;
        };
        CHECK(count("class=\"buy\"") == 1);
        CHECK(count("class=\"sell\"") == 1);
        CHECK(html.find("entry reason") != std::string::npos);   // hover title text
        CHECK(html.find("no trades") == std::string::npos);
        CHECK(html.find("<script") == std::string::npos);        // fully static
        CHECK(html.find("http") == std::string::npos);           // no external fetches
    }
    SECTION("empty ledger renders the placeholder") {
        Evaluator ev;
        ev.add_agent("A1", px("10000"));
        ev.mark_interval(0, px("100"));
        auto html = render_report_html(ev, {}, {}, nlohmann::json::object());
        CHECK(html.find("no trades") != std::string::npos);
    }
}

TEST_CASE("metric fields stay finite or null under fuzzing", "[evaluator][property]") {
    std::mt19937_64 rng(2718);
    for (int trial = 0; trial < 100; ++trial) {
        Evaluator ev;
        ev.add_agent("A1", px("100000"));
        ev.mark_interval(0, px("100"));
        SimTime t = 0;
        int n = static_cast<int>(rng() % 20);
        for (int i = 0; i < n; ++i) {
            t += 1 + static_cast<SimTime>(rng() % 50);
            Side side = rng() % 2 ? Side::buy : Side::sell;
            Price price = (1 + static_cast<Price>(rng() % 200)) * kPriceScale;
            ev.record_fill("A1", side, mk_fill(price, 1 + static_cast<Qty>(rng() % 9), t));
        }
        ev.mark_interval(t + 1, (1 + static_cast<Price>(rng() % 200)) * kPriceScale);
        auto doc = ev.compute().to_json();
        for (const auto& [key, value] : doc.items()) {
            if (value.is_number()) {
                INFO(key);
                CHECK(std::isfinite(value.get<double>()));
            }
        }
    }
}
