#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tradesim/domain.hpp"

using namespace tradesim;

static Instrument nvda() {
    return Instrument{"NVDA", AssetClass::equity, parse_price("0.01"), 1};
}

TEST_CASE("price parsing and formatting round-trip", "[domain][price]") {
    CHECK(parse_price("100.25") == 100'250'000);
    CHECK(parse_price("0.01") == 10'000);
    CHECK(parse_price("-3") == -3'000'000);
    CHECK(parse_price(".5") == 500'000);
    CHECK(parse_price("7") == 7 * kPriceScale);

    CHECK(format_price(parse_price("100.25")) == "100.25");
    CHECK(format_price(parse_price("7")) == "7");
    CHECK(format_price(parse_price("-0.000001")) == "-0.000001");
    CHECK(format_price(0) == "0");

    CHECK_THROWS_AS(parse_price("100.0000001"), data_error);
    CHECK_THROWS_AS(parse_price("abc"), data_error);
    CHECK_THROWS_AS(parse_price(""), data_error);

    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        Price p = static_cast<Price>(rng() % 2'000'000'000'000ull) - 1'000'000'000'000;
        CHECK(parse_price(format_price(p)) == p);
    }
}

TEST_CASE("validate_order accepts well-formed limit order", "[domain][validate]") {
    Order o;
    o.symbol = "NVDA";
    o.side = Side::buy;
    o.type = OrderType::limit;
    o.limit_price = parse_price("100.00");
    o.quantity = 5;
    auto r = validate_order(o, nvda());
    CHECK(r.ok);
    CHECK(r.reason == RejectReason::none);
}

TEST_CASE("validate_order rejects price on market order", "[domain][validate]") {
    Order o;
    o.symbol = "NVDA";
    o.type = OrderType::market;
    o.limit_price = parse_price("100.00");
    o.quantity = 5;
    auto r = validate_order(o, nvda());
    CHECK_FALSE(r.ok);
    CHECK(r.reason == RejectReason::price_on_market);
}

TEST_CASE("validate_order rejects tick-misaligned limit price", "[domain][validate]") {
    Order o;
    o.symbol = "NVDA";
    o.type = OrderType::limit;
    o.limit_price = parse_price("100.003");
    o.quantity = 5;
    auto r = validate_order(o, nvda());
    CHECK_FALSE(r.ok);
    CHECK(r.reason == RejectReason::tick_misaligned);
}

TEST_CASE("validate_order edge cases", "[domain][validate]") {
    Instrument ins = nvda();
    Order o;
    o.symbol = "NVDA";
    o.type = OrderType::limit;
    o.limit_price = parse_price("100.00");

    SECTION("zero quantity") {
        o.quantity = 0;
        CHECK(validate_order(o, ins).reason == RejectReason::non_positive_qty);
    }
    SECTION("stop order without stop price") {
        o.quantity = 1;
        o.type = OrderType::stop;
        o.limit_price.reset();
        CHECK(validate_order(o, ins).reason == RejectReason::missing_stop_price);
    }
    SECTION("limit order with stop price") {
        o.quantity = 1;
        o.stop_price = parse_price("99.00");
        CHECK(validate_order(o, ins).reason == RejectReason::stop_price_on_limit);
    }
    SECTION("negative price") {
        o.quantity = 1;
        o.limit_price = parse_price("-1.00");
        CHECK(validate_order(o, ins).reason == RejectReason::non_positive_price);
    }
    SECTION("lot misaligned") {
        ins.lot_size = 10;
        o.quantity = 15;
        CHECK(validate_order(o, ins).reason == RejectReason::lot_misaligned);
    }
    SECTION("pure: same input, same result") {
        o.quantity = 5;
        auto a = validate_order(o, ins);
        auto b = validate_order(o, ins);
        CHECK(a.ok == b.ok);
        CHECK(a.reason == b.reason);
    }
}

static Fill mk_fill(Price p, Qty q, SimTime t) {
    Fill f;
    f.price = p;
    f.quantity = q;
    f.exec_time = t;
    return f;
}

TEST_CASE("aggregate_fills_to_candle folds OHLCV", "[domain][candle]") {
    std::vector<Fill> fills = {
        mk_fill(10 * kPriceScale, 1, 100),
        mk_fill(12 * kPriceScale, 1, 200),
        mk_fill(9 * kPriceScale, 1, 300),
        mk_fill(11 * kPriceScale, 1, 400),
    };
    auto c = aggregate_fills_to_candle(fills, 0, 1000, "X");
    REQUIRE(c.has_value());
    CHECK(c->open == 10 * kPriceScale);
    CHECK(c->high == 12 * kPriceScale);
    CHECK(c->low == 9 * kPriceScale);
    CHECK(c->close == 11 * kPriceScale);
    CHECK(c->volume == 4);
    CHECK(c->valid());
}

TEST_CASE("aggregate_fills_to_candle degenerate and empty bars", "[domain][candle]") {
    auto single = aggregate_fills_to_candle({mk_fill(7 * kPriceScale, 3, 50)}, 0, 1000);
    REQUIRE(single.has_value());
    CHECK(single->open == 7 * kPriceScale);
    CHECK(single->high == 7 * kPriceScale);
    CHECK(single->low == 7 * kPriceScale);
    CHECK(single->close == 7 * kPriceScale);
    CHECK(single->volume == 3);

    CHECK_FALSE(aggregate_fills_to_candle({}, 0, 1000).has_value());
}

TEST_CASE("aggregate_fills_to_candle rejects unsorted input", "[domain][candle]") {
    std::vector<Fill> fills = {mk_fill(10, 1, 200), mk_fill(11, 1, 100)};
    CHECK_THROWS_AS(aggregate_fills_to_candle(fills, 0, 1000), error);
}

TEST_CASE("candle invariants hold for random fill sequences", "[domain][candle][property]") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Fill> fills;
        int n = 1 + static_cast<int>(rng() % 20);
        SimTime t = 0;
        for (int i = 0; i < n; ++i) {
            t += static_cast<SimTime>(rng() % 50);
            fills.push_back(mk_fill(static_cast<Price>(1 + rng() % 1000) * 10'000,
                                    1 + static_cast<Qty>(rng() % 9), t));
        }
        auto c = aggregate_fills_to_candle(fills, 0, 100'000);
        REQUIRE(c.has_value());
        CHECK(c->valid());
        Qty total = 0;
        for (const auto& f : fills) total += f.quantity;
        CHECK(c->volume == total);
    }
}
