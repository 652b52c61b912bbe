#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "tradesim/bus.hpp"
#include "tradesim/tcp_transport.hpp"

using namespace tradesim;

namespace {

Envelope env(const std::string& topic, const std::string& sender, std::uint64_t seq,
             SimTime t = 0, nlohmann::json payload = nlohmann::json::object()) {
    return Envelope{topic, sender, seq, t, std::move(payload)};
}

}  // namespace

TEST_CASE("topic pattern matching", "[bus][topics]") {
    CHECK(topic_matches("market.NVDA", "market.NVDA"));
    CHECK_FALSE(topic_matches("market.NVDA", "market.AMD"));
    CHECK(topic_matches("market.*", "market.NVDA"));
    CHECK(topic_matches("*", "anything"));
    CHECK_FALSE(topic_matches("exec.A1", "exec.A2"));
}

TEST_CASE("envelope json round trip", "[bus][codec]") {
    Order o;
    o.order_id = 42;
    o.agent_id = "A1";
    o.symbol = "NVDA";
    o.side = Side::buy;
    o.type = OrderType::limit;
    o.limit_price = parse_price("105.27");
    o.quantity = 3;
    o.submit_time = 1234;
    o.explanation = "support bounce";

    Envelope e = env(kTopicEngine, "A1", 7, 1234, msg::order_submit(o));
    auto decoded = envelope_from_json(envelope_to_json(e));
    CHECK(decoded.topic == e.topic);
    CHECK(decoded.sender == e.sender);
    CHECK(decoded.seq == e.seq);
    CHECK(decoded.sim_time == e.sim_time);
    Order back = codec::order_from_json(decoded.payload.at("order"));
    CHECK(back.order_id == o.order_id);
    CHECK(back.side == o.side);
    CHECK(*back.limit_price == *o.limit_price);
    CHECK_FALSE(back.stop_price.has_value());
    CHECK(back.explanation == o.explanation);

    // canonical form: sorted keys, byte-stable
    CHECK(envelope_to_json(e).dump() == envelope_to_json(decoded).dump());
}

TEST_CASE("indicator frame codec round trip", "[bus][codec]") {
    IndicatorFrame f;
    f.bar_start = 60'000;
    f.sma = 101.5;
    f.rsi = 55.0;
    f.support_levels = {parse_price("99.5"), parse_price("98")};
    f.extras["typical"] = 100.25;
    auto back = codec::frame_from_json(codec::frame_to_json(f));
    CHECK(back.bar_start == f.bar_start);
    CHECK(*back.sma == 101.5);
    CHECK(*back.rsi == 55.0);
    CHECK_FALSE(back.ema.has_value());
    CHECK(back.support_levels == f.support_levels);
    CHECK(*back.extras.at("typical") == 100.25);
}

TEST_CASE("broker fan-out and isolation", "[bus][broker]") {
    Broker broker;
    auto nvda = broker.subscribe({"market.NVDA"});
    auto a1 = broker.subscribe({"exec.A1"});
    auto all_market = broker.subscribe({"market.*"});

    broker.publish(env("market.NVDA", "engine", 1));
    broker.publish(env("market.AMD", "engine", 2));
    broker.publish(env("exec.A1", "engine", 3));
    broker.publish(env("exec.A2", "engine", 4));

    CHECK(nvda->pending() == 1);
    CHECK(all_market->pending() == 2);
    // exec isolation: A1 never sees A2's reports
    REQUIRE(a1->pending() == 1);
    CHECK(a1->poll()->seq == 3);
}

TEST_CASE("per-sender FIFO order is preserved", "[bus][broker]") {
    Broker broker;
    auto sub = broker.subscribe({"engine"});
    for (std::uint64_t i = 1; i <= 50; ++i) broker.publish(env(kTopicEngine, "A1", i));
    for (std::uint64_t i = 1; i <= 50; ++i) {
        auto e = sub->poll();
        REQUIRE(e.has_value());
        CHECK(e->seq == i);
    }
}

TEST_CASE("late subscriber receives from subscription point onward", "[bus][broker]") {
    Broker broker;
    broker.publish(env("market.NVDA", "engine", 1));
    auto late = broker.subscribe({"market.NVDA"});
    broker.publish(env("market.NVDA", "engine", 2));
    REQUIRE(late->pending() == 1);
    CHECK(late->poll()->seq == 2);  // no replay of seq 1
}

TEST_CASE("dedupe filter drops redelivered duplicates", "[bus][dedupe]") {
    DedupeFilter filter;
    CHECK(filter.accept("A1", 1));
    CHECK(filter.accept("A1", 2));
    CHECK_FALSE(filter.accept("A1", 2));  // injected duplicate
    CHECK_FALSE(filter.accept("A1", 1));
    CHECK(filter.accept("A1", 3));
    CHECK(filter.accept("A2", 1));  // independent per sender
}

TEST_CASE("data request service", "[bus][request]") {
    ExternalDataStore store;
    CanonicalNewsItem n1;
    n1.published_at = 1000;
    n1.symbols = {"NVDA"};
    n1.headline = "h1";
    CanonicalNewsItem n2;
    n2.published_at = 5000;
    n2.symbols = {"NVDA"};
    n2.headline = "h2";
    store.add_news({n1, n2});

    SECTION("window query returns items inside the window") {
        auto r = answer_data_request(store, {"news", "NVDA", 0, 2000}, 10'000);
        CHECK_FALSE(r.contains("error"));
        REQUIRE(r["items"].size() == 1);
        CHECK(r["items"][0]["headline"] == "h1");
    }
    SECTION("window reaching past the clock is refused") {
        auto r = answer_data_request(store, {"news", "NVDA", 0, 20'000}, 10'000);
        REQUIRE(r.contains("error"));
        CHECK(r["error"] == "FUTURE_WINDOW");
    }
    SECTION("unknown kind") {
        auto r = answer_data_request(store, {"weather", "NVDA", 0, 1000}, 10'000);
        REQUIRE(r.contains("error"));
        CHECK(r["error"] == "UNKNOWN_KIND");
    }
    SECTION("no data loaded yields an empty list, not an error") {
        auto r = answer_data_request(store, {"fundamentals", "NVDA", 0, 1000}, 10'000);
        CHECK_FALSE(r.contains("error"));
        CHECK(r["items"].empty());
    }
}

TEST_CASE("tcp transport round trip", "[bus][tcp]") {
    TcpBusServer server(0);
    REQUIRE(server.port() != 0);

    TcpBusClient a1("127.0.0.1", server.port(), "A1", {"market.NVDA", "exec.A1", "control"});
    TcpBusClient a2("127.0.0.1", server.port(), "A2", {"market.NVDA", "exec.A2", "control"});
    REQUIRE(server.wait_connections(2, 5000));

    SECTION("agent to engine and back") {
        a1.publish(env(kTopicEngine, "A1", 1, 0, msg::tick_ack(0)));
        auto got = server.wait_inbox(5000);
        REQUIRE(got.has_value());
        CHECK(got->sender == "A1");
        CHECK(got->payload["type"] == "tick_ack");

        server.publish(env("exec.A1", "engine", 1, 0, msg::session_end()));
        auto reply = a1.wait(5000);
        REQUIRE(reply.has_value());
        CHECK(reply->payload["type"] == "session_end");
    }
    SECTION("topic isolation across connections") {
        server.publish(env("exec.A2", "engine", 1));
        auto got = a2.wait(5000);
        REQUIRE(got.has_value());
        CHECK_FALSE(a1.poll().has_value());
    }
    SECTION("broadcast reaches every subscriber") {
        server.publish(env(kTopicControl, "engine", 1, 0, msg::time_tick(0, 0, true, std::nullopt)));
        CHECK(a1.wait(5000).has_value());
        CHECK(a2.wait(5000).has_value());
    }
    SECTION("per-sender FIFO across the wire") {
        for (std::uint64_t i = 1; i <= 100; ++i)
            a1.publish(env(kTopicEngine, "A1", i));
        std::vector<Envelope> got;
        while (got.size() < 100) {
            auto e = server.wait_inbox(5000);
            REQUIRE(e.has_value());
            got.push_back(*e);
        }
        for (std::uint64_t i = 0; i < 100; ++i) CHECK(got[i].seq == i + 1);
    }
}

TEST_CASE("tcp handshake rejects unknown protocol", "[bus][tcp]") {
    TcpBusServer server(0);
    // hand-rolled client with a bad protocol version
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(server.port());
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    nlohmann::json bad = {{"type", "handshake"}, {"protocol", "99"}, {"agent_id", "X"}};
    tcp::write_frame(fd, bad.dump());
    auto ack = tcp::read_frame(fd, 1000);
    ::close(fd);
    // server closes the connection without acknowledging
    CHECK_FALSE(ack.has_value());
    CHECK(server.connected_agents().empty());
}
