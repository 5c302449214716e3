#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>

#include "protoflow/common/hash.hpp"
#include "protoflow/gateway/blob_store.hpp"
#include "protoflow/gateway/message_store.hpp"
#include "protoflow/gateway/outbox.hpp"
#include "protoflow/gateway/provider.hpp"
#include "protoflow/gateway/rate_limiter.hpp"

using namespace protoflow;
using namespace protoflow::gateway;
using namespace std::chrono_literals;

namespace {

Instant T(const char* s) { return parse_rfc3339(s); }

NumberPool pool_of(int n) {
    NumberPool p;
    for (int i = 0; i < n; ++i) p.numbers.push_back("+1555000000" + std::to_string(i));
    return p;
}

OutboundMessage msg(int i, const std::string& to, Instant at) {
    OutboundMessage m;
    m.message_id = "out-" + std::to_string(i);
    m.to_address = to;
    m.body = "m" + std::to_string(i);
    m.created_at = at;
    return m;
}

/// Runs the outbox to empty, jumping virtual time to each wakeup.
std::vector<DispatchOutcome> drain(Outbox& box, SimGateway& gw, Instant start) {
    std::vector<DispatchOutcome> all;
    auto now = start;
    for (int guard = 0; guard < 100000; ++guard) {
        auto out = box.dispatch(now, [&](const OutboundMessage& m, Instant t) { return gw.send(m, t); });
        all.insert(all.end(), out.begin(), out.end());
        auto next = box.next_wakeup(now);
        if (!next) break;
        REQUIRE(*next > now);
        now = *next;
    }
    return all;
}

/// Oracle: the largest number of sends from one number inside any half-open
/// one-second window [t, t + 1s).
int max_per_window(const std::vector<DispatchOutcome>& outs) {
    std::map<std::string, std::vector<Instant>> by_number;
    for (const auto& o : outs) by_number[o.message.sender].push_back(o.at);
    int worst = 0;
    for (auto& [_, ts] : by_number) {
        std::sort(ts.begin(), ts.end());
        for (std::size_t i = 0; i < ts.size(); ++i) {
            int n = 0;
            for (std::size_t j = i; j < ts.size() && ts[j] < ts[i] + 1s; ++j) ++n;
            worst = std::max(worst, n);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("pool capacity") {
    CHECK(pool_capacity(pool_of(1)) == 100);
    CHECK(pool_capacity(pool_of(5)) == 500);
    CHECK(pool_capacity(pool_of(0)) == 0);
    Outbox empty(pool_of(0));
    CHECK_THROWS_AS(empty.enqueue(msg(1, "+15551234567", T("2021-09-09T00:00:00Z")), T("2021-09-09T00:00:00Z")),
                    NoCapacity);
    // Chat does not need a number.
    CHECK_NOTHROW(empty.enqueue(msg(2, "chat:abc", T("2021-09-09T00:00:00Z")), T("2021-09-09T00:00:00Z")));
}

TEST_CASE("address classification") {
    CHECK(classify_address("+15551234567") == AddressKind::phone);
    CHECK(classify_address("chat:session-1") == AddressKind::chat);
    CHECK_FALSE(classify_address("5551234567"));
    CHECK_FALSE(classify_address("+0123"));
    CHECK_FALSE(classify_address("+1555abc"));
    CHECK_FALSE(classify_address("chat:"));
    CHECK_FALSE(classify_address(""));
}

TEST_CASE("single send with idle pool leaves immediately") {
    Outbox box(pool_of(1));
    SimGateway gw;
    const auto t0 = T("2021-09-09T12:00:00Z");
    box.enqueue(msg(1, "+15551234567", t0), t0);
    auto out = box.dispatch(t0, [&](const OutboundMessage& m, Instant t) { return gw.send(m, t); });
    REQUIRE(out.size() == 1);
    CHECK(out[0].status == DispatchStatus::sent);
    CHECK(out[0].message.sent_at == t0);
    CHECK(out[0].message.sender == "+15550000000");
    CHECK(box.pending() == 0);
    CHECK_FALSE(box.next_wakeup(t0));
}

TEST_CASE("burst of 250") {
    const auto t0 = T("2021-09-09T12:00:00Z");
    SUBCASE("pool of 1 is capped at 100 per second") {
        Outbox box(pool_of(1));
        SimGateway gw;
        for (int i = 0; i < 250; ++i) box.enqueue(msg(i, "+1555100" + std::to_string(1000 + i), t0), t0);
        auto outs = drain(box, gw, t0);
        CHECK(outs.size() == 250);
        CHECK(max_per_window(outs) <= 100);
        std::map<Instant, int> per_instant;
        for (const auto& o : outs) per_instant[o.at]++;
        CHECK(per_instant == std::map<Instant, int>{{t0, 100}, {t0 + 1s, 100}, {t0 + 2s, 50}});
    }
    SUBCASE("pool of 3 drains within one second") {
        Outbox box(pool_of(3));
        SimGateway gw;
        for (int i = 0; i < 250; ++i) box.enqueue(msg(i, "+1555100" + std::to_string(1000 + i), t0), t0);
        auto outs = drain(box, gw, t0);
        CHECK(outs.size() == 250);
        CHECK(max_per_window(outs) <= 100);
        for (const auto& o : outs) CHECK(o.at < t0 + 1s);
        std::map<std::string, int> per_number;
        for (const auto& o : outs) per_number[o.message.sender]++;
        CHECK(per_number.size() == 3);
        for (const auto& [_, n] : per_number) CHECK(n >= 83);
    }
}

TEST_CASE("property: rate ceiling under random load") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 30; ++round) {
        const int numbers = 1 + static_cast<int>(rng() % 3);
        NumberPool p = pool_of(numbers);
        p.per_number_outgoing_limit = 5 + static_cast<int>(rng() % 100);
        Outbox box(p);
        SimGateway gw;
        auto now = T("2021-09-09T00:00:00Z");
        std::vector<DispatchOutcome> all;
        int id = 0;
        for (int step = 0; step < 200; ++step) {
            const int burst = static_cast<int>(rng() % 60);
            for (int i = 0; i < burst; ++i) box.enqueue(msg(id++, "+1555" + std::to_string(2000000 + rng() % 50), now), now);
            auto out = box.dispatch(now, [&](const OutboundMessage& m, Instant t) { return gw.send(m, t); });
            all.insert(all.end(), out.begin(), out.end());
            now += Duration(static_cast<std::int64_t>(rng() % 700));
        }
        auto rest = drain(box, gw, now);
        all.insert(all.end(), rest.begin(), rest.end());
        CHECK(static_cast<int>(all.size()) == id);
        CHECK(max_per_window(all) <= p.per_number_outgoing_limit);
    }
}

TEST_CASE("per-recipient FIFO with retries") {
    Outbox box(pool_of(2));
    SimGateway gw;
    const auto t0 = T("2021-09-09T12:00:00Z");
    gw.fail_next(1);
    box.enqueue(msg(1, "+15551111111", t0), t0);
    box.enqueue(msg(2, "+15551111111", t0), t0);
    box.enqueue(msg(3, "+15552222222", t0), t0);
    auto outs = drain(box, gw, t0);
    std::vector<std::string> order;
    for (const auto& r : gw.sent_to("+15551111111")) order.push_back(r.message.message_id);
    CHECK(order == std::vector<std::string>{"out-1", "out-2"});
    CHECK(gw.sent_to("+15552222222").at(0).at == t0);  // unaffected recipient is not held back
    CHECK(gw.sent_to("+15551111111").at(0).at == t0 + 1s);
}

TEST_CASE("exponential backoff") {
    const auto t0 = T("2021-09-09T12:00:00Z");
    SUBCASE("succeeds on the fifth attempt") {
        Outbox box(pool_of(1));
        SimGateway gw;
        gw.fail_next(4);
        box.enqueue(msg(1, "+15551111111", t0), t0);
        auto outs = drain(box, gw, t0);
        std::vector<Instant> at;
        for (const auto& o : outs) at.push_back(o.at);
        CHECK(at == std::vector<Instant>{t0, t0 + 1s, t0 + 3s, t0 + 7s, t0 + 15s});
        CHECK(outs.back().status == DispatchStatus::sent);
        CHECK(outs.back().message.send_attempts == 5);
    }
    SUBCASE("gives up after five attempts") {
        Outbox box(pool_of(1));
        SimGateway gw;
        gw.fail_next(5);
        box.enqueue(msg(1, "+15551111111", t0), t0);
        auto outs = drain(box, gw, t0);
        REQUIRE(outs.size() == 5);
        CHECK(outs.back().status == DispatchStatus::failed);
        for (std::size_t i = 0; i + 1 < outs.size(); ++i) CHECK(outs[i].status == DispatchStatus::retry);
        CHECK(gw.sent().empty());
        CHECK(box.pending() == 0);
    }
}

TEST_CASE("outbox snapshot round-trip") {
    const auto t0 = T("2021-09-09T12:00:00Z");
    Outbox a(pool_of(2));
    SimGateway gw;
    for (int i = 0; i < 230; ++i) a.enqueue(msg(i, "+1555300" + std::to_string(1000 + i), t0), t0);
    a.dispatch(t0, [&](const OutboundMessage& m, Instant t) { return gw.send(m, t); });
    Outbox b(pool_of(2));
    b.restore(a.encode());
    CHECK(b.encode() == a.encode());
    CHECK(b.next_wakeup(t0) == a.next_wakeup(t0));
    SimGateway ga, gb;
    auto ra = drain(a, ga, t0 + 1s);
    auto rb = drain(b, gb, t0 + 1s);
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].message == rb[i].message);
}

TEST_CASE("message store") {
    const auto t0 = T("2021-09-09T12:00:00Z");
    auto make = [&](int i) {
        InboundMessage m;
        m.message_id = "in-" + std::to_string(i);
        m.from_address = i % 2 ? "+15551111111" : "+15552222222";
        m.body = i == 3 ? "startcal 8am \xF0\x9F\x8D\xB3 caf\xC3\xA9" : "body " + std::to_string(i);
        m.received_at = t0 + std::chrono::minutes(10 * i);
        if (i == 4) m.attachments.push_back({"image/jpeg", 2048, "sha256:" + std::string(64, 'a')});
        return m;
    };
    SUBCASE("memory round-trip and filters") {
        MemoryMessageStore s;
        std::vector<StoredMessage> all;
        for (int i = 0; i < 10; ++i) {
            all.push_back(stored(make(i), i % 2 ? "p1" : "p2"));
            s.put(all.back());
        }
        auto p1 = s.load({.participant_id = "p1"});
        CHECK(p1.size() == 5);
        CHECK(s.load({.participant_id = "p1"})[1] == all[3]);
        CHECK(s.load({.participant_id = "p1"})[1].body == make(3).body);
        MessageFilter range{.from = t0 + 20min, .to = t0 + 50min};
        std::vector<StoredMessage> oracle;
        for (const auto& m : all) {
            if (m.timestamp >= t0 + 20min && m.timestamp <= t0 + 50min) oracle.push_back(m);
        }
        CHECK(s.load(range) == oracle);
        CHECK(s.load(range).size() == 4);
    }
    SUBCASE("upsert keeps one row") {
        MemoryMessageStore s;
        auto o = msg(1, "+15551111111", t0);
        s.put(stored(o));
        o.sent_at = t0 + 1s;
        o.send_attempts = 1;
        s.put(stored(o));
        CHECK(s.size() == 1);
        CHECK(s.load({})[0].sent_at == t0 + 1s);
    }
    SUBCASE("jsonl survives reopen") {
        const auto dir = std::filesystem::temp_directory_path() / "pf_store_test";
        std::filesystem::remove_all(dir);
        const auto path = (dir / "messages.jsonl").string();
        std::vector<StoredMessage> all;
        {
            JsonlMessageStore s(path);
            for (int i = 0; i < 6; ++i) {
                all.push_back(stored(make(i), "p"));
                s.put(all.back());
            }
            auto dl = stored(make(7), "", true);
            s.put(dl);
        }
        JsonlMessageStore again(path);
        CHECK(again.load({.dead_letter = false}) == all);
        CHECK(again.load({.dead_letter = true}).size() == 1);
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("blob store") {
    const auto dir = std::filesystem::temp_directory_path() / "pf_blob_test";
    std::filesystem::remove_all(dir);
    BlobStore b(dir.string());
    std::string data("\x89PNG\r\n\x1a\n\0\1\2", 11);
    auto ref = b.put(data);
    CHECK(ref == "sha256:" + sha256_hex(data));
    CHECK(b.put(data) == ref);
    CHECK(b.get(ref) == data);
    CHECK_FALSE(b.get("sha256:nothex"));
    CHECK_FALSE(b.contains("sha256:" + std::string(64, '0')));
    std::filesystem::remove_all(dir);
}

TEST_CASE("webhook parsing") {
    SUBCASE("json with inline media") {
        auto raw = parse_webhook("application/json", R"({"from":"+15551234567","body":"lunch","timestamp":"2021-09-09T12:00:00Z",
            "media":[{"content_type":"image/jpeg","data_base64":")" + base64_encode("jpegbytes") + R"("}]})");
        CHECK(raw.from == "+15551234567");
        CHECK(raw.body == "lunch");
        REQUIRE(raw.media.size() == 1);
        CHECK(raw.media[0].data == "jpegbytes");
        CHECK(raw.media[0].size == 9);
        CHECK(raw.timestamp == T("2021-09-09T12:00:00Z"));
    }
    SUBCASE("provider form encoding") {
        auto raw = parse_webhook("application/x-www-form-urlencoded",
                                 "From=%2B15551234567&Body=startcal+8am&NumMedia=1&MediaUrl0=https%3A%2F%2Fx%2Fm.jpg&"
                                 "MediaContentType0=image%2Fjpeg");
        CHECK(raw.from == "+15551234567");
        CHECK(raw.body == "startcal 8am");
        REQUIRE(raw.media.size() == 1);
        CHECK(raw.media[0].url == "https://x/m.jpg");
        CHECK(raw.media[0].media_type == "image/jpeg");
    }
    SUBCASE("missing sender") {
        CHECK_THROWS_AS(parse_webhook("application/json", R"({"body":"x"})"), std::invalid_argument);
        CHECK_THROWS_AS(parse_webhook("application/json", "{nope"), std::invalid_argument);
        CHECK_THROWS_AS(parse_webhook("application/x-www-form-urlencoded", "Body=x"), std::invalid_argument);
    }
}

TEST_CASE("base64") {
    for (const auto& s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)}) CHECK(base64_decode(base64_encode(s)) == s);
    CHECK_THROWS(base64_decode("abc"));
}

TEST_CASE("inbound rate check") {
    InboundRateCheck c(3);
    const auto t0 = T("2021-09-09T12:00:00Z");
    CHECK(c.record("+1", t0));
    CHECK(c.record("+1", t0 + 100ms));
    CHECK(c.record("+1", t0 + 200ms));
    CHECK_FALSE(c.record("+1", t0 + 300ms));
    CHECK(c.record("+1", t0 + 1100ms));
    CHECK(c.violations() == 1);
}
