#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>

#include "mixguide/service.hpp"

using namespace mixguide;

namespace {

Scenario room() {
    return scenario_from_json(Json::parse(R"({
        "name": "room", "variant": "PointMaze2D",
        "basis": {"m": 5, "n": 2, "h": 0.2}, "phases": 10,
        "start": [1, 5], "targets": [[9, 5]],
        "workspace": {"lower": [0, 0], "upper": [10, 10]},
        "geometry": {"bounds": {"lower": [0, 0], "upper": [10, 10]},
                     "walls": [{"lower": [4.5, 4], "upper": [5.5, 6]}]},
        "planning": {"learner": {"n_components": 2, "max_iterations": 30}}
    })"));
}

GuideMixture lanes(const Scenario& s) {
    GuideMixture mix;
    mix.basis = s.basis;
    const auto lane = [&](double y) {
        return ProMP{s.basis, straight_line_weights(s, s.start, (Vector(2) << 9.0, y).finished()),
                     Vector::Constant(10, 0.3)};
    };
    mix.components = {lane(7.0), lane(3.0)};
    mix.log_weights = normalize_log_weights(Vector::Zero(2));
    return attach_freelance(mix, scenario_freelance(s), 0.1);
}

ProtocolSession make_session() {
    const Scenario s = room();
    return ProtocolSession("s1", s, lanes(s), preset("maze2d"), std::make_shared<InlineExecutor>());
}

Json msg(const std::string& kind, std::int64_t seq, Json payload = Json::object(), const std::string& sid = "s1") {
    return Json{{"kind", kind}, {"session_id", sid}, {"seq", seq}, {"payload", std::move(payload)}};
}

std::string error_code(const std::vector<Json>& replies) {
    if (replies.size() != 1 || replies[0].at("kind") != "error") return "<no error>";
    return replies[0].at("payload").at("code").get<std::string>();
}

// Minimal blocking TCP client.
class Client {
public:
    explicit Client(int port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        connected_ = ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0;
        timeval tv{10, 0};
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    }
    ~Client() { ::close(fd_); }

    [[nodiscard]] bool connected() const { return connected_; }
    void send_raw(const std::string& s) const { ASSERT_EQ(::send(fd_, s.data(), s.size(), 0), ssize_t(s.size())); }
    void send_line(const Json& j) const { send_raw(j.dump() + "\n"); }

    std::string read_bytes(size_t n) {
        while (buf_.size() < n) fill();
        std::string out = buf_.substr(0, n);
        buf_.erase(0, n);
        return out;
    }
    std::string read_until(const std::string& delim) {
        size_t pos;
        while ((pos = buf_.find(delim)) == std::string::npos) fill();
        std::string out = buf_.substr(0, pos);
        buf_.erase(0, pos + delim.size());
        return out;
    }
    Json read_line() { return Json::parse(read_until("\n")); }

    // Masked client text frame.
    void send_ws(const std::string& payload) const {
        std::string f;
        f.push_back(static_cast<char>(0x81));
        if (payload.size() < 126) {
            f.push_back(static_cast<char>(0x80 | payload.size()));
        } else {
            f.push_back(static_cast<char>(0x80 | 126));
            f.push_back(static_cast<char>(payload.size() >> 8));
            f.push_back(static_cast<char>(payload.size() & 0xFF));
        }
        const char mask[4] = {0x12, 0x34, 0x56, 0x78};
        f.append(mask, 4);
        for (size_t i = 0; i < payload.size(); ++i) f.push_back(static_cast<char>(payload[i] ^ mask[i % 4]));
        send_raw(f);
    }
    std::pair<int, std::string> read_ws() {
        const std::string hdr = read_bytes(2);
        std::uint64_t len = static_cast<std::uint8_t>(hdr[1]) & 0x7F;
        if (len == 126) {
            const std::string ext = read_bytes(2);
            len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(ext[0])) << 8) | static_cast<std::uint8_t>(ext[1]);
        } else if (len == 127) {
            const std::string ext = read_bytes(8);
            len = 0;
            for (char c : ext) len = (len << 8) | static_cast<std::uint8_t>(c);
        }
        return {static_cast<std::uint8_t>(hdr[0]) & 0x0F, read_bytes(static_cast<size_t>(len))};
    }

private:
    void fill() {
        char tmp[65536];
        const ssize_t r = ::recv(fd_, tmp, sizeof tmp, 0);
        if (r <= 0) throw std::runtime_error("connection closed or timed out");
        buf_.append(tmp, static_cast<size_t>(r));
    }

    int fd_ = -1;
    bool connected_ = false;
    std::string buf_;
};

}  // namespace

TEST(WebSocket, AcceptKeyMatchesRfcExample) {
    EXPECT_EQ(websocket_accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(WebSocket, FrameLengthEncodings) {
    EXPECT_EQ(websocket_frame("hi"), std::string("\x81\x02hi", 4));
    const std::string mid = websocket_frame(std::string(300, 'a'));
    EXPECT_EQ(static_cast<std::uint8_t>(mid[1]), 126);
    EXPECT_EQ(mid.size(), 304u);
    const std::string big = websocket_frame(std::string(70000, 'a'));
    EXPECT_EQ(static_cast<std::uint8_t>(big[1]), 127);
    EXPECT_EQ(big.size(), 70010u);
    EXPECT_EQ(static_cast<std::uint8_t>(websocket_frame("", 0x8)[0]), 0x88);
}

TEST(Port, EnvironmentOverride) {
    ::unsetenv(kPortEnv);
    EXPECT_EQ(port_from_env(), kDefaultPort);
    ::setenv(kPortEnv, "9100", 1);
    EXPECT_EQ(port_from_env(), 9100);
    ::setenv(kPortEnv, "70000", 1);
    EXPECT_THROW(port_from_env(), std::invalid_argument);
    ::unsetenv(kPortEnv);
}

TEST(Protocol, HelloThenScenarioSync) {
    ProtocolSession p = make_session();
    const auto replies = p.handle(msg("hello", 0, Json{{"protocol", 1}}, ""));
    ASSERT_EQ(replies.size(), 2u);
    EXPECT_EQ(replies[0].at("kind"), "hello");
    EXPECT_EQ(replies[0].at("seq"), 0);
    EXPECT_EQ(replies[0].at("session_id"), "s1");
    EXPECT_EQ(replies[0].at("payload").at("dof"), 2);
    EXPECT_EQ(replies[0].at("payload").at("variant"), "PointMaze2D");
    EXPECT_EQ(replies[1].at("kind"), "scenario_sync");
    EXPECT_EQ(replies[1].at("seq"), 1);
    EXPECT_EQ(replies[1].at("payload").at("guides").at("plan_ids"), Json::parse("[0, 1]"));
    EXPECT_TRUE(p.greeted());
}

TEST(Protocol, PoseUpdateGetsOneFrame) {
    ProtocolSession p = make_session();
    p.handle(msg("hello", 0));
    const auto r = p.handle(msg("pose_update", 1, Json{{"pose", {1.0, 5.0}}, {"velocity", {0.0, 0.0}}}));
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].at("kind"), "guidance_frame");
    EXPECT_EQ(r[0].at("seq"), 2);
    const Json& f = r[0].at("payload");
    EXPECT_EQ(f.at("reply_to"), 1);
    EXPECT_EQ(f.at("tick"), 0);
    EXPECT_EQ(f.at("wrench").size(), 2u);
    EXPECT_NEAR(f.at("plan_belief")[0].get<double>() + f.at("plan_belief")[1].get<double>() +
                    f.at("plan_belief")[2].get<double>(),
                1.0, 1e-12);
}

TEST(Protocol, VelocityDefaultsToBackwardDifference) {
    ProtocolSession a = make_session(), b = make_session();
    a.handle(msg("hello", 0));
    b.handle(msg("hello", 0));
    a.handle(msg("pose_update", 1, Json{{"pose", {1.0, 5.0}}}));
    b.handle(msg("pose_update", 1, Json{{"pose", {1.0, 5.0}}, {"velocity", {0.0, 0.0}}}));
    // 0.01 m in one tick at 100 Hz is 1 m/s.
    const auto fa = a.handle(msg("pose_update", 2, Json{{"pose", {1.01, 5.0}}}));
    const auto fb = b.handle(msg("pose_update", 2, Json{{"pose", {1.01, 5.0}}, {"velocity", {1.0, 0.0}}}));
    for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(fa[0].at("payload").at("wrench")[j].get<double>(), fb[0].at("payload").at("wrench")[j].get<double>(),
                    1e-9);
    }
}

TEST(Protocol, ErrorsKeepTheSessionAlive) {
    ProtocolSession p = make_session();
    EXPECT_EQ(error_code(p.handle_text("{not json")), "bad_json");
    EXPECT_EQ(error_code(p.handle(Json{{"seq", 0}})), "bad_message");
    EXPECT_EQ(error_code(p.handle(msg("pose_update", 0, Json{{"pose", {1.0, 5.0}}}))), "not_greeted");
    EXPECT_EQ(error_code(p.handle(msg("hello", 1, Json{{"protocol", 2}}))), "protocol_version");
    ASSERT_EQ(p.handle(msg("hello", 2)).size(), 2u);
    EXPECT_EQ(error_code(p.handle(msg("pose_update", 2, Json{{"pose", {1.0, 5.0}}}))), "seq_order");
    EXPECT_EQ(error_code(p.handle(msg("pose_update", 3, Json{{"pose", {1.0, 5.0}}}, "s9"))), "wrong_session");
    EXPECT_EQ(error_code(p.handle(msg("guidance_frame", 4))), "unknown_kind");
    EXPECT_EQ(error_code(p.handle(msg("pose_update", 5, Json{{"pose", {1.0}}}))), "bad_pose");
    EXPECT_EQ(error_code(p.handle(msg("pose_update", 6, Json{{"pose", "here"}}))), "bad_pose");
    EXPECT_EQ(error_code(p.handle(msg("env_edit", 7, Json{{"edit", {{"action", "move"}}}}))), "bad_edit");
    const Json bad_index = Json{{"edit", {{"action", "remove"}, {"subject", "obstacle"}, {"index", 9}}}};
    EXPECT_EQ(error_code(p.handle(msg("env_edit", 8, bad_index))), "bad_edit");
    const auto ok = p.handle(msg("pose_update", 9, Json{{"pose", {1.0, 5.0}}}));
    ASSERT_EQ(ok.size(), 1u);
    EXPECT_EQ(ok[0].at("kind"), "guidance_frame");
}

TEST(Protocol, ServerSequenceIsGapless) {
    ProtocolSession p = make_session();
    std::vector<Json> all;
    auto take = [&](std::vector<Json> r) { all.insert(all.end(), r.begin(), r.end()); };
    take(p.handle(msg("hello", 0)));
    take(p.handle_text("oops"));
    for (int k = 1; k < 20; ++k) take(p.handle(msg("pose_update", 10 * k, Json{{"pose", {1.0 + 0.01 * k, 5.0}}})));
    for (size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].at("seq"), static_cast<int>(i));
}

TEST(Protocol, EnvEditLeadsToReplanNotice) {
    ProtocolSession p = make_session();
    p.handle(msg("hello", 0));
    const auto sync =
        p.handle(msg("env_edit", 1, Json{{"edit", {{"action", "remove"}, {"subject", "obstacle"}, {"index", 0}}}}));
    ASSERT_EQ(sync.size(), 1u);
    EXPECT_EQ(sync[0].at("kind"), "scenario_sync");
    EXPECT_TRUE(sync[0].at("payload").at("geometry").at("walls").empty());
    // The next tick submits the replan; the inline executor finishes at once
    // and the tick after that integrates it.
    const auto first = p.handle(msg("pose_update", 2, Json{{"pose", {1.0, 5.0}}}));
    ASSERT_EQ(first.size(), 1u);
    EXPECT_EQ(first[0].at("payload").at("events")[0].at("kind"), "replan_triggered");
    const auto r = p.handle(msg("pose_update", 3, Json{{"pose", {1.0, 5.0}}}));
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[1].at("kind"), "replan_notice");
    const Json& n = r[1].at("payload");
    EXPECT_EQ(n.at("status"), "integrated");
    EXPECT_EQ(n.at("trigger"), "env");
    EXPECT_EQ(n.at("added_plan_ids"), Json::parse("[2, 3]"));
    EXPECT_EQ(n.at("guides").at("plan_ids"), Json::parse("[2, 3]"));
}

TEST(Server, LineModeSessions) {
    const Scenario s = room();
    ServerOptions opts;
    opts.port = 0;
    TeleopServer server(s, lanes(s), preset("maze2d"), opts);
    const int port = server.start();
    ASSERT_GT(port, 0);
    Client a(port), b(port);
    ASSERT_TRUE(a.connected());
    ASSERT_TRUE(b.connected());
    a.send_line(msg("hello", 0, Json::object(), ""));
    const Json hello = a.read_line();
    EXPECT_EQ(hello.at("kind"), "hello");
    const std::string sid = hello.at("session_id");
    EXPECT_EQ(a.read_line().at("kind"), "scenario_sync");
    b.send_line(msg("hello", 0, Json::object(), ""));
    EXPECT_NE(b.read_line().at("session_id"), sid);
    b.read_line();

    std::int64_t expect_seq = 2;
    for (int k = 1; k <= 60; ++k) {
        a.send_line(msg("pose_update", k, Json{{"pose", {1.0 + 0.01 * k, 5.0}}}, sid));
        const Json f = a.read_line();
        ASSERT_EQ(f.at("kind"), "guidance_frame");
        EXPECT_EQ(f.at("seq"), expect_seq++);
        EXPECT_EQ(f.at("payload").at("tick"), k - 1);
    }
    server.stop();
}

TEST(Server, WebSocketUpgrade) {
    const Scenario s = room();
    ServerOptions opts;
    opts.port = 0;
    TeleopServer server(s, lanes(s), preset("maze2d"), opts);
    Client c(server.start());
    c.send_raw("GET / HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
               "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
    const std::string head = c.read_until("\r\n\r\n");
    EXPECT_NE(head.find("101 Switching Protocols"), std::string::npos);
    EXPECT_NE(head.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo="), std::string::npos);

    c.send_ws(msg("hello", 0, Json::object(), "").dump());
    auto [op, text] = c.read_ws();
    EXPECT_EQ(op, 1);
    const std::string sid = Json::parse(text).at("session_id");
    EXPECT_EQ(Json::parse(c.read_ws().second).at("kind"), "scenario_sync");  // large frame

    c.send_ws(msg("pose_update", 1, Json{{"pose", {1.0, 5.0}}}, sid).dump());
    EXPECT_EQ(Json::parse(c.read_ws().second).at("kind"), "guidance_frame");

    // Ping comes back as pong with the same payload.
    c.send_raw(std::string("\x89\x84\x00\x00\x00\x00ping", 10));
    auto pong = c.read_ws();
    EXPECT_EQ(pong.first, 0xA);
    EXPECT_EQ(pong.second, "ping");
    server.stop();
}

TEST(Server, EnvReplanRunsOffTheTickLoop) {
    const Scenario s = room();
    ServerOptions opts;
    opts.port = 0;
    TeleopServer server(s, lanes(s), preset("maze2d"), opts);
    Client c(server.start());
    c.send_line(msg("hello", 0, Json::object(), ""));
    const std::string sid = c.read_line().at("session_id");
    c.read_line();
    c.send_line(msg("env_edit", 1, Json{{"edit", {{"action", "remove"}, {"subject", "obstacle"}, {"index", 0}}}}, sid));
    EXPECT_EQ(c.read_line().at("kind"), "scenario_sync");
    // Keep ticking until the worker's plans arrive; bounded by wall time.
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
    std::int64_t seq = 2;
    bool notice = false;
    while (!notice && std::chrono::steady_clock::now() < deadline) {
        c.send_line(msg("pose_update", seq++, Json{{"pose", {1.0, 5.0}}}, sid));
        // A notice trails the frame it belongs to, so it shows up before the
        // reply to the next update.
        for (;;) {
            const Json m = c.read_line();
            if (m.at("kind") == "guidance_frame") break;
            ASSERT_EQ(m.at("kind"), "replan_notice");
            notice = true;
            EXPECT_EQ(m.at("payload").at("status"), "integrated");
            EXPECT_EQ(m.at("payload").at("trigger"), "env");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    EXPECT_TRUE(notice);
    server.stop();
}
