#pragma once

// Live guidance over a message stream. ProtocolSession is the transport-free
// state machine (one per connection); TeleopServer carries it over TCP as
// newline-delimited JSON or WebSocket text frames.

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mixguide/session.hpp"

namespace mixguide {

inline constexpr int kProtocolVersion = 1;
inline constexpr int kDefaultPort = 8765;
inline constexpr const char* kPortEnv = "MIXGUIDE_PORT";

/// Message envelope: {kind, session_id, seq, payload}.
Json make_message(const std::string& kind, const std::string& session_id, std::int64_t seq, Json payload);

class ProtocolSession {
public:
    ProtocolSession(std::string session_id, Scenario scenario, GuideMixture mixture, SessionConfig cfg,
                    std::shared_ptr<ReplanExecutor> executor);

    /// Handles one raw client message; returns the replies in send order.
    std::vector<Json> handle_text(const std::string& text);
    std::vector<Json> handle(const Json& msg);

    [[nodiscard]] const std::string& id() const { return id_; }
    [[nodiscard]] const SessionEngine& engine() const { return engine_; }
    [[nodiscard]] bool greeted() const { return greeted_; }

private:
    Json out(const std::string& kind, Json payload);
    Json error(const std::string& code, const std::string& message, const Json& in_reply_to = nullptr);
    Json scenario_sync();
    std::vector<Json> on_pose(const Json& msg);
    std::vector<Json> on_edit(const Json& msg);

    std::string id_;
    SessionEngine engine_;
    std::int64_t seq_ = 0;
    std::int64_t last_client_seq_ = -1;
    bool greeted_ = false;
    Vector last_pose_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = kDefaultPort;  // 0 picks a free port
    int replan_threads = 1;
};

/// Port from the environment, else the default.
int port_from_env();

class TeleopServer {
public:
    TeleopServer(Scenario scenario, GuideMixture mixture, SessionConfig cfg, ServerOptions opts = {});
    ~TeleopServer();
    TeleopServer(const TeleopServer&) = delete;
    TeleopServer& operator=(const TeleopServer&) = delete;

    /// Binds and starts the accept thread; returns the bound port.
    int start();
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();
    [[nodiscard]] int port() const { return port_; }

private:
    void accept_loop();
    void serve_connection(int fd, std::string session_id);

    Scenario scenario_;
    GuideMixture mixture_;
    SessionConfig cfg_;
    ServerOptions opts_;
    std::shared_ptr<ReplanExecutor> pool_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<std::uint64_t> next_session_{1};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::vector<std::thread> connections_;
    std::vector<int> open_fds_;
};

// WebSocket helpers (RFC 6455), exposed for tests.
std::string websocket_accept_key(const std::string& client_key);
/// Unmasked server frame carrying `payload` with the given opcode.
std::string websocket_frame(const std::string& payload, std::uint8_t opcode = 0x1);

}  // namespace mixguide
