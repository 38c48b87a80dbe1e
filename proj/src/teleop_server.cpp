#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "mixguide/service.hpp"

namespace mixguide {

int port_from_env() {
    const char* v = std::getenv(kPortEnv);
    if (!v || !*v) return kDefaultPort;
    const int p = std::atoi(v);
    if (p < 0 || p > 65535) throw std::invalid_argument(std::string(kPortEnv) + " is not a port");
    return p;
}

std::string websocket_accept_key(const std::string& client_key) {
    const std::string src = client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(src.data()), src.size(), digest);
    unsigned char b64[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
    const int len = EVP_EncodeBlock(b64, digest, SHA_DIGEST_LENGTH);
    return std::string(reinterpret_cast<char*>(b64), static_cast<size_t>(len));
}

std::string websocket_frame(const std::string& payload, std::uint8_t opcode) {
    std::string f;
    f.push_back(static_cast<char>(0x80 | opcode));
    const std::uint64_t n = payload.size();
    if (n < 126) {
        f.push_back(static_cast<char>(n));
    } else if (n <= 0xFFFF) {
        f.push_back(126);
        f.push_back(static_cast<char>((n >> 8) & 0xFF));
        f.push_back(static_cast<char>(n & 0xFF));
    } else {
        f.push_back(127);
        for (int s = 56; s >= 0; s -= 8) f.push_back(static_cast<char>((n >> s) & 0xFF));
    }
    return f + payload;
}

namespace {

/// Buffered reader over a connected socket.
class Conn {
public:
    explicit Conn(int fd) : fd_(fd) {}

    bool fill() {
        char tmp[4096];
        const ssize_t r = ::recv(fd_, tmp, sizeof tmp, 0);
        if (r <= 0) return false;
        buf_.append(tmp, static_cast<size_t>(r));
        return true;
    }

    std::optional<std::string> line() {
        for (;;) {
            const auto pos = buf_.find('\n');
            if (pos != std::string::npos) {
                std::string l = buf_.substr(0, pos);
                buf_.erase(0, pos + 1);
                if (!l.empty() && l.back() == '\r') l.pop_back();
                return l;
            }
            if (!fill()) return std::nullopt;
        }
    }

    bool bytes(std::string& out, size_t n) {
        while (buf_.size() < n) {
            if (!fill()) return false;
        }
        out = buf_.substr(0, n);
        buf_.erase(0, n);
        return true;
    }

    bool peek_starts_with(const std::string& prefix) {
        while (buf_.size() < prefix.size()) {
            if (!fill()) return false;
        }
        return buf_.compare(0, prefix.size(), prefix) == 0;
    }

    bool send_all(const std::string& data) const {
        size_t off = 0;
        while (off < data.size()) {
            const ssize_t w = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (w <= 0) {
                if (w < 0 && errno == EINTR) continue;
                return false;
            }
            off += static_cast<size_t>(w);
        }
        return true;
    }

private:
    int fd_;
    std::string buf_;
};

struct WsMessage {
    std::uint8_t opcode = 0;
    std::string payload;
};

/// Reads one complete (possibly fragmented) message; control frames are
/// returned as they arrive.
std::optional<WsMessage> read_ws(Conn& c) {
    WsMessage msg;
    bool first = true;
    for (;;) {
        std::string hdr;
        if (!c.bytes(hdr, 2)) return std::nullopt;
        const auto b0 = static_cast<std::uint8_t>(hdr[0]);
        const auto b1 = static_cast<std::uint8_t>(hdr[1]);
        const bool fin = (b0 & 0x80) != 0;
        const std::uint8_t op = b0 & 0x0F;
        std::uint64_t len = b1 & 0x7F;
        std::string ext;
        if (len == 126) {
            if (!c.bytes(ext, 2)) return std::nullopt;
            len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(ext[0])) << 8) |
                  static_cast<std::uint8_t>(ext[1]);
        } else if (len == 127) {
            if (!c.bytes(ext, 8)) return std::nullopt;
            len = 0;
            for (char ch : ext) len = (len << 8) | static_cast<std::uint8_t>(ch);
        }
        if (len > (64u << 20)) return std::nullopt;  // refuse absurd frames
        std::string mask;
        if ((b1 & 0x80) && !c.bytes(mask, 4)) return std::nullopt;
        std::string data;
        if (!c.bytes(data, static_cast<size_t>(len))) return std::nullopt;
        if (!mask.empty()) {
            for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<char>(data[i] ^ mask[i % 4]);
        }
        if (op >= 0x8) return WsMessage{op, data};
        if (first) msg.opcode = op;
        first = false;
        msg.payload += data;
        if (fin) return msg;
    }
}

bool websocket_handshake(Conn& c) {
    std::string key;
    for (;;) {
        auto l = c.line();
        if (!l) return false;
        if (l->empty()) break;
        const auto colon = l->find(':');
        if (colon == std::string::npos) continue;
        std::string name = l->substr(0, colon);
        for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (name == "sec-websocket-key") {
            key = l->substr(colon + 1);
            key.erase(0, key.find_first_not_of(' '));
            key.erase(key.find_last_not_of(' ') + 1);
        }
    }
    if (key.empty()) {
        c.send_all("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
        return false;
    }
    return c.send_all("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                      "Sec-WebSocket-Accept: " +
                      websocket_accept_key(key) + "\r\n\r\n");
}

}  // namespace

TeleopServer::TeleopServer(Scenario scenario, GuideMixture mixture, SessionConfig cfg, ServerOptions opts)
    : scenario_(std::move(scenario)), mixture_(std::move(mixture)), cfg_(cfg), opts_(std::move(opts)) {
    pool_ = std::make_shared<WorkerPool>(opts_.replan_threads);
}

TeleopServer::~TeleopServer() { stop(); }

int TeleopServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(opts_.port));
    if (::inet_pton(AF_INET, opts_.host.c_str(), &addr.sin_addr) != 1) {
        throw std::invalid_argument("bad host address: " + opts_.host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
        const std::string err = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("cannot listen on port " + std::to_string(opts_.port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    return port_;
}

void TeleopServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard<std::mutex> lock(conn_mu_);
        for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
        threads.swap(connections_);
    }
    for (auto& t : threads) t.join();
}

void TeleopServer::wait() {
    if (acceptor_.joinable()) acceptor_.join();
}

void TeleopServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            break;
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard<std::mutex> lock(conn_mu_);
        if (!running_) {
            ::close(fd);
            break;
        }
        open_fds_.push_back(fd);
        connections_.emplace_back([this, fd, id = "s" + std::to_string(next_session_++)] { serve_connection(fd, id); });
    }
}

void TeleopServer::serve_connection(int fd, std::string session_id) {
    Conn c(fd);
    try {
        ProtocolSession session(std::move(session_id), scenario_, mixture_, cfg_, pool_);
        const bool ws = c.peek_starts_with("GET ");
        if (ws && !websocket_handshake(c)) throw std::runtime_error("handshake failed");
        const auto send = [&](const std::vector<Json>& replies) {
            for (const auto& r : replies) {
                const std::string text = r.dump();
                if (!c.send_all(ws ? websocket_frame(text) : text + "\n")) return false;
            }
            return true;
        };
        for (;;) {
            std::string text;
            if (ws) {
                auto m = read_ws(c);
                if (!m || m->opcode == 0x8) {
                    c.send_all(websocket_frame("", 0x8));
                    break;
                }
                if (m->opcode == 0x9) {
                    c.send_all(websocket_frame(m->payload, 0xA));
                    continue;
                }
                if (m->opcode != 0x1) continue;
                text = std::move(m->payload);
            } else {
                auto l = c.line();
                if (!l) break;
                if (l->empty()) continue;
                text = std::move(*l);
            }
            if (!send(session.handle_text(text))) break;
        }
    } catch (const std::exception&) {
        // The session dies with its connection.
    }
    std::lock_guard<std::mutex> lock(conn_mu_);
    ::close(fd);
    std::erase(open_fds_, fd);
}

}  // namespace mixguide
