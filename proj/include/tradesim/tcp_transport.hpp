#pragma once

#include <atomic>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "tradesim/bus.hpp"

// TCP transport: length-prefixed (4-byte big-endian) UTF-8 JSON envelopes on
// a configurable port. Each agent connection opens with a handshake frame
// declaring agent_id, protocol version "1" and its topic subscriptions.

namespace tradesim {
namespace tcp {

constexpr const char* kProtocolVersion = "1";

inline bool write_frame(int fd, const std::string& body) {
    std::uint32_t len = htonl(static_cast<std::uint32_t>(body.size()));
    std::string out(reinterpret_cast<const char*>(&len), 4);
    out += body;
    std::size_t sent = 0;
    while (sent < out.size()) {
        ssize_t n = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

inline bool read_exact(int fd, char* buf, std::size_t len, int timeout_ms) {
    std::size_t got = 0;
    while (got < len) {
        if (timeout_ms >= 0) {
            pollfd pfd{fd, POLLIN, 0};
            int rc = ::poll(&pfd, 1, timeout_ms);
            if (rc <= 0) return false;
        }
        ssize_t n = ::recv(fd, buf + got, len - got, 0);
        if (n <= 0) return false;
        got += static_cast<std::size_t>(n);
    }
    return true;
}

/// Reads one frame; empty optional on timeout, error or peer close.
inline std::optional<std::string> read_frame(int fd, int timeout_ms = -1) {
    char head[4];
    if (!read_exact(fd, head, 4, timeout_ms)) return std::nullopt;
    std::uint32_t len = 0;
    std::memcpy(&len, head, 4);
    len = ntohl(len);
    if (len > 64u * 1024u * 1024u) return std::nullopt;  // refuse absurd frames
    std::string body(len, '\0');
    if (len > 0 && !read_exact(fd, body.data(), len, timeout_ms)) return std::nullopt;
    return body;
}

inline bool send_envelope(int fd, const Envelope& e) {
    return write_frame(fd, envelope_to_json(e).dump());
}

}  // namespace tcp

// ===========================================================================
// Server (engine side)
// ===========================================================================

class TcpBusServer {
public:
    explicit TcpBusServer(std::uint16_t port = 0) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw error("socket() failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw error("bind() failed");
        if (::listen(listen_fd_, 64) != 0) throw error("listen() failed");
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    ~TcpBusServer() { stop(); }

    std::uint16_t port() const { return port_; }

    /// Blocks until n agents have completed their handshake.
    bool wait_connections(std::size_t n, int timeout_ms) {
        std::unique_lock lk(m_);
        return cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                            [&] { return conns_.size() >= n; });
    }

    std::vector<std::string> connected_agents() {
        std::lock_guard lk(m_);
        std::vector<std::string> out;
        for (const auto& c : conns_) out.push_back(c->agent_id);
        return out;
    }

    /// Fan-out to every connection whose subscription matches.
    void publish(const Envelope& e) {
        std::lock_guard lk(m_);
        std::string body = envelope_to_json(e).dump();
        for (auto& c : conns_) {
            for (const auto& p : c->patterns) {
                if (topic_matches(p, e.topic)) {
                    std::lock_guard wl(c->write_m);
                    tcp::write_frame(c->fd, body);
                    break;
                }
            }
        }
    }

    /// Agent -> engine messages accumulated since the last drain.
    std::vector<Envelope> drain_inbox() {
        std::lock_guard lk(inbox_m_);
        std::vector<Envelope> out(inbox_.begin(), inbox_.end());
        inbox_.clear();
        return out;
    }

    std::optional<Envelope> wait_inbox(int timeout_ms) {
        std::unique_lock lk(inbox_m_);
        if (!inbox_cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                                [&] { return !inbox_.empty(); }))
            return std::nullopt;
        Envelope e = std::move(inbox_.front());
        inbox_.pop_front();
        return e;
    }

    void stop() {
        bool expected = false;
        if (!stopped_.compare_exchange_strong(expected, true)) return;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (accept_thread_.joinable()) accept_thread_.join();
        std::vector<std::unique_ptr<Conn>> conns;
        {
            std::lock_guard lk(m_);
            conns.swap(conns_);
        }
        for (auto& c : conns) {
            ::shutdown(c->fd, SHUT_RDWR);
            if (c->reader.joinable()) c->reader.join();
            ::close(c->fd);
        }
    }

private:
    struct Conn {
        int fd = -1;
        std::string agent_id;
        std::vector<std::string> patterns;
        std::mutex write_m;
        std::thread reader;
    };

    void accept_loop() {
        while (!stopped_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) break;
            // handshake must arrive promptly or the connection is refused
            auto frame = tcp::read_frame(fd, 10'000);
            if (!frame) {
                ::close(fd);
                continue;
            }
            auto j = nlohmann::json::parse(*frame, nullptr, false);
            if (j.is_discarded() || j.value("type", "") != "handshake" ||
                j.value("protocol", "") != tcp::kProtocolVersion) {
                ::close(fd);
                continue;
            }
            auto conn = std::make_unique<Conn>();
            conn->fd = fd;
            conn->agent_id = j.value("agent_id", "");
            for (const auto& p : j.value("subscriptions", nlohmann::json::array()))
                conn->patterns.push_back(p.get<std::string>());
            Conn* raw = conn.get();
            conn->reader = std::thread([this, raw] { reader_loop(raw); });
            tcp::write_frame(fd, nlohmann::json{{"type", "handshake_ack"}}.dump());
            {
                std::lock_guard lk(m_);
                conns_.push_back(std::move(conn));
            }
            cv_.notify_all();
        }
    }

    void reader_loop(Conn* conn) {
        while (!stopped_) {
            auto frame = tcp::read_frame(conn->fd);
            if (!frame) break;
            auto j = nlohmann::json::parse(*frame, nullptr, false);
            if (j.is_discarded()) continue;
            Envelope e;
            try {
                e = envelope_from_json(j);
            } catch (const std::exception&) {
                continue;
            }
            {
                std::lock_guard lk(inbox_m_);
                inbox_.push_back(std::move(e));
            }
            inbox_cv_.notify_all();
        }
    }

    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::thread accept_thread_;
    std::atomic<bool> stopped_{false};

    std::mutex m_;
    std::condition_variable cv_;
    std::vector<std::unique_ptr<Conn>> conns_;

    std::mutex inbox_m_;
    std::condition_variable inbox_cv_;
    std::deque<Envelope> inbox_;
};

// ===========================================================================
// Client (agent side)
// ===========================================================================

class TcpBusClient {
public:
    TcpBusClient(const std::string& host, std::uint16_t port, const std::string& agent_id,
                 const std::vector<std::string>& subscriptions) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw error("socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
            throw error("bad host address: " + host);
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw error("connect() failed: " + host + ":" + std::to_string(port));
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

        nlohmann::json hello = {{"type", "handshake"},
                                {"protocol", tcp::kProtocolVersion},
                                {"agent_id", agent_id},
                                {"subscriptions", subscriptions}};
        if (!tcp::write_frame(fd_, hello.dump())) throw error("handshake write failed");
        auto ack = tcp::read_frame(fd_, 10'000);
        if (!ack) throw error("handshake ack missing");
        reader_ = std::thread([this] { reader_loop(); });
    }

    ~TcpBusClient() { close(); }

    void publish(const Envelope& e) {
        std::lock_guard lk(write_m_);
        if (!tcp::send_envelope(fd_, e)) throw error("DISCONNECTED: publish failed");
    }

    std::optional<Envelope> poll() {
        std::lock_guard lk(q_m_);
        if (q_.empty()) return std::nullopt;
        Envelope e = std::move(q_.front());
        q_.pop_front();
        return e;
    }

    std::optional<Envelope> wait(int timeout_ms) {
        std::unique_lock lk(q_m_);
        if (!q_cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                            [&] { return !q_.empty() || closed_; }))
            return std::nullopt;
        if (q_.empty()) return std::nullopt;
        Envelope e = std::move(q_.front());
        q_.pop_front();
        return e;
    }

    void close() {
        bool expected = false;
        if (!closed_.compare_exchange_strong(expected, true)) return;
        ::shutdown(fd_, SHUT_RDWR);
        if (reader_.joinable()) reader_.join();
        ::close(fd_);
        q_cv_.notify_all();
    }

private:
    void reader_loop() {
        while (!closed_) {
            auto frame = tcp::read_frame(fd_);
            if (!frame) break;
            auto j = nlohmann::json::parse(*frame, nullptr, false);
            if (j.is_discarded()) continue;
            try {
                Envelope e = envelope_from_json(j);
                {
                    std::lock_guard lk(q_m_);
                    q_.push_back(std::move(e));
                }
                q_cv_.notify_all();
            } catch (const std::exception&) {
            }
        }
        q_cv_.notify_all();
    }

    int fd_ = -1;
    std::thread reader_;
    std::atomic<bool> closed_{false};
    std::mutex write_m_;
    std::mutex q_m_;
    std::condition_variable q_cv_;
    std::deque<Envelope> q_;
};

}  // namespace tradesim
