#include "dnids/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>

namespace dnids {

namespace {

std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

class TcpTransport final : public Transport {
public:
    explicit TcpTransport(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    ~TcpTransport() override { close(); }

    void write_all(ByteView data) override {
        std::size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error(Errc::ConnectionClosed, sys_error("send"));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::size_t read_some(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override {
        pollfd p{fd_, POLLIN, 0};
        int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r < 0) {
            if (errno == EINTR) return 0;
            throw Error(Errc::ConnectionClosed, sys_error("poll"));
        }
        if (r == 0) return 0;
        ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) return 0;
            throw Error(Errc::ConnectionClosed, sys_error("recv"));
        }
        if (n == 0) throw Error(Errc::ConnectionClosed, "peer closed");
        return static_cast<std::size_t>(n);
    }

    void close() override {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_;
};

struct PipeState {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint8_t> data[2];
    bool closed = false;
};

class PipeEnd final : public Transport {
public:
    PipeEnd(std::shared_ptr<PipeState> state, int side) : state_(std::move(state)), side_(side) {}
    ~PipeEnd() override { close(); }

    void write_all(ByteView data) override {
        std::lock_guard lock(state_->mu);
        if (state_->closed) throw Error(Errc::ConnectionClosed, "pipe closed");
        auto& q = state_->data[1 - side_];
        q.insert(q.end(), data.begin(), data.end());
        state_->cv.notify_all();
    }

    std::size_t read_some(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override {
        std::unique_lock lock(state_->mu);
        auto& q = state_->data[side_];
        state_->cv.wait_for(lock, timeout, [&] { return !q.empty() || state_->closed; });
        if (q.empty()) {
            if (state_->closed) throw Error(Errc::ConnectionClosed, "pipe closed");
            return 0;
        }
        std::size_t n = std::min(out.size(), q.size());
        std::copy_n(q.begin(), n, out.begin());
        q.erase(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
        return n;
    }

    void close() override {
        std::lock_guard lock(state_->mu);
        state_->closed = true;
        state_->cv.notify_all();
    }

private:
    std::shared_ptr<PipeState> state_;
    int side_;
};

}  // namespace

std::pair<TransportPtr, TransportPtr> make_pipe() {
    auto state = std::make_shared<PipeState>();
    return {std::make_unique<PipeEnd>(state, 0), std::make_unique<PipeEnd>(state, 1)};
}

TransportPtr tcp_connect(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string service = std::to_string(port);
    if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
        throw Error(Errc::ConnectionClosed, "resolve " + host + ": " + ::gai_strerror(rc));
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw Error(Errc::ConnectionClosed, "connect " + host + ":" + service + " failed");
    return std::make_unique<TcpTransport>(fd);
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw Error(Errc::IoFailure, sys_error("socket"));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0" || host == "*") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
    } else if (host == "localhost") {
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw Error(Errc::BadConfig, "listen address " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 64) != 0) {
        std::string msg = sys_error("bind/listen");
        ::close(fd_);
        throw Error(Errc::IoFailure, msg);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

TransportPtr TcpListener::accept(std::chrono::milliseconds timeout) {
    if (fd_ < 0) return nullptr;
    pollfd p{fd_, POLLIN, 0};
    int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r <= 0) return nullptr;
    int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return nullptr;
    return std::make_unique<TcpTransport>(fd);
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos) return {text, wire::kDefaultPort};
    std::string host = text.substr(0, colon);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("port");
    } catch (const std::exception&) {
        throw Error(Errc::BadConfig, "bad address " + text);
    }
    if (port > 65535) throw Error(Errc::BadConfig, "bad port in " + text);
    return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

void FramedConnection::send(wire::MsgType type, ByteView payload) {
    send_raw(wire::encode_frame(type, payload));
}

void FramedConnection::send_raw(ByteView encoded) {
    std::lock_guard lock(send_mu_);
    transport_->write_all(encoded);
}

std::optional<wire::Frame> FramedConnection::receive(std::chrono::milliseconds timeout) {
    if (auto f = decoder_.next()) return f;
    auto deadline = std::chrono::steady_clock::now() + timeout;
    std::uint8_t buf[65536];
    while (true) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() < 0) left = std::chrono::milliseconds(0);
        std::size_t n = transport_->read_some(buf, left);
        if (n == 0) {
            if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
            continue;
        }
        decoder_.feed({buf, n});
        if (auto f = decoder_.next()) return f;
    }
}

void FramedConnection::close() { transport_->close(); }

}  // namespace dnids
