#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "dnids/wire.hpp"

namespace dnids {

/// Reliable ordered byte stream. read_some returns 0 on timeout and throws
/// Error(ConnectionClosed) once the peer is gone.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void write_all(ByteView data) = 0;
    virtual std::size_t read_some(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
};

using TransportPtr = std::unique_ptr<Transport>;

/// Connected in-process pair, used to colocate a solver with the head-server.
std::pair<TransportPtr, TransportPtr> make_pipe();

TransportPtr tcp_connect(const std::string& host, std::uint16_t port);

class TcpListener {
public:
    /// Port 0 picks an ephemeral port; see port().
    TcpListener(const std::string& host, std::uint16_t port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    /// nullptr on timeout.
    TransportPtr accept(std::chrono::milliseconds timeout);
    std::uint16_t port() const noexcept { return port_; }
    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// "host:port" with the default port when omitted.
std::pair<std::string, std::uint16_t> parse_address(const std::string& text);

/// Frame-level I/O over a transport; send() may be called from several threads.
class FramedConnection {
public:
    explicit FramedConnection(TransportPtr transport) : transport_(std::move(transport)) {}

    void send(wire::MsgType type, ByteView payload = {});
    void send_raw(ByteView encoded);
    /// Next frame, or nullopt when nothing arrived within the timeout.
    /// Throws Error(ConnectionClosed) and the decoder's protocol errors.
    std::optional<wire::Frame> receive(std::chrono::milliseconds timeout);
    void close();

private:
    TransportPtr transport_;
    std::mutex send_mu_;
    wire::FrameDecoder decoder_;
};

}  // namespace dnids
