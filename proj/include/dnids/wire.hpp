#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dnids/bytes.hpp"
#include "dnids/packet.hpp"

namespace dnids::wire {

// Frame: length u32 (payload only) | version u8 | msg_type u8 | payload
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderLen = 6;
inline constexpr std::size_t kMaxPayload = 16u * 1024 * 1024;
inline constexpr std::uint16_t kDefaultPort = 7415;

enum class MsgType : std::uint8_t {
    Hello = 0x01,
    HelloAck = 0x02,
    TrafficBatch = 0x03,
    Heartbeat = 0x04,
    Alert = 0x05,
    Ack = 0x06,
    Bye = 0x07,
    Error = 0x08,
};

std::string_view msg_type_name(MsgType t);

struct Frame {
    MsgType type = MsgType::Heartbeat;
    Bytes payload;

    bool operator==(const Frame&) const = default;
};

/// Throws Error(FrameTooLarge).
Bytes encode_frame(MsgType type, ByteView payload = {});

struct NeedMoreData {};
struct Decoded {
    Frame frame;
    std::size_t consumed = 0;
};

/// Decodes one frame from the front of `buffer`, never looking past its declared end.
/// Throws Error(BadVersion | UnknownType | FrameTooLarge); each is fatal to the session.
std::variant<Decoded, NeedMoreData> decode_frame(ByteView buffer);

/// Incremental decoder for a byte stream. After a decode error it stays failed.
class FrameDecoder {
public:
    void feed(ByteView data);
    std::optional<Frame> next();
    std::size_t buffered() const noexcept { return buf_.size() - head_; }

private:
    Bytes buf_;
    std::size_t head_ = 0;
    bool failed_ = false;
};

// ---------------------------------------------------------------------------

enum class ErrorCode : std::uint8_t {
    AuthFailed = 0x01,
    BadHello = 0x02,
    Superseded = 0x03,
    MalformedBatch = 0x04,
    InvalidIdmef = 0x05,
    ProtocolError = 0x06,
};

struct ErrorPayload {
    ErrorCode code = ErrorCode::ProtocolError;
    std::string message;
};

/// code u8 | message (UTF-8, rest of payload)
Bytes encode_error(ErrorCode code, std::string_view message = {});
ErrorPayload decode_error(ByteView payload);

using NodeId = std::array<std::uint8_t, 16>;

/// Stable node identity: FNV-1a-64(name) || FNV-1a-64(name "#" channel).
NodeId make_node_id(std::string_view name, int channel = 0);
std::string node_id_hex(const NodeId& id);

enum class NodeKind : std::uint8_t { Sensor = 0x01, Solver = 0x02 };

/// Solver registration carried after the fixed HELLO fields.
struct SolverTerms {
    std::string group;
    std::string subscription;  // filter rule text, one rule per ';'

    bool operator==(const SolverTerms&) const = default;
};

struct Hello {
    std::string token;
    NodeKind kind = NodeKind::Sensor;
    NodeId node_id{};
    std::optional<SolverTerms> solver;
    std::string name;  // human-readable node name, optional

    bool operator==(const Hello&) const = default;
};

/// token_len u16 | token | node_kind u8 | node_id[16]
///   [| name_len u16 | name [| group_len u16 | group | sub_len u16 | sub]]
Bytes encode_hello(const Hello& hello);
/// Throws Error(BadHello).
Hello decode_hello(ByteView payload);

Bytes encode_u64(std::uint64_t v);
Bytes encode_u32(std::uint32_t v);
/// Throws Error(MalformedBatch) on wrong length.
std::uint64_t decode_u64(ByteView payload);
std::uint32_t decode_u32(ByteView payload);

// ---------------------------------------------------------------------------

struct BatchRecord {
    Timestamp ts;
    std::uint32_t orig_len = 0;
    Bytes data;

    bool operator==(const BatchRecord&) const = default;
};

inline constexpr std::size_t kBatchCountLen = 4;
inline constexpr std::size_t kBatchRecordHeaderLen = 20;  // ts_sec u64, ts_usec u32, orig u32, cap u32

inline std::size_t batch_record_size(const BatchRecord& r) {
    return kBatchRecordHeaderLen + r.data.size();
}

/// Greedy packing into TRAFFIC_BATCH payloads of at most max_payload octets (count included).
/// Throws Error(RecordTooLarge) for a record that cannot fit alone.
std::vector<Bytes> batch_records(std::span<const BatchRecord> records, std::size_t max_payload);
Bytes encode_batch(std::span<const BatchRecord> records);
/// Strict: the count must match and no octet may be left over. Throws Error(MalformedBatch).
std::vector<BatchRecord> parse_batch(ByteView payload);

// ---------------------------------------------------------------------------

/// Admission control shared by every session a server accepts.
class SessionRegistry {
public:
    explicit SessionRegistry(std::string token);

    struct Outcome {
        bool accepted = false;
        Bytes reply;  // encoded HELLO_ACK or ERROR frame
        std::uint64_t session_id = 0;
        std::optional<std::uint64_t> superseded;  // live session displaced by this one
        std::optional<Hello> hello;
    };

    /// Token match yields HELLO_ACK with a fresh session id; a repeated node_id displaces
    /// the older session. Wrong token -> ERROR 0x01, malformed HELLO -> ERROR 0x02.
    Outcome handshake(ByteView hello_payload);

    /// Removes a session if it is still the live one for its node.
    void release(std::uint64_t session_id);
    bool is_live(std::uint64_t session_id) const;
    std::size_t live_count() const;

private:
    mutable std::mutex mu_;
    std::string token_;
    std::uint64_t next_id_ = 1;
    std::map<NodeId, std::uint64_t> by_node_;
};

}  // namespace dnids::wire
