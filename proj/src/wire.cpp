#include "dnids/wire.hpp"

#include "dnids/hash.hpp"

namespace dnids::wire {

std::string_view msg_type_name(MsgType t) {
    switch (t) {
    case MsgType::Hello: return "HELLO";
    case MsgType::HelloAck: return "HELLO_ACK";
    case MsgType::TrafficBatch: return "TRAFFIC_BATCH";
    case MsgType::Heartbeat: return "HEARTBEAT";
    case MsgType::Alert: return "ALERT";
    case MsgType::Ack: return "ACK";
    case MsgType::Bye: return "BYE";
    case MsgType::Error: return "ERROR";
    }
    return "?";
}

Bytes encode_frame(MsgType type, ByteView payload) {
    if (payload.size() > kMaxPayload)
        throw Error(Errc::FrameTooLarge, std::to_string(payload.size()) + " octets");
    Bytes out;
    out.reserve(kHeaderLen + payload.size());
    ByteWriter w(out);
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.u8(kVersion);
    w.u8(static_cast<std::uint8_t>(type));
    w.bytes(payload);
    return out;
}

std::variant<Decoded, NeedMoreData> decode_frame(ByteView buffer) {
    if (buffer.size() < kHeaderLen) return NeedMoreData{};
    std::uint32_t length = load_be32(buffer, 0);
    if (buffer[4] != kVersion) throw Error(Errc::BadVersion, "version " + std::to_string(buffer[4]));
    std::uint8_t type = buffer[5];
    if (type < 0x01 || type > 0x08) throw Error(Errc::UnknownType, "type " + std::to_string(type));
    if (length > kMaxPayload) throw Error(Errc::FrameTooLarge, std::to_string(length) + " octets");
    if (buffer.size() - kHeaderLen < length) return NeedMoreData{};
    Decoded d;
    d.frame.type = static_cast<MsgType>(type);
    d.frame.payload.assign(buffer.begin() + kHeaderLen, buffer.begin() + kHeaderLen + length);
    d.consumed = kHeaderLen + length;
    return d;
}

void FrameDecoder::feed(ByteView data) {
    if (head_ > 0 && head_ == buf_.size()) {
        buf_.clear();
        head_ = 0;
    } else if (head_ > (1u << 20)) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_));
        head_ = 0;
    }
    buf_.insert(buf_.end(), data.begin(), data.end());
}

std::optional<Frame> FrameDecoder::next() {
    if (failed_) throw Error(Errc::ConnectionClosed, "decoder failed earlier");
    try {
        auto r = decode_frame(ByteView(buf_).subspan(head_));
        if (std::holds_alternative<NeedMoreData>(r)) return std::nullopt;
        auto& d = std::get<Decoded>(r);
        head_ += d.consumed;
        return std::move(d.frame);
    } catch (const Error&) {
        failed_ = true;
        throw;
    }
}

// ---------------------------------------------------------------------------

Bytes encode_error(ErrorCode code, std::string_view message) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(code));
    out.insert(out.end(), message.begin(), message.end());
    return out;
}

ErrorPayload decode_error(ByteView payload) {
    if (payload.empty()) throw Error(Errc::MalformedBatch, "empty ERROR payload");
    return {static_cast<ErrorCode>(payload[0]), std::string(payload.begin() + 1, payload.end())};
}

NodeId make_node_id(std::string_view name, int channel) {
    NodeId id{};
    std::uint64_t a = fnv1a64(name);
    std::string suffixed = std::string(name) + "#" + std::to_string(channel);
    std::uint64_t b = fnv1a64(suffixed);
    for (int i = 0; i < 8; ++i) {
        id[i] = static_cast<std::uint8_t>(a >> (56 - 8 * i));
        id[8 + i] = static_cast<std::uint8_t>(b >> (56 - 8 * i));
    }
    return id;
}

std::string node_id_hex(const NodeId& id) { return to_hex(id); }

namespace {

void put_string16(ByteWriter& w, std::string_view s) {
    if (s.size() > 0xffff) throw Error(Errc::BadHello, "string too long");
    w.u16(static_cast<std::uint16_t>(s.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::string get_string16(ByteReader& r) {
    auto len = r.u16();
    auto v = r.take(len);
    return {v.begin(), v.end()};
}

}  // namespace

Bytes encode_hello(const Hello& hello) {
    Bytes out;
    ByteWriter w(out);
    put_string16(w, hello.token);
    w.u8(static_cast<std::uint8_t>(hello.kind));
    w.bytes(hello.node_id);
    if (!hello.name.empty() || hello.solver) put_string16(w, hello.name);
    if (hello.solver) {
        put_string16(w, hello.solver->group);
        put_string16(w, hello.solver->subscription);
    }
    return out;
}

Hello decode_hello(ByteView payload) {
    ByteReader r(payload, Errc::BadHello);
    Hello h;
    h.token = get_string16(r);
    if (h.token.empty()) throw Error(Errc::BadHello, "empty token");
    std::uint8_t kind = r.u8();
    if (kind != 0x01 && kind != 0x02) throw Error(Errc::BadHello, "unknown node kind");
    h.kind = static_cast<NodeKind>(kind);
    auto id = r.take(16);
    std::copy(id.begin(), id.end(), h.node_id.begin());
    if (r.remaining() > 0) h.name = get_string16(r);
    if (r.remaining() > 0) {
        SolverTerms t;
        t.group = get_string16(r);
        t.subscription = get_string16(r);
        h.solver = std::move(t);
    }
    if (r.remaining() != 0) throw Error(Errc::BadHello, "trailing octets");
    return h;
}

Bytes encode_u64(std::uint64_t v) {
    Bytes out;
    ByteWriter(out).u64(v);
    return out;
}

Bytes encode_u32(std::uint32_t v) {
    Bytes out;
    ByteWriter(out).u32(v);
    return out;
}

std::uint64_t decode_u64(ByteView payload) {
    if (payload.size() != 8) throw Error(Errc::MalformedBatch, "expected 8 octets");
    return load_be64(payload, 0);
}

std::uint32_t decode_u32(ByteView payload) {
    if (payload.size() != 4) throw Error(Errc::MalformedBatch, "expected 4 octets");
    return load_be32(payload, 0);
}

// ---------------------------------------------------------------------------

namespace {

void append_record(ByteWriter& w, const BatchRecord& r) {
    w.u64(static_cast<std::uint64_t>(r.ts.sec));
    w.u32(r.ts.usec);
    w.u32(r.orig_len);
    w.u32(static_cast<std::uint32_t>(r.data.size()));
    w.bytes(r.data);
}

}  // namespace

Bytes encode_batch(std::span<const BatchRecord> records) {
    Bytes out;
    ByteWriter w(out);
    w.u32(static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) append_record(w, r);
    return out;
}

std::vector<Bytes> batch_records(std::span<const BatchRecord> records, std::size_t max_payload) {
    std::vector<Bytes> out;
    std::size_t start = 0;
    std::size_t size = kBatchCountLen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::size_t rs = batch_record_size(records[i]);
        if (kBatchCountLen + rs > max_payload)
            throw Error(Errc::RecordTooLarge, "record of " + std::to_string(records[i].data.size()) + " octets");
        if (size + rs > max_payload) {
            out.push_back(encode_batch(records.subspan(start, i - start)));
            start = i;
            size = kBatchCountLen;
        }
        size += rs;
    }
    if (start < records.size()) out.push_back(encode_batch(records.subspan(start)));
    return out;
}

std::vector<BatchRecord> parse_batch(ByteView payload) {
    ByteReader r(payload, Errc::MalformedBatch);
    std::uint32_t count = r.u32();
    // Each record needs at least its header; reject absurd counts before allocating.
    if (count > r.remaining() / kBatchRecordHeaderLen)
        throw Error(Errc::MalformedBatch, "count exceeds payload");
    std::vector<BatchRecord> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        BatchRecord rec;
        std::uint64_t sec = r.u64();
        rec.ts.usec = r.u32();
        if (rec.ts.usec >= 1'000'000 || sec > static_cast<std::uint64_t>(INT64_MAX) / 2'000'000)
            throw Error(Errc::MalformedBatch, "bad timestamp");
        rec.ts.sec = static_cast<std::int64_t>(sec);
        rec.orig_len = r.u32();
        std::uint32_t cap = r.u32();
        if (cap == 0) throw Error(Errc::MalformedBatch, "empty record");
        auto data = r.take(cap);
        rec.data.assign(data.begin(), data.end());
        out.push_back(std::move(rec));
    }
    if (r.remaining() != 0) throw Error(Errc::MalformedBatch, "trailing octets");
    return out;
}

// ---------------------------------------------------------------------------

SessionRegistry::SessionRegistry(std::string token) : token_(std::move(token)) {}

SessionRegistry::Outcome SessionRegistry::handshake(ByteView hello_payload) {
    Outcome o;
    Hello hello;
    try {
        hello = decode_hello(hello_payload);
    } catch (const Error& e) {
        o.reply = encode_frame(MsgType::Error, encode_error(ErrorCode::BadHello, e.what()));
        return o;
    }
    if (hello.token != token_) {
        o.reply = encode_frame(MsgType::Error, encode_error(ErrorCode::AuthFailed, "bad token"));
        return o;
    }
    std::lock_guard lock(mu_);
    o.accepted = true;
    o.session_id = next_id_++;
    auto [it, inserted] = by_node_.try_emplace(hello.node_id, o.session_id);
    if (!inserted) {
        o.superseded = it->second;
        it->second = o.session_id;
    }
    o.reply = encode_frame(MsgType::HelloAck, encode_u64(o.session_id));
    o.hello = std::move(hello);
    return o;
}

void SessionRegistry::release(std::uint64_t session_id) {
    std::lock_guard lock(mu_);
    for (auto it = by_node_.begin(); it != by_node_.end(); ++it) {
        if (it->second == session_id) {
            by_node_.erase(it);
            return;
        }
    }
}

bool SessionRegistry::is_live(std::uint64_t session_id) const {
    std::lock_guard lock(mu_);
    for (const auto& [node, id] : by_node_)
        if (id == session_id) return true;
    return false;
}

std::size_t SessionRegistry::live_count() const {
    std::lock_guard lock(mu_);
    return by_node_.size();
}

}  // namespace dnids::wire
