#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dnids/bytes.hpp"

namespace dnids {

struct MacAddr {
    std::array<std::uint8_t, 6> octets{};

    static constexpr MacAddr broadcast() { return {{0xff, 0xff, 0xff, 0xff, 0xff, 0xff}}; }
    static MacAddr parse(std::string_view text);
    static std::optional<MacAddr> try_parse(std::string_view text);

    bool is_broadcast() const noexcept { return *this == broadcast(); }
    /// Lowercase, colon separated, always 17 characters.
    std::string to_string() const;

    auto operator<=>(const MacAddr&) const = default;
};

struct Ipv4Addr {
    std::uint32_t value = 0;  // host order; octets() gives network order

    static Ipv4Addr parse(std::string_view text);
    static std::optional<Ipv4Addr> try_parse(std::string_view text);
    static constexpr Ipv4Addr from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c,
                                          std::uint8_t d) {
        return {(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d};
    }

    std::array<std::uint8_t, 4> octets() const noexcept {
        return {static_cast<std::uint8_t>(value >> 24), static_cast<std::uint8_t>(value >> 16),
                static_cast<std::uint8_t>(value >> 8), static_cast<std::uint8_t>(value)};
    }
    std::string to_string() const;

    auto operator<=>(const Ipv4Addr&) const = default;
};

/// Capture time, microsecond resolution.
struct Timestamp {
    std::int64_t sec = 0;
    std::uint32_t usec = 0;

    static constexpr Timestamp from_micros(std::int64_t us) {
        std::int64_t s = us / 1'000'000;
        std::int64_t r = us % 1'000'000;
        if (r < 0) { r += 1'000'000; --s; }
        return {s, static_cast<std::uint32_t>(r)};
    }
    constexpr std::int64_t micros() const { return sec * 1'000'000 + usec; }
    constexpr double seconds() const { return static_cast<double>(sec) + usec / 1e6; }

    auto operator<=>(const Timestamp&) const = default;
};

namespace ethertype {
inline constexpr std::uint16_t kIpv4 = 0x0800;
inline constexpr std::uint16_t kArp = 0x0806;
}  // namespace ethertype

namespace ipproto {
inline constexpr std::uint8_t kIcmp = 1;
inline constexpr std::uint8_t kTcp = 6;
inline constexpr std::uint8_t kUdp = 17;
}  // namespace ipproto

namespace tcpflag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcpflag

inline constexpr std::size_t kEthHeaderLen = 14;
inline constexpr std::size_t kArpLen = 28;

struct EthHeader {
    MacAddr dst;
    MacAddr src;
    std::uint16_t ethertype = 0;

    bool operator==(const EthHeader&) const = default;
};

struct ArpPacket {
    static constexpr std::uint16_t kRequest = 1;
    static constexpr std::uint16_t kReply = 2;

    std::uint16_t op = kRequest;
    MacAddr sender_mac;
    Ipv4Addr sender_ip;
    MacAddr target_mac;
    Ipv4Addr target_ip;

    bool operator==(const ArpPacket&) const = default;
};

struct TransportPorts {
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::optional<std::uint8_t> tcp_flags;  // present for TCP only

    bool operator==(const TransportPorts&) const = default;
};

struct Ipv4Packet {
    Ipv4Addr src;
    Ipv4Addr dst;
    std::uint8_t proto = 0;
    std::optional<TransportPorts> transport;

    bool operator==(const Ipv4Packet&) const = default;
};

/// Anything the model does not decode: payload is every octet after the Ethernet header.
struct OpaquePayload {
    Bytes payload;

    bool operator==(const OpaquePayload&) const = default;
};

using Layers = std::variant<ArpPacket, Ipv4Packet, OpaquePayload>;

struct Packet {
    Timestamp ts;
    Bytes raw;
    EthHeader eth;
    Layers layers{OpaquePayload{}};

    const ArpPacket* arp() const { return std::get_if<ArpPacket>(&layers); }
    const Ipv4Packet* ipv4() const { return std::get_if<Ipv4Packet>(&layers); }
    Ipv4Packet* ipv4() { return std::get_if<Ipv4Packet>(&layers); }
    bool is_tcp() const { return ipv4() != nullptr && ipv4()->proto == ipproto::kTcp; }

    bool operator==(const Packet&) const = default;
};

/// Decodes Ethernet, then ARP or IPv4 (+TCP/UDP ports). IPv4 fragments, options-bearing
/// headers we cannot bound and every other ethertype come back as OpaquePayload.
/// Throws Error(Truncated) when a header we do decode runs past the input.
Packet parse_frame(ByteView bytes, Timestamp ts = {});

/// Writes the parsed fields over `raw` (or builds from fields when raw is empty for ARP and
/// opaque frames). IPv4/TCP/UDP checksums are recomputed only when an IP-layer field differs
/// from what `raw` carries. Throws Error(InvalidField) for inconsistent packets.
Bytes serialize_frame(const Packet& p);

Packet make_arp_frame(std::uint16_t op, const MacAddr& eth_src, const MacAddr& eth_dst,
                      const ArpPacket& arp, Timestamp ts = {});

struct Ipv4FrameSpec {
    MacAddr src_mac;
    MacAddr dst_mac;
    Ipv4Addr src_ip;
    Ipv4Addr dst_ip;
    std::uint8_t proto = ipproto::kTcp;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t tcp_flags = 0;
    std::size_t payload_len = 0;
    std::uint16_t ip_id = 0;
    std::uint8_t ttl = 64;
};

/// Builds a well-formed Ethernet/IPv4 frame with valid checksums; TCP and UDP get
/// minimal transport headers, other protocols carry the payload directly.
Packet make_ipv4_frame(const Ipv4FrameSpec& spec, Timestamp ts = {});

std::uint16_t internet_checksum(ByteView data, std::uint32_t initial = 0);

// ---------------------------------------------------------------------------

struct Endpoint {
    Ipv4Addr ip;
    std::uint16_t port = 0;

    auto operator<=>(const Endpoint&) const = default;
};

/// Direction-canonical 5-tuple: lo <= hi.
struct FlowKey {
    std::uint8_t proto = 0;
    Endpoint lo;
    Endpoint hi;

    static FlowKey make(std::uint8_t proto, Endpoint a, Endpoint b) {
        if (b < a) std::swap(a, b);
        return {proto, a, b};
    }

    /// proto || lo.ip || lo.port || hi.ip || hi.port, network order.
    std::array<std::uint8_t, 13> octets() const;
    std::string to_string() const;

    auto operator<=>(const FlowKey&) const = default;
};

std::optional<FlowKey> flow_key(const Packet& p);

// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kPcapMagic = 0xa1b2c3d4;
inline constexpr std::uint32_t kPcapMagicSwapped = 0xd4c3b2a1;
inline constexpr std::uint32_t kPcapSnaplen = 65535;
inline constexpr std::uint32_t kLinktypeEthernet = 1;

struct PcapRecord {
    Timestamp ts;
    std::uint32_t orig_len = 0;
    Bytes data;

    bool operator==(const PcapRecord&) const = default;
};

/// Pulls records one at a time from a classic pcap stream.
class PcapReader {
public:
    /// Reads and checks the global header. Throws Error(BadMagic) / Error(Truncated).
    explicit PcapReader(std::istream& in);

    /// Next record, or nullopt at a clean end of file. Throws Error(TruncatedRecord)
    /// when the file ends inside a record.
    std::optional<PcapRecord> next();

    bool byte_swapped() const noexcept { return swapped_; }
    std::uint32_t linktype() const noexcept { return linktype_; }
    std::uint32_t snaplen() const noexcept { return snaplen_; }

private:
    std::uint32_t fix(std::uint32_t v) const noexcept;

    std::istream& in_;
    bool swapped_ = false;
    std::uint32_t snaplen_ = 0;
    std::uint32_t linktype_ = 0;
};

/// Raised by read_pcap when a record is torn; carries every record before the tear.
class PcapTruncated : public Error {
public:
    PcapTruncated(std::vector<PcapRecord> partial, const std::string& what)
        : Error(Errc::TruncatedRecord, what), partial_(std::move(partial)) {}

    const std::vector<PcapRecord>& partial() const noexcept { return partial_; }

private:
    std::vector<PcapRecord> partial_;
};

std::vector<PcapRecord> read_pcap(std::istream& in);
std::vector<PcapRecord> read_pcap_file(const std::string& path);

/// Big-endian classic pcap, version 2.4, linktype Ethernet.
/// Throws Error(RecordTooLarge) for records above the 65535 snaplen.
void write_pcap(std::ostream& out, std::span<const PcapRecord> records);
Bytes write_pcap(std::span<const PcapRecord> records);
void write_pcap_file(const std::string& path, std::span<const PcapRecord> records);

PcapRecord to_pcap_record(const Packet& p);

}  // namespace dnids
