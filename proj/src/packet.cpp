#include "dnids/packet.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

namespace dnids {

namespace {

bool parse_u8_decimal(std::string_view s, std::uint8_t& out) {
    if (s.empty() || s.size() > 3) return false;
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v > 255) return false;
    out = static_cast<std::uint8_t>(v);
    return true;
}

int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

void write_mac(std::span<std::uint8_t> out, std::size_t off, const MacAddr& mac) {
    std::copy(mac.octets.begin(), mac.octets.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
}

MacAddr read_mac(ByteView in, std::size_t off) {
    MacAddr m;
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(off), 6, m.octets.begin());
    return m;
}

void write_eth(std::span<std::uint8_t> out, const EthHeader& eth) {
    write_mac(out, 0, eth.dst);
    write_mac(out, 6, eth.src);
    store_be16(out, 12, eth.ethertype);
}

struct Ipv4Bounds {
    std::size_t header_off = kEthHeaderLen;
    std::size_t ihl = 20;
    std::size_t total_len = 0;
};

// Pseudo-header plus segment, for TCP/UDP checksums.
std::uint16_t transport_checksum(ByteView frame, const Ipv4Bounds& ip, std::uint8_t proto) {
    std::size_t seg_off = ip.header_off + ip.ihl;
    std::size_t seg_len = ip.total_len - ip.ihl;
    std::uint32_t sum = 0;
    sum += load_be16(frame, ip.header_off + 12);
    sum += load_be16(frame, ip.header_off + 14);
    sum += load_be16(frame, ip.header_off + 16);
    sum += load_be16(frame, ip.header_off + 18);
    sum += proto;
    sum += static_cast<std::uint32_t>(seg_len);
    return internet_checksum(frame.subspan(seg_off, seg_len), sum);
}

void fix_ipv4_checksums(std::span<std::uint8_t> frame, const Ipv4Bounds& ip, std::uint8_t proto,
                        bool transport_too) {
    store_be16(frame, ip.header_off + 10, 0);
    store_be16(frame, ip.header_off + 10,
               internet_checksum(ByteView(frame).subspan(ip.header_off, ip.ihl)));
    if (!transport_too) return;
    // Captures cut short by a snaplen cannot be re-summed; leave them alone.
    if (ip.header_off + ip.total_len > frame.size()) return;
    std::size_t seg_off = ip.header_off + ip.ihl;
    if (proto == ipproto::kTcp) {
        store_be16(frame, seg_off + 16, 0);
        store_be16(frame, seg_off + 16, transport_checksum(frame, ip, proto));
    } else if (proto == ipproto::kUdp) {
        if (load_be16(frame, seg_off + 6) == 0) return;  // checksum disabled by sender
        store_be16(frame, seg_off + 6, 0);
        std::uint16_t c = transport_checksum(frame, ip, proto);
        store_be16(frame, seg_off + 6, c == 0 ? 0xffff : c);
    }
}

}  // namespace

// ---------------------------------------------------------------------------

std::optional<MacAddr> MacAddr::try_parse(std::string_view text) {
    if (text.size() != 17) return std::nullopt;
    MacAddr m;
    for (std::size_t i = 0; i < 6; ++i) {
        std::size_t p = i * 3;
        if (i > 0 && text[p - 1] != ':' && text[p - 1] != '-') return std::nullopt;
        int hi = hex_nibble(text[p]);
        int lo = hex_nibble(text[p + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        m.octets[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return m;
}

MacAddr MacAddr::parse(std::string_view text) {
    auto m = try_parse(text);
    if (!m) throw Error(Errc::InvalidField, "bad MAC address '" + std::string(text) + "'");
    return *m;
}

std::string MacAddr::to_string() const {
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1],
                  octets[2], octets[3], octets[4], octets[5]);
    return buf;
}

std::optional<Ipv4Addr> Ipv4Addr::try_parse(std::string_view text) {
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
        std::size_t dot = text.find('.');
        if ((i < 3) != (dot != std::string_view::npos)) return std::nullopt;
        std::string_view part = text.substr(0, dot);
        std::uint8_t octet = 0;
        if (!parse_u8_decimal(part, octet)) return std::nullopt;
        value = (value << 8) | octet;
        text = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    }
    return Ipv4Addr{value};
}

Ipv4Addr Ipv4Addr::parse(std::string_view text) {
    auto a = try_parse(text);
    if (!a) throw Error(Errc::InvalidField, "bad IPv4 address '" + std::string(text) + "'");
    return *a;
}

std::string Ipv4Addr::to_string() const {
    auto o = octets();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", o[0], o[1], o[2], o[3]);
    return buf;
}

// ---------------------------------------------------------------------------

std::uint16_t internet_checksum(ByteView data, std::uint32_t initial) {
    std::uint64_t sum = initial;
    std::size_t i = 0;
    for (; i + 1 < data.size(); i += 2) sum += load_be16(data, i);
    if (i < data.size()) sum += std::uint32_t{data[i]} << 8;
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum & 0xffff);
}

Packet parse_frame(ByteView b, Timestamp ts) {
    if (b.size() < kEthHeaderLen)
        throw Error(Errc::Truncated, "frame of " + std::to_string(b.size()) + " octets");
    Packet p;
    p.ts = ts;
    p.raw.assign(b.begin(), b.end());
    p.eth.dst = read_mac(b, 0);
    p.eth.src = read_mac(b, 6);
    p.eth.ethertype = load_be16(b, 12);

    auto opaque = [&] { p.layers = OpaquePayload{Bytes(b.begin() + kEthHeaderLen, b.end())}; };

    if (p.eth.ethertype == ethertype::kArp) {
        if (b.size() < kEthHeaderLen + kArpLen) throw Error(Errc::Truncated, "ARP header");
        const std::size_t o = kEthHeaderLen;
        std::uint16_t op = load_be16(b, o + 6);
        if (load_be16(b, o) != 1 || load_be16(b, o + 2) != ethertype::kIpv4 || b[o + 4] != 6 ||
            b[o + 5] != 4 || (op != ArpPacket::kRequest && op != ArpPacket::kReply)) {
            opaque();
            return p;
        }
        ArpPacket arp;
        arp.op = op;
        arp.sender_mac = read_mac(b, o + 8);
        arp.sender_ip = Ipv4Addr{load_be32(b, o + 14)};
        arp.target_mac = read_mac(b, o + 18);
        arp.target_ip = Ipv4Addr{load_be32(b, o + 24)};
        p.layers = arp;
        return p;
    }

    if (p.eth.ethertype == ethertype::kIpv4) {
        const std::size_t o = kEthHeaderLen;
        if (b.size() < o + 20) throw Error(Errc::Truncated, "IPv4 header");
        std::size_t ihl = std::size_t{b[o] & 0x0fu} * 4;
        std::size_t total_len = load_be16(b, o + 2);
        if ((b[o] >> 4) != 4 || ihl < 20 || total_len < ihl) {
            opaque();
            return p;
        }
        if (b.size() < o + ihl) throw Error(Errc::Truncated, "IPv4 options");
        if ((load_be16(b, o + 6) & 0x3fff) != 0) {  // MF set or non-zero offset
            opaque();
            return p;
        }
        Ipv4Packet ip;
        ip.proto = b[o + 9];
        ip.src = Ipv4Addr{load_be32(b, o + 12)};
        ip.dst = Ipv4Addr{load_be32(b, o + 16)};
        const std::size_t t = o + ihl;
        if (ip.proto == ipproto::kTcp) {
            if (b.size() < t + 20) throw Error(Errc::Truncated, "TCP header");
            ip.transport = TransportPorts{load_be16(b, t), load_be16(b, t + 2), b[t + 13]};
        } else if (ip.proto == ipproto::kUdp) {
            if (b.size() < t + 8) throw Error(Errc::Truncated, "UDP header");
            ip.transport = TransportPorts{load_be16(b, t), load_be16(b, t + 2), std::nullopt};
        }
        p.layers = ip;
        return p;
    }

    opaque();
    return p;
}

Bytes serialize_frame(const Packet& p) {
    if (p.ts.usec >= 1'000'000) throw Error(Errc::InvalidField, "microseconds >= 10^6");

    if (const auto* opaque = std::get_if<OpaquePayload>(&p.layers)) {
        Bytes out(kEthHeaderLen);
        write_eth(out, p.eth);
        out.insert(out.end(), opaque->payload.begin(), opaque->payload.end());
        return out;
    }

    if (const auto* arp = p.arp()) {
        if (p.eth.ethertype != ethertype::kArp)
            throw Error(Errc::InvalidField, "ARP layer under non-ARP ethertype");
        if (arp->op != ArpPacket::kRequest && arp->op != ArpPacket::kReply)
            throw Error(Errc::InvalidField, "ARP op must be 1 or 2");
        Bytes out(kEthHeaderLen + kArpLen);
        write_eth(out, p.eth);
        const std::size_t o = kEthHeaderLen;
        store_be16(out, o, 1);
        store_be16(out, o + 2, ethertype::kIpv4);
        out[o + 4] = 6;
        out[o + 5] = 4;
        store_be16(out, o + 6, arp->op);
        write_mac(out, o + 8, arp->sender_mac);
        store_be32(out, o + 14, arp->sender_ip.value);
        write_mac(out, o + 18, arp->target_mac);
        store_be32(out, o + 24, arp->target_ip.value);
        if (p.raw.size() > out.size()) out.insert(out.end(), p.raw.begin() + 42, p.raw.end());
        return out;
    }

    const Ipv4Packet& ip = *p.ipv4();
    if (p.eth.ethertype != ethertype::kIpv4)
        throw Error(Errc::InvalidField, "IPv4 layer under non-IPv4 ethertype");
    Packet base;
    try {
        base = parse_frame(p.raw);
    } catch (const Error&) {
        throw Error(Errc::InvalidField, "IPv4 packet without a decodable raw frame");
    }
    const Ipv4Packet* orig = base.ipv4();
    if (orig == nullptr) throw Error(Errc::InvalidField, "raw frame is not IPv4");
    if (orig->transport.has_value() != ip.transport.has_value() ||
        (ip.transport && orig->transport->tcp_flags.has_value() != ip.transport->tcp_flags.has_value()))
        throw Error(Errc::InvalidField, "transport layer does not match raw frame");

    Bytes out = p.raw;
    write_eth(out, p.eth);
    Ipv4Bounds bounds;
    bounds.ihl = std::size_t{out[kEthHeaderLen] & 0x0fu} * 4;
    bounds.total_len = load_be16(out, kEthHeaderLen + 2);

    bool ip_changed = orig->src != ip.src || orig->dst != ip.dst || orig->proto != ip.proto;
    bool l4_changed = ip_changed || orig->transport != ip.transport;
    if (ip_changed) {
        out[kEthHeaderLen + 9] = ip.proto;
        store_be32(out, kEthHeaderLen + 12, ip.src.value);
        store_be32(out, kEthHeaderLen + 16, ip.dst.value);
    }
    if (l4_changed && ip.transport) {
        const std::size_t t = kEthHeaderLen + bounds.ihl;
        store_be16(out, t, ip.transport->src_port);
        store_be16(out, t + 2, ip.transport->dst_port);
        if (ip.transport->tcp_flags) out[t + 13] = *ip.transport->tcp_flags;
    }
    if (l4_changed) fix_ipv4_checksums(out, bounds, ip.proto, true);
    return out;
}

Packet make_arp_frame(std::uint16_t op, const MacAddr& eth_src, const MacAddr& eth_dst,
                      const ArpPacket& arp, Timestamp ts) {
    Packet p;
    p.ts = ts;
    p.eth = {eth_dst, eth_src, ethertype::kArp};
    ArpPacket a = arp;
    a.op = op;
    p.layers = a;
    p.raw = serialize_frame(p);
    return p;
}

Packet make_ipv4_frame(const Ipv4FrameSpec& s, Timestamp ts) {
    std::size_t l4_header = s.proto == ipproto::kTcp ? 20 : s.proto == ipproto::kUdp ? 8 : 0;
    std::size_t total = 20 + l4_header + s.payload_len;
    if (total > 0xffff) throw Error(Errc::InvalidField, "IPv4 total length above 65535");
    Bytes out(kEthHeaderLen + total, 0);
    write_eth(out, {s.dst_mac, s.src_mac, ethertype::kIpv4});
    const std::size_t o = kEthHeaderLen;
    out[o] = 0x45;
    store_be16(out, o + 2, static_cast<std::uint16_t>(total));
    store_be16(out, o + 4, s.ip_id);
    store_be16(out, o + 6, 0x4000);  // DF
    out[o + 8] = s.ttl;
    out[o + 9] = s.proto;
    store_be32(out, o + 12, s.src_ip.value);
    store_be32(out, o + 16, s.dst_ip.value);
    const std::size_t t = o + 20;
    if (s.proto == ipproto::kTcp) {
        store_be16(out, t, s.src_port);
        store_be16(out, t + 2, s.dst_port);
        store_be32(out, t + 4, 0x10000000u + s.ip_id);  // seq
        out[t + 12] = 0x50;
        out[t + 13] = s.tcp_flags;
        store_be16(out, t + 14, 65535);
    } else if (s.proto == ipproto::kUdp) {
        store_be16(out, t, s.src_port);
        store_be16(out, t + 2, s.dst_port);
        store_be16(out, t + 4, static_cast<std::uint16_t>(8 + s.payload_len));
        store_be16(out, t + 6, 0xffff);  // non-zero: recomputed below
    }
    for (std::size_t i = 0; i < s.payload_len; ++i)
        out[t + l4_header + i] = static_cast<std::uint8_t>(i & 0xff);
    fix_ipv4_checksums(out, {o, 20, total}, s.proto, true);
    return parse_frame(out, ts);
}

// ---------------------------------------------------------------------------

std::array<std::uint8_t, 13> FlowKey::octets() const {
    std::array<std::uint8_t, 13> o{};
    o[0] = proto;
    auto put = [&](std::size_t off, const Endpoint& e) {
        auto ip = e.ip.octets();
        std::copy(ip.begin(), ip.end(), o.begin() + static_cast<std::ptrdiff_t>(off));
        o[off + 4] = static_cast<std::uint8_t>(e.port >> 8);
        o[off + 5] = static_cast<std::uint8_t>(e.port);
    };
    put(1, lo);
    put(7, hi);
    return o;
}

std::string FlowKey::to_string() const {
    return std::to_string(proto) + " " + lo.ip.to_string() + ":" + std::to_string(lo.port) + " " +
           hi.ip.to_string() + ":" + std::to_string(hi.port);
}

std::optional<FlowKey> flow_key(const Packet& p) {
    const Ipv4Packet* ip = p.ipv4();
    if (ip == nullptr) return std::nullopt;
    Endpoint a{ip->src, 0};
    Endpoint b{ip->dst, 0};
    if (ip->transport && (ip->proto == ipproto::kTcp || ip->proto == ipproto::kUdp)) {
        a.port = ip->transport->src_port;
        b.port = ip->transport->dst_port;
    }
    return FlowKey::make(ip->proto, a, b);
}

}  // namespace dnids
