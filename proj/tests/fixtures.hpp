#pragma once

#include "dnids/packet.hpp"

namespace fixtures {

inline dnids::Ipv4Addr ip(int last) { return dnids::Ipv4Addr::from_octets(10, 0, 0, static_cast<std::uint8_t>(last)); }
inline dnids::MacAddr mac(int last) { return dnids::MacAddr{{2, 0, 0, 0, 0, static_cast<std::uint8_t>(last)}}; }

inline dnids::Packet tcp(int src, int dst, std::uint16_t sport, std::uint16_t dport, std::uint8_t flags,
                         dnids::Timestamp ts = {1'700'000'000, 0}, std::uint16_t ip_id = 1) {
    dnids::Ipv4FrameSpec s;
    s.src_mac = mac(src);
    s.dst_mac = mac(dst);
    s.src_ip = ip(src);
    s.dst_ip = ip(dst);
    s.proto = dnids::ipproto::kTcp;
    s.src_port = sport;
    s.dst_port = dport;
    s.tcp_flags = flags;
    s.ip_id = ip_id;
    return dnids::make_ipv4_frame(s, ts);
}

inline dnids::Packet udp(int src, int dst, std::uint16_t sport, std::uint16_t dport,
                         dnids::Timestamp ts = {1'700'000'000, 0}, std::size_t payload = 8) {
    dnids::Ipv4FrameSpec s;
    s.src_mac = mac(src);
    s.dst_mac = mac(dst);
    s.src_ip = ip(src);
    s.dst_ip = ip(dst);
    s.proto = dnids::ipproto::kUdp;
    s.src_port = sport;
    s.dst_port = dport;
    s.payload_len = payload;
    return dnids::make_ipv4_frame(s, ts);
}

/// Unicast reply "sender_ip is at sender_mac" addressed to `to`.
inline dnids::Packet arp_reply(int to, dnids::Ipv4Addr sender_ip, dnids::MacAddr sender_mac,
                               dnids::Timestamp ts = {1'700'000'000, 0}) {
    dnids::ArpPacket a;
    a.op = dnids::ArpPacket::kReply;
    a.sender_mac = sender_mac;
    a.sender_ip = sender_ip;
    a.target_mac = mac(to);
    a.target_ip = ip(to);
    return dnids::make_arp_frame(dnids::ArpPacket::kReply, sender_mac, mac(to), a, ts);
}

inline dnids::PcapRecord record(const dnids::Packet& p) { return dnids::to_pcap_record(p); }

}  // namespace fixtures
