#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dnids/packet.hpp"

namespace dnids {

/// One term of a capture or subscription filter. A rule list is a disjunction; an empty list
/// accepts everything.
struct FilterRule {
    enum class Kind { All, None, IpSrc, IpDst, Proto, Port, Arp };

    Kind kind = Kind::All;
    Ipv4Addr net;             // IpSrc / IpDst
    std::uint8_t prefix = 0;  // IpSrc / IpDst
    std::uint16_t value = 0;  // Proto / Port

    /// "all", "none", "arp", "ip_src 10.0.0.0/24", "ip_dst 10.0.0.5", "proto 6", "port 80".
    /// Throws Error(BadConfig).
    static FilterRule parse(std::string_view text);
    std::string to_string() const;

    bool operator==(const FilterRule&) const = default;
};

/// Rules separated by ';'. Blank text yields the empty (accept-all) list.
std::vector<FilterRule> parse_filter(std::string_view text);
std::string filter_to_string(const std::vector<FilterRule>& rules);

bool cidr_contains(Ipv4Addr net, std::uint8_t prefix, Ipv4Addr addr);

/// Non-IPv4 packets only match All and Arp (the latter only for ARP packets).
bool match_filter(const Packet& p, const std::vector<FilterRule>& rules);

}  // namespace dnids
