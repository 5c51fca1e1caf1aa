#include "dnids/filter.hpp"

#include <charconv>

namespace dnids {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

unsigned parse_number(std::string_view s, unsigned max, std::string_view what) {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || v > max)
        throw Error(Errc::BadConfig, "bad " + std::string(what) + " '" + std::string(s) + "'");
    return v;
}

}  // namespace

FilterRule FilterRule::parse(std::string_view text) {
    text = trim(text);
    auto sp = text.find_first_of(" \t");
    std::string_view word = text.substr(0, sp);
    std::string_view arg = sp == std::string_view::npos ? std::string_view{} : trim(text.substr(sp));
    FilterRule r;
    auto no_arg = [&](Kind k) {
        if (!arg.empty()) throw Error(Errc::BadConfig, "rule '" + std::string(word) + "' takes no argument");
        r.kind = k;
        return r;
    };
    if (word == "all") return no_arg(Kind::All);
    if (word == "none") return no_arg(Kind::None);
    if (word == "arp") return no_arg(Kind::Arp);
    if (arg.empty()) throw Error(Errc::BadConfig, "bad filter rule '" + std::string(text) + "'");
    if (word == "ip_src" || word == "ip_dst") {
        r.kind = word == "ip_src" ? Kind::IpSrc : Kind::IpDst;
        auto slash = arg.find('/');
        auto ip = Ipv4Addr::try_parse(arg.substr(0, slash));
        if (!ip) throw Error(Errc::BadConfig, "bad address '" + std::string(arg) + "'");
        r.prefix = slash == std::string_view::npos ? 32 : static_cast<std::uint8_t>(parse_number(arg.substr(slash + 1), 32, "prefix"));
        std::uint32_t mask = r.prefix == 0 ? 0 : ~std::uint32_t{0} << (32 - r.prefix);
        r.net = Ipv4Addr{ip->value & mask};
        return r;
    }
    if (word == "proto") {
        r.kind = Kind::Proto;
        r.value = static_cast<std::uint16_t>(parse_number(arg, 255, "protocol"));
        return r;
    }
    if (word == "port") {
        r.kind = Kind::Port;
        r.value = static_cast<std::uint16_t>(parse_number(arg, 65535, "port"));
        return r;
    }
    throw Error(Errc::BadConfig, "unknown filter rule '" + std::string(word) + "'");
}

std::string FilterRule::to_string() const {
    switch (kind) {
    case Kind::All: return "all";
    case Kind::None: return "none";
    case Kind::Arp: return "arp";
    case Kind::IpSrc: return "ip_src " + net.to_string() + "/" + std::to_string(prefix);
    case Kind::IpDst: return "ip_dst " + net.to_string() + "/" + std::to_string(prefix);
    case Kind::Proto: return "proto " + std::to_string(value);
    case Kind::Port: return "port " + std::to_string(value);
    }
    return "all";
}

std::vector<FilterRule> parse_filter(std::string_view text) {
    std::vector<FilterRule> out;
    while (!text.empty()) {
        auto semi = text.find(';');
        std::string_view part = trim(text.substr(0, semi));
        if (!part.empty()) out.push_back(FilterRule::parse(part));
        if (semi == std::string_view::npos) break;
        text.remove_prefix(semi + 1);
    }
    return out;
}

std::string filter_to_string(const std::vector<FilterRule>& rules) {
    std::string out;
    for (const auto& r : rules) {
        if (!out.empty()) out += ";";
        out += r.to_string();
    }
    return out;
}

bool cidr_contains(Ipv4Addr net, std::uint8_t prefix, Ipv4Addr addr) {
    std::uint32_t mask = prefix == 0 ? 0 : ~std::uint32_t{0} << (32 - prefix);
    return (addr.value & mask) == (net.value & mask);
}

bool match_filter(const Packet& p, const std::vector<FilterRule>& rules) {
    if (rules.empty()) return true;
    const Ipv4Packet* ip = p.ipv4();
    for (const auto& r : rules) {
        switch (r.kind) {
        case FilterRule::Kind::All: return true;
        case FilterRule::Kind::None: break;
        case FilterRule::Kind::Arp:
            if (p.arp()) return true;
            break;
        case FilterRule::Kind::IpSrc:
            if (ip && cidr_contains(r.net, r.prefix, ip->src)) return true;
            break;
        case FilterRule::Kind::IpDst:
            if (ip && cidr_contains(r.net, r.prefix, ip->dst)) return true;
            break;
        case FilterRule::Kind::Proto:
            if (ip && ip->proto == r.value) return true;
            break;
        case FilterRule::Kind::Port:
            if (ip && ip->transport && (ip->transport->src_port == r.value || ip->transport->dst_port == r.value))
                return true;
            break;
        }
    }
    return false;
}

}  // namespace dnids
