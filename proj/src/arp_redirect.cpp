#include "dnids/arp_redirect.hpp"

#include <algorithm>
#include <cmath>

namespace dnids {

std::set<Ipv4Addr> RedirectPlan::impersonated() const {
    std::set<Ipv4Addr> out;
    for (const auto& d : directives) out.insert(d.impersonated_ip);
    return out;
}

RedirectPlan plan_redirect(const std::set<Ipv4Addr>& targets, const TruthMap& truth,
                           const MacAddr& sensor_mac, Ipv4Addr sensor_ip,
                           double repoison_interval_s) {
    if (targets.contains(sensor_ip))
        throw Error(Errc::SensorIsTarget, sensor_ip.to_string() + " is the sensor");
    for (const auto& ip : targets) {
        auto it = truth.find(ip);
        if (it == truth.end()) throw Error(Errc::UnknownTarget, ip.to_string());
        if (it->second == sensor_mac)
            throw Error(Errc::SensorIsTarget, ip.to_string() + " carries the sensor MAC");
    }
    RedirectPlan plan;
    plan.sensor_mac = sensor_mac;
    plan.sensor_ip = sensor_ip;
    plan.repoison_interval_s = repoison_interval_s;
    // std::set iteration is ascending, so directives come out sorted.
    for (const auto& victim : targets)
        for (const auto& other : targets)
            if (victim != other) plan.directives.push_back({victim, truth.at(victim), other});
    return plan;
}

std::vector<Packet> poison_frames(const RedirectPlan& plan, Timestamp ts) {
    std::vector<Packet> out;
    out.reserve(plan.directives.size());
    for (const auto& d : plan.directives) {
        ArpPacket arp;
        arp.sender_mac = plan.sensor_mac;
        arp.sender_ip = d.impersonated_ip;
        arp.target_mac = d.victim_mac;
        arp.target_ip = d.victim_ip;
        out.push_back(make_arp_frame(ArpPacket::kReply, plan.sensor_mac, d.victim_mac, arp, ts));
    }
    return out;
}

std::vector<PoisonEmission> poison_schedule(const RedirectPlan& plan, double horizon_s) {
    if (!(plan.repoison_interval_s > 0))
        throw Error(Errc::InvalidField, "repoison interval must be positive");
    std::vector<PoisonEmission> out;
    for (long k = 0;; ++k) {
        double t = static_cast<double>(k) * plan.repoison_interval_s;
        if (!(t < horizon_s)) break;
        out.push_back({t, poison_frames(plan)});
    }
    return out;
}

std::vector<ScheduledFrame> restore_frames(const RedirectPlan& plan, const TruthMap& truth) {
    std::set<std::pair<Ipv4Addr, Ipv4Addr>> seen;
    std::vector<RedirectDirective> distinct;
    for (const auto& d : plan.directives) {
        if (!truth.contains(d.impersonated_ip))
            throw Error(Errc::UnknownTarget, d.impersonated_ip.to_string());
        if (seen.insert({d.victim_ip, d.impersonated_ip}).second) distinct.push_back(d);
    }
    std::vector<ScheduledFrame> out;
    for (int r = 0; r < kRestoreRepeats; ++r) {
        for (const auto& d : distinct) {
            const MacAddr& owner = truth.at(d.impersonated_ip);
            ArpPacket arp;
            arp.sender_mac = owner;
            arp.sender_ip = d.impersonated_ip;
            arp.target_mac = d.victim_mac;
            arp.target_ip = d.victim_ip;
            // Sent from the sensor's port; the Ethernet source stays the sensor so the
            // switch does not learn the owner's MAC on the wrong port.
            out.push_back({r * kRestoreSpacing_s,
                           make_arp_frame(ArpPacket::kReply, plan.sensor_mac, d.victim_mac, arp)});
        }
    }
    return out;
}

std::optional<Packet> forward_rewrite(const Packet& p, const TruthMap& truth,
                                      const MacAddr& sensor_mac) {
    if (p.eth.dst != sensor_mac) return std::nullopt;
    if (p.eth.src == sensor_mac) return std::nullopt;  // already relayed once
    const Ipv4Packet* ip = p.ipv4();
    if (ip == nullptr) return std::nullopt;
    auto it = truth.find(ip->dst);
    if (it == truth.end()) throw Error(Errc::UnknownDestination, ip->dst.to_string());
    if (it->second == sensor_mac) return std::nullopt;  // ours
    Packet out = p;
    out.eth.dst = it->second;
    out.eth.src = sensor_mac;
    std::copy(out.eth.dst.octets.begin(), out.eth.dst.octets.end(), out.raw.begin());
    std::copy(out.eth.src.octets.begin(), out.eth.src.octets.end(), out.raw.begin() + 6);
    return out;
}

RedirectCampaign::RedirectCampaign(RedirectPlan plan, TruthMap truth)
    : plan_(std::move(plan)), truth_(std::move(truth)) {
    if (!(plan_.repoison_interval_s > 0))
        throw Error(Errc::InvalidField, "repoison interval must be positive");
}

std::vector<Packet> RedirectCampaign::poll(double now_s) {
    if (!running_) return {};
    if (last_emit_s_ && now_s < *last_emit_s_ + plan_.repoison_interval_s) return {};
    // Align on the interval grid so a late poll does not drift the schedule.
    double slot = std::floor(now_s / plan_.repoison_interval_s) * plan_.repoison_interval_s;
    last_emit_s_ = slot;
    return poison_frames(plan_);
}

std::vector<ScheduledFrame> RedirectCampaign::stop() {
    if (!running_) return {};
    running_ = false;
    return restore_frames(plan_, truth_);
}

}  // namespace dnids
