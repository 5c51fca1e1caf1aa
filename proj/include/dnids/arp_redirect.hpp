#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "dnids/packet.hpp"

namespace dnids {

/// Ground-truth addressing of the segment: one MAC per IP.
using TruthMap = std::map<Ipv4Addr, MacAddr>;

struct RedirectDirective {
    Ipv4Addr victim_ip;
    MacAddr victim_mac;
    Ipv4Addr impersonated_ip;

    auto operator<=>(const RedirectDirective&) const = default;
};

struct RedirectPlan {
    MacAddr sensor_mac;
    Ipv4Addr sensor_ip;
    std::vector<RedirectDirective> directives;  // sorted by (victim_ip, impersonated_ip)
    double repoison_interval_s = 20.0;

    /// Distinct impersonated addresses, ascending.
    std::set<Ipv4Addr> impersonated() const;

    bool operator==(const RedirectPlan&) const = default;
};

/// Every ordered pair (A, B) of distinct targets yields "tell A that B is at sensor_mac".
/// Throws Error(UnknownTarget) if a target is missing from `truth`,
/// Error(SensorIsTarget) if the sensor itself is listed or shares a victim's MAC.
RedirectPlan plan_redirect(const std::set<Ipv4Addr>& targets, const TruthMap& truth,
                           const MacAddr& sensor_mac, Ipv4Addr sensor_ip,
                           double repoison_interval_s = 20.0);

/// One unsolicited unicast ARP reply per directive.
std::vector<Packet> poison_frames(const RedirectPlan& plan, Timestamp ts = {});

struct PoisonEmission {
    double t_s = 0.0;
    std::vector<Packet> frames;
};

/// Emissions at 0, interval, 2*interval, ... strictly below the horizon.
std::vector<PoisonEmission> poison_schedule(const RedirectPlan& plan, double horizon_s);

inline constexpr int kRestoreRepeats = 3;
inline constexpr double kRestoreSpacing_s = 0.5;

struct ScheduledFrame {
    double offset_s = 0.0;
    Packet frame;
};

/// Corrective replies carrying the true MAC: each distinct (victim, impersonated) pair is
/// repeated kRestoreRepeats times, kRestoreSpacing_s apart. Throws Error(UnknownTarget).
std::vector<ScheduledFrame> restore_frames(const RedirectPlan& plan, const TruthMap& truth);

/// Relays a frame the sensor intercepted to its true owner by rewriting the Ethernet
/// addresses only. Returns nullopt for frames that are the sensor's own (addressed to an IP
/// whose true MAC is sensor_mac), non-IPv4 frames, frames not addressed to sensor_mac, and
/// frames already sent by the sensor. Throws Error(UnknownDestination).
std::optional<Packet> forward_rewrite(const Packet& p, const TruthMap& truth,
                                      const MacAddr& sensor_mac);

/// Drives a plan over time: repoisons on its interval and restores on stop().
class RedirectCampaign {
public:
    RedirectCampaign(RedirectPlan plan, TruthMap truth);

    /// Frames due at `now_s` (seconds since the campaign started); empty when not due.
    std::vector<Packet> poll(double now_s);
    /// Restore frames with their offsets; the campaign emits nothing afterwards.
    std::vector<ScheduledFrame> stop();

    bool running() const noexcept { return running_; }
    const RedirectPlan& plan() const noexcept { return plan_; }

private:
    RedirectPlan plan_;
    TruthMap truth_;
    std::optional<double> last_emit_s_;
    bool running_ = true;
};

}  // namespace dnids
