#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "dnids/arp_redirect.hpp"
#include "dnids/packet.hpp"

namespace dnids::sim {

using Tick = std::int64_t;

enum class HostRole { Endpoint, Sensor };

struct HostConfig {
    std::string id;
    Ipv4Addr ip;
    MacAddr mac;
    HostRole role = HostRole::Endpoint;
};

struct MirrorConfig {
    int port = 0;
    int capacity_frames_per_tick = 1;
};

/// Inline splitter on one host's link; copies both directions to the sensor on sensor_port.
struct TapConfig {
    int link_port = 0;
    int sensor_port = 0;
};

struct SwitchConfig {
    std::vector<std::string> ports;  // port index -> host id
    std::optional<MirrorConfig> mirror;
    std::optional<TapConfig> tap;
};

inline constexpr Tick kDefaultArpTtl = 60'000;
inline constexpr Tick kDefaultFdbTtl = 300'000;
inline constexpr Tick kArpRetryTicks = 1'000;

struct SegmentConfig {
    std::vector<HostConfig> hosts;
    SwitchConfig sw;
    std::uint64_t seed = 0;
    Tick arp_ttl_ticks = kDefaultArpTtl;
    Tick fdb_ttl_ticks = kDefaultFdbTtl;
    std::int64_t tick_us = 1000;
    std::int64_t epoch_s = 1'700'000'000;  // wall time of tick 0 in captured timestamps
};

struct FrameTemplate {
    Ipv4Addr dst_ip;
    std::uint8_t proto = ipproto::kUdp;
    std::uint16_t src_port = 0;  // 0: drawn from the seeded generator
    std::uint16_t dst_port = 0;
    std::size_t payload_len = 0;
    std::uint8_t tcp_flags = 0;
};

struct ScriptEntry {
    Tick t = 0;
    std::string src_host;
    std::variant<FrameTemplate, Bytes> frame;
};

using TrafficScript = std::vector<ScriptEntry>;

enum class EventKind {
    Injected,        // a host put a new frame on its link
    ArpResolved,     // a host cache entry was (re)written by an ARP reply
    Delivered,       // a copy reached a port
    DeliveredFinal,  // the addressed host accepted the frame
    Mirrored,        // a copy reached a monitoring port (SPAN or TAP)
    MirrorDropped,   // SPAN capacity exhausted for this tick
    Flooded,         // switch had no fdb entry or the frame was broadcast
    Forwarded,       // a sensor relayed an intercepted frame to its owner
    Consumed,        // absorbed without final delivery (ARP, sensor's own traffic, broadcast)
    Dropped,         // no host accepted the frame
    Skipped,         // script entry could not be sent
};

std::string_view event_name(EventKind kind);

struct LogEvent {
    Tick tick = 0;
    EventKind kind = EventKind::Injected;
    std::uint64_t frame_id = 0;
    int port = -1;
    std::string host;
    std::uint64_t digest = 0;
    std::string detail;

    bool operator==(const LogEvent&) const = default;
};

/// Append-only record of one segment's activity. Injected events carry the IPv4 endpoints
/// (when present) so coverage can be computed from the log alone.
class DeliveryLog {
public:
    void append(LogEvent e) { events_.push_back(std::move(e)); }

    const std::vector<LogEvent>& events() const noexcept { return events_; }
    std::size_t count(EventKind kind) const;
    /// One tab-separated line per event.
    std::string serialize() const;

    struct FrameInfo {
        Ipv4Addr src;
        Ipv4Addr dst;
    };
    void note_ipv4(std::uint64_t frame_id, FrameInfo info) { ipv4_frames_[frame_id] = info; }
    const std::map<std::uint64_t, FrameInfo>& ipv4_frames() const noexcept { return ipv4_frames_; }

private:
    std::vector<LogEvent> events_;
    std::map<std::uint64_t, FrameInfo> ipv4_frames_;
};

struct ArpEntry {
    MacAddr mac;
    Tick expires_at = 0;
};

struct SimHost {
    HostConfig config;
    int port = -1;
    std::map<Ipv4Addr, ArpEntry> arp_cache;

    /// Entry usable at tick `now` (entries at or past expires_at are not).
    std::optional<MacAddr> lookup(Ipv4Addr ip, Tick now) const;
};

struct FdbEntry {
    int port = 0;
    Tick expires_at = 0;
};

struct CoverageWindow {
    Tick from = 0;
    Tick to = INT64_MAX;  // exclusive
};

struct CoverageResult {
    std::size_t frames = 0;   // inter-pair IPv4 frames injected in the window
    std::size_t observed = 0; // of those, seen at the sensor before final delivery
    double fraction() const { return frames == 0 ? 0.0 : double(observed) / double(frames); }
};

using AddrPair = std::pair<Ipv4Addr, Ipv4Addr>;

/// Fraction of frames between listed (src, dst) pairs that reached `sensor_id`'s port or were
/// mirrored to it before the addressed host accepted them.
CoverageResult coverage(const DeliveryLog& log, const std::string& sensor_id,
                        const std::set<AddrPair>& pairs, CoverageWindow window = {});

/// All ordered pairs of distinct addresses.
std::set<AddrPair> ordered_pairs(const std::set<Ipv4Addr>& ips);

class Segment {
public:
    /// Throws Error(DuplicateAddress) for repeated ids/IPs/MACs and Error(PortConflict) when a
    /// host is missing from the switch, attached twice, or a port names an unknown host.
    explicit Segment(SegmentConfig config);

    /// Writes each ARP frame's sender mapping into the addressed host's cache.
    void apply_arp(std::span<const Packet> frames, Tick t);

    /// Queues a raw frame for transmission from `host_id` at tick `t`.
    void inject(Tick t, const std::string& host_id, Packet frame);

    /// Runs a redirect campaign from `sensor_id` starting at `start`; at `stop` (if given) the
    /// campaign is torn down and its restore frames are scheduled.
    void attach_campaign(const std::string& sensor_id, RedirectCampaign campaign, Tick start,
                         std::optional<Tick> stop = std::nullopt);

    /// Advances the clock through tick `until` (inclusive) executing the script. Entries
    /// before the current tick or after `until` are skipped. Returns the cumulative log.
    const DeliveryLog& run(const TrafficScript& script, Tick until);

    Tick now() const noexcept { return clock_; }
    const DeliveryLog& log() const noexcept { return log_; }
    const SimHost& host(const std::string& id) const;
    const std::vector<SimHost>& hosts() const noexcept { return hosts_; }
    const std::map<MacAddr, FdbEntry>& fdb() const noexcept { return fdb_; }
    TruthMap truth() const;
    const SegmentConfig& config() const noexcept { return config_; }

    /// Frames a sensor host saw: arrivals on its port, monitoring copies, and frames it
    /// originated (relayed copies are recorded once, on arrival).
    const std::vector<Packet>& observed(const std::string& host_id) const;

    Timestamp timestamp_of(Tick t) const;
    /// Digest of configuration, seed and current mutable state.
    std::uint64_t digest() const;

private:
    struct Journey;
    struct Outgoing {
        std::string host;
        std::variant<FrameTemplate, Packet> frame;
        std::uint64_t preset_id = 0;
    };
    struct Campaign {
        std::size_t host;
        RedirectCampaign campaign;
        Tick start;
        std::optional<Tick> stop;
    };

    std::size_t host_index(const std::string& id) const;
    void send_template(std::size_t host, const FrameTemplate& tpl);
    void send_arp_request(std::size_t host, Ipv4Addr ip);
    void originate(std::size_t host, Packet frame);
    void switch_ingress(Journey& j, int ingress, const Packet& frame, int depth);
    void deliver(Journey& j, int port, const Packet& frame, int depth);
    void monitor_copy(Journey& j, int port, const Packet& frame);
    void host_receive(Journey& j, std::size_t host, const Packet& frame, int depth);
    void capture(std::size_t host, const Packet& frame);
    void expire_pending();
    void log(EventKind kind, std::uint64_t frame_id, int port, const std::string& host,
             std::uint64_t digest, std::string detail = {});

    SegmentConfig config_;
    std::vector<SimHost> hosts_;
    std::vector<std::size_t> port_host_;  // port -> host index
    std::map<MacAddr, FdbEntry> fdb_;
    TruthMap truth_;
    Tick clock_ = 0;
    std::mt19937_64 rng_;
    std::uint64_t next_frame_id_ = 1;
    int mirrored_this_tick_ = 0;
    std::map<Tick, std::deque<Outgoing>> queue_;
    std::deque<Outgoing> now_queue_;
    // host -> destination ip -> frames waiting for ARP resolution
    std::map<std::size_t, std::map<Ipv4Addr, std::vector<std::pair<Tick, FrameTemplate>>>> pending_;
    std::map<std::pair<std::size_t, Ipv4Addr>, Tick> outstanding_requests_;
    std::vector<Campaign> campaigns_;
    std::map<std::size_t, std::vector<Packet>> observed_;
    DeliveryLog log_;
};

}  // namespace dnids::sim
