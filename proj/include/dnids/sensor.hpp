#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dnids/arp_redirect.hpp"
#include "dnids/clock.hpp"
#include "dnids/filter.hpp"
#include "dnids/ini.hpp"
#include "dnids/transport.hpp"

namespace dnids::sensor {

/// FNV-1a-64 over the canonical key octets, modulo W. Throws Error(InvalidField) for W = 0.
std::uint32_t assign_channel(const FlowKey& key, std::uint32_t channels);
/// Channel for a captured packet; keyless packets use channel 0.
std::uint32_t channel_for(const Packet& p, std::uint32_t channels);

struct RedirectSettings {
    std::vector<Ipv4Addr> targets;
    double repoison_interval_s = 20.0;
    MacAddr sensor_mac;
    Ipv4Addr sensor_ip;
    TruthMap truth;  // true owners of the targets, as resolved before the campaign
};

/// "ip=mac" items; throws Error(BadConfig).
TruthMap parse_truth(const std::vector<std::string>& items);

struct SensorConfig {
    std::string node_id = "sensor";
    std::string head_address = "127.0.0.1:7415";
    std::string token;
    std::uint32_t channels = 1;
    std::vector<FilterRule> filter_rules;
    std::optional<RedirectSettings> redirect;
    double heartbeat_s = 10.0;

    std::size_t flush_bytes = 64 * 1024;
    std::int64_t flush_ms = 200;
    std::size_t max_unacked = 8;
    double backoff_initial_s = 1.0;
    double backoff_cap_s = 30.0;

    /// Throws Error(BadConfig).
    void validate() const;
    /// Keys: node_id, head, token, channels, filter, heartbeat_s, redirect_targets,
    /// repoison_interval_s, sensor_mac, sensor_ip, truth ("ip=mac, ...").
    static SensorConfig from_ini(const Ini& ini);
};

/// Packet supplier for a sensor; nullopt means the source is exhausted.
class CaptureSource {
public:
    virtual ~CaptureSource() = default;
    virtual std::optional<PcapRecord> next() = 0;
};

class VectorSource final : public CaptureSource {
public:
    explicit VectorSource(std::vector<PcapRecord> records) : records_(std::move(records)) {}
    std::optional<PcapRecord> next() override;

private:
    std::vector<PcapRecord> records_;
    std::size_t pos_ = 0;
};

/// Streams a pcap file.
std::unique_ptr<CaptureSource> open_pcap_source(const std::string& path);

struct SensorStats {
    std::uint64_t captured = 0;
    std::uint64_t filtered_out = 0;
    std::uint64_t records_sent = 0;   // counted once per record, however often retransmitted
    std::uint64_t batches_sent = 0;
    std::uint64_t batches_acked = 0;
    std::uint64_t batches_rejected = 0;
    std::uint64_t retransmits = 0;
    std::uint64_t heartbeats = 0;
    std::uint64_t connects = 0;
    std::uint64_t connect_failures = 0;
    std::uint64_t campaign_frames = 0;
    std::uint64_t restore_frames = 0;
    std::vector<std::uint64_t> records_per_channel;
};

/// The sensor daemon core. offer() may be called from a capture thread while another thread
/// calls pump(); all timing decisions use the injected clock.
class SensorNode {
public:
    using Connector = std::function<TransportPtr(std::uint32_t channel)>;
    /// Receives campaign and restore frames for the attached link; offset_s is the delay
    /// relative to the moment of emission.
    using FrameSink = std::function<void(const Packet& frame, double offset_s)>;

    SensorNode(SensorConfig config, Connector connect, const Clock& clock, FrameSink sink = {});
    ~SensorNode();

    SensorNode(const SensorNode&) = delete;
    SensorNode& operator=(const SensorNode&) = delete;

    void offer(const PcapRecord& rec);
    /// One non-blocking round: connect or reconnect due channels, seal due batches, send
    /// within the in-flight window, read ACKs, heartbeat, run the redirect campaign.
    void pump();
    /// Nothing staged, queued or awaiting acknowledgement.
    bool drained() const;
    /// Flushes, waits up to ack_wait for outstanding ACKs, emits restore frames, sends BYE.
    void shutdown(std::chrono::milliseconds ack_wait = std::chrono::milliseconds(5000));
    /// Drops every upstream session as if the network failed. Unacked batches are kept.
    void sever();

    SensorStats stats() const;
    /// Set once the head-server rejected our token; reconnecting is pointless.
    bool auth_rejected() const { return auth_rejected_; }
    const SensorConfig& config() const noexcept { return config_; }

private:
    struct Channel;

    void seal(Channel& ch);
    void try_connect(Channel& ch, Timestamp now);
    void disconnect(Channel& ch, Timestamp now);
    void service(Channel& ch, Timestamp now);
    void run_campaign(Timestamp now);

    SensorConfig config_;
    Connector connect_;
    const Clock& clock_;
    FrameSink sink_;
    std::optional<RedirectCampaign> campaign_;
    std::optional<Timestamp> campaign_start_;

    mutable std::mutex mu_;
    std::vector<std::unique_ptr<Channel>> channels_;
    SensorStats stats_;
    std::atomic<bool> auth_rejected_{false};
    bool shut_down_ = false;
};

struct RunOptions {
    bool stop_when_drained = true;  // return once the source is exhausted and all ACKs arrived
    std::chrono::milliseconds poll{5};
    const std::atomic<bool>* stop = nullptr;
};

/// Runs capture and transmission concurrently until the source is drained (or *stop is set),
/// then shuts down cleanly.
SensorStats run_sensor(SensorNode& node, CaptureSource& source, RunOptions opts = {});

/// Connector dialing the configured head address over TCP.
SensorNode::Connector tcp_connector(const std::string& head_address);

}  // namespace dnids::sensor
