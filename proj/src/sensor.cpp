#include "dnids/sensor.hpp"

#include <fstream>
#include <set>
#include <thread>

#include "dnids/hash.hpp"

namespace dnids::sensor {

using namespace std::chrono_literals;

std::uint32_t assign_channel(const FlowKey& key, std::uint32_t channels) {
    if (channels == 0) throw Error(Errc::InvalidField, "channel count must be positive");
    auto o = key.octets();
    return static_cast<std::uint32_t>(fnv1a64(ByteView(o.data(), o.size())) % channels);
}

std::uint32_t channel_for(const Packet& p, std::uint32_t channels) {
    auto key = flow_key(p);
    if (!key) {
        if (channels == 0) throw Error(Errc::InvalidField, "channel count must be positive");
        return 0;
    }
    return assign_channel(*key, channels);
}

void SensorConfig::validate() const {
    if (node_id.empty()) throw Error(Errc::BadConfig, "node_id is empty");
    if (token.empty()) throw Error(Errc::BadConfig, "token is empty");
    if (channels < 1) throw Error(Errc::BadConfig, "channels must be at least 1");
    if (!(heartbeat_s > 0)) throw Error(Errc::BadConfig, "heartbeat_s must be positive");
    if (flush_bytes == 0 || flush_ms <= 0) throw Error(Errc::BadConfig, "flush thresholds must be positive");
    if (max_unacked == 0) throw Error(Errc::BadConfig, "max_unacked must be positive");
    if (redirect && redirect->targets.empty()) throw Error(Errc::BadConfig, "redirect has no targets");
}

TruthMap parse_truth(const std::vector<std::string>& items) {
    TruthMap truth;
    for (const auto& item : items) {
        auto eq = item.find('=');
        auto ip = eq == std::string::npos ? std::nullopt : Ipv4Addr::try_parse(trim_copy(item.substr(0, eq)));
        auto mac = eq == std::string::npos ? std::nullopt : MacAddr::try_parse(trim_copy(item.substr(eq + 1)));
        if (!ip || !mac) throw Error(Errc::BadConfig, "bad truth entry '" + item + "'");
        truth[*ip] = *mac;
    }
    return truth;
}

SensorConfig SensorConfig::from_ini(const Ini& ini) {
    SensorConfig c;
    c.node_id = ini.get_or("node_id", c.node_id);
    c.head_address = ini.get_or("head", c.head_address);
    c.token = ini.get_or("token", "");
    long long w = ini.get_int("channels", 1);
    if (w < 1 || w > 1024) throw Error(Errc::BadConfig, "channels must be in [1, 1024]");
    c.channels = static_cast<std::uint32_t>(w);
    c.filter_rules = parse_filter(ini.get_or("filter", ""));
    c.heartbeat_s = ini.get_double("heartbeat_s", c.heartbeat_s);
    c.flush_bytes = static_cast<std::size_t>(ini.get_int("flush_bytes", static_cast<long long>(c.flush_bytes)));
    c.flush_ms = ini.get_int("flush_ms", c.flush_ms);
    auto targets = ini.get_list("redirect_targets");
    if (!targets.empty()) {
        RedirectSettings r;
        for (const auto& t : targets) {
            auto ip = Ipv4Addr::try_parse(t);
            if (!ip) throw Error(Errc::BadConfig, "bad redirect target '" + t + "'");
            r.targets.push_back(*ip);
        }
        r.repoison_interval_s = ini.get_double("repoison_interval_s", r.repoison_interval_s);
        auto mac = MacAddr::try_parse(ini.require("sensor_mac"));
        auto ip = Ipv4Addr::try_parse(ini.require("sensor_ip"));
        if (!mac || !ip) throw Error(Errc::BadConfig, "bad sensor_mac or sensor_ip");
        r.sensor_mac = *mac;
        r.sensor_ip = *ip;
        r.truth = parse_truth(ini.get_list("truth"));
        c.redirect = std::move(r);
    }
    c.validate();
    return c;
}

std::optional<PcapRecord> VectorSource::next() {
    if (pos_ >= records_.size()) return std::nullopt;
    return records_[pos_++];
}

namespace {

class PcapFileSource final : public CaptureSource {
public:
    explicit PcapFileSource(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw Error(Errc::IoFailure, "cannot open " + path);
        reader_.emplace(in_);
    }
    std::optional<PcapRecord> next() override { return reader_->next(); }

private:
    std::ifstream in_;
    std::optional<PcapReader> reader_;
};

double seconds_between(Timestamp a, Timestamp b) { return static_cast<double>(b.micros() - a.micros()) / 1e6; }

Timestamp plus_seconds(Timestamp t, double s) {
    return Timestamp::from_micros(t.micros() + static_cast<std::int64_t>(s * 1e6));
}

}  // namespace

std::unique_ptr<CaptureSource> open_pcap_source(const std::string& path) {
    return std::make_unique<PcapFileSource>(path);
}

// ---------------------------------------------------------------------------

struct SensorNode::Channel {
    struct Batch {
        Bytes payload;
        std::uint32_t count = 0;
        bool sent_before = false;
    };

    std::uint32_t index = 0;
    std::unique_ptr<FramedConnection> conn;
    std::vector<wire::BatchRecord> staged;
    std::size_t staged_bytes = wire::kBatchCountLen;
    std::optional<Timestamp> staged_since;
    std::deque<Batch> ready;
    std::deque<Batch> unacked;
    Timestamp next_attempt{0, 0};
    double backoff_s = 1.0;
    Timestamp last_heartbeat{0, 0};
};

SensorNode::SensorNode(SensorConfig config, Connector connect, const Clock& clock, FrameSink sink)
    : config_(std::move(config)), connect_(std::move(connect)), clock_(clock), sink_(std::move(sink)) {
    config_.validate();
    if (config_.redirect) {
        const auto& r = *config_.redirect;
        std::set<Ipv4Addr> targets(r.targets.begin(), r.targets.end());
        auto plan = plan_redirect(targets, r.truth, r.sensor_mac, r.sensor_ip, r.repoison_interval_s);
        campaign_.emplace(std::move(plan), r.truth);
    }
    for (std::uint32_t i = 0; i < config_.channels; ++i) {
        auto ch = std::make_unique<Channel>();
        ch->index = i;
        ch->backoff_s = config_.backoff_initial_s;
        channels_.push_back(std::move(ch));
    }
    stats_.records_per_channel.assign(config_.channels, 0);
}

SensorNode::~SensorNode() {
    for (auto& ch : channels_)
        if (ch->conn) ch->conn->close();
}

void SensorNode::offer(const PcapRecord& rec) {
    std::lock_guard lock(mu_);
    ++stats_.captured;
    Packet p;
    try {
        p = parse_frame(rec.data, rec.ts);
    } catch (const Error&) {
        ++stats_.filtered_out;  // shorter than an Ethernet header
        return;
    }
    if (!match_filter(p, config_.filter_rules)) {
        ++stats_.filtered_out;
        return;
    }
    Channel& ch = *channels_[channel_for(p, config_.channels)];
    wire::BatchRecord br{rec.ts, rec.orig_len == 0 ? static_cast<std::uint32_t>(rec.data.size()) : rec.orig_len,
                         rec.data};
    std::size_t size = wire::batch_record_size(br);
    if (!ch.staged.empty() && ch.staged_bytes + size > config_.flush_bytes) seal(ch);
    if (ch.staged.empty()) ch.staged_since = clock_.now();
    ch.staged.push_back(std::move(br));
    ch.staged_bytes += size;
    ++stats_.records_per_channel[ch.index];
    if (ch.staged_bytes >= config_.flush_bytes) seal(ch);
}

void SensorNode::seal(Channel& ch) {
    if (ch.staged.empty()) return;
    ch.ready.push_back({wire::encode_batch(ch.staged), static_cast<std::uint32_t>(ch.staged.size()), false});
    ch.staged.clear();
    ch.staged_bytes = wire::kBatchCountLen;
    ch.staged_since.reset();
}

void SensorNode::try_connect(Channel& ch, Timestamp now) {
    try {
        auto conn = std::make_unique<FramedConnection>(connect_(ch.index));
        wire::Hello hello{config_.token, wire::NodeKind::Sensor, wire::make_node_id(config_.node_id, static_cast<int>(ch.index)),
                          std::nullopt, config_.node_id};
        conn->send(wire::MsgType::Hello, wire::encode_hello(hello));
        auto reply = conn->receive(2000ms);
        if (!reply) throw Error(Errc::ConnectionClosed, "no HELLO_ACK");
        if (reply->type == wire::MsgType::Error) {
            auto err = wire::decode_error(reply->payload);
            if (err.code == wire::ErrorCode::AuthFailed) auth_rejected_ = true;
            throw Error(Errc::AuthFailed, err.message);
        }
        if (reply->type != wire::MsgType::HelloAck) throw Error(Errc::ConnectionClosed, "unexpected reply to HELLO");
        ch.conn = std::move(conn);
        ch.backoff_s = config_.backoff_initial_s;
        ch.last_heartbeat = now;
        ++stats_.connects;
    } catch (const Error&) {
        ++stats_.connect_failures;
        ch.next_attempt = plus_seconds(now, auth_rejected_ ? 1e9 : ch.backoff_s);
        ch.backoff_s = std::min(ch.backoff_s * 2, config_.backoff_cap_s);
    }
}

void SensorNode::disconnect(Channel& ch, Timestamp now) {
    if (ch.conn) ch.conn->close();
    ch.conn.reset();
    // Unacknowledged batches go back to the front of the queue, in order.
    for (auto it = ch.unacked.rbegin(); it != ch.unacked.rend(); ++it) {
        ch.ready.push_front(std::move(*it));
        ++stats_.retransmits;
    }
    ch.unacked.clear();
    ch.next_attempt = plus_seconds(now, ch.backoff_s);
    ch.backoff_s = std::min(ch.backoff_s * 2, config_.backoff_cap_s);
}

void SensorNode::service(Channel& ch, Timestamp now) {
    if (ch.staged_since && seconds_between(*ch.staged_since, now) * 1000.0 >= static_cast<double>(config_.flush_ms))
        seal(ch);
    if (!ch.conn) {
        if (shut_down_ || now < ch.next_attempt) return;
        try_connect(ch, now);
        if (!ch.conn) return;
    }
    try {
        while (auto f = ch.conn->receive(0ms)) {
            if (f->type == wire::MsgType::Ack) {
                if (!ch.unacked.empty()) ch.unacked.pop_front();
                ++stats_.batches_acked;
            } else if (f->type == wire::MsgType::Error) {
                auto err = wire::decode_error(f->payload);
                if (err.code == wire::ErrorCode::MalformedBatch) {
                    // The head-server discarded the batch; resending it would fail the same way.
                    if (!ch.unacked.empty()) ch.unacked.pop_front();
                    ++stats_.batches_rejected;
                } else {
                    if (err.code == wire::ErrorCode::AuthFailed) auth_rejected_ = true;
                    throw Error(Errc::ConnectionClosed, "head-server error: " + err.message);
                }
            } else if (f->type == wire::MsgType::Bye) {
                throw Error(Errc::ConnectionClosed, "head-server said BYE");
            }
        }
        while (ch.unacked.size() < config_.max_unacked && !ch.ready.empty()) {
            auto& b = ch.ready.front();
            ch.conn->send(wire::MsgType::TrafficBatch, b.payload);
            ++stats_.batches_sent;
            if (!b.sent_before) stats_.records_sent += b.count;
            b.sent_before = true;
            ch.unacked.push_back(std::move(b));
            ch.ready.pop_front();
        }
        if (seconds_between(ch.last_heartbeat, now) >= config_.heartbeat_s) {
            ch.conn->send(wire::MsgType::Heartbeat, wire::encode_u64(static_cast<std::uint64_t>(now.micros())));
            ch.last_heartbeat = now;
            ++stats_.heartbeats;
        }
    } catch (const Error&) {
        disconnect(ch, now);
    }
}

void SensorNode::run_campaign(Timestamp now) {
    if (!campaign_ || !campaign_->running()) return;
    if (!campaign_start_) campaign_start_ = now;
    for (const auto& f : campaign_->poll(seconds_between(*campaign_start_, now))) {
        ++stats_.campaign_frames;
        if (sink_) sink_(f, 0.0);
    }
}

void SensorNode::pump() {
    std::lock_guard lock(mu_);
    Timestamp now = clock_.now();
    run_campaign(now);
    for (auto& ch : channels_) service(*ch, now);
}

bool SensorNode::drained() const {
    std::lock_guard lock(mu_);
    for (const auto& ch : channels_)
        if (!ch->staged.empty() || !ch->ready.empty() || !ch->unacked.empty()) return false;
    return true;
}

void SensorNode::sever() {
    std::lock_guard lock(mu_);
    Timestamp now = clock_.now();
    for (auto& ch : channels_)
        if (ch->conn) disconnect(*ch, now);
}

void SensorNode::shutdown(std::chrono::milliseconds ack_wait) {
    {
        std::lock_guard lock(mu_);
        if (shut_down_) return;
        for (auto& ch : channels_) seal(*ch);
    }
    auto deadline = std::chrono::steady_clock::now() + ack_wait;
    while (!drained() && std::chrono::steady_clock::now() < deadline && !auth_rejected_) {
        pump();
        std::this_thread::sleep_for(1ms);
    }
    std::lock_guard lock(mu_);
    shut_down_ = true;
    if (campaign_ && campaign_->running()) {
        for (const auto& sf : campaign_->stop()) {
            ++stats_.restore_frames;
            if (sink_) sink_(sf.frame, sf.offset_s);
        }
    }
    for (auto& ch : channels_) {
        if (!ch->conn) continue;
        try {
            ch->conn->send(wire::MsgType::Bye);
        } catch (const Error&) {
        }
        ch->conn->close();
        ch->conn.reset();
    }
}

SensorStats SensorNode::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

SensorStats run_sensor(SensorNode& node, CaptureSource& source, RunOptions opts) {
    std::atomic<bool> captured_all{false};
    std::exception_ptr capture_error;
    auto stopping = [&] { return opts.stop != nullptr && opts.stop->load(); };
    std::thread capture([&] {
        try {
            while (!stopping()) {
                auto rec = source.next();
                if (!rec) break;
                node.offer(*rec);
            }
        } catch (...) {
            capture_error = std::current_exception();
        }
        captured_all = true;
    });
    while (!stopping() && !node.auth_rejected()) {
        node.pump();
        if (opts.stop_when_drained && captured_all && node.drained()) break;
        std::this_thread::sleep_for(opts.poll);
    }
    capture.join();
    node.shutdown();
    if (capture_error) std::rethrow_exception(capture_error);
    return node.stats();
}

SensorNode::Connector tcp_connector(const std::string& head_address) {
    auto [host, port] = parse_address(head_address);
    return [host = host, port = port](std::uint32_t) { return tcp_connect(host, port); };
}

}  // namespace dnids::sensor
