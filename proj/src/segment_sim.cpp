#include "dnids/segment_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dnids/hash.hpp"

namespace dnids::sim {

namespace {

constexpr int kMaxHops = 8;

std::uint64_t frame_digest(const Packet& p) { return fnv1a64(p.raw); }

}  // namespace

std::string_view event_name(EventKind kind) {
    switch (kind) {
    case EventKind::Injected: return "Injected";
    case EventKind::ArpResolved: return "ArpResolved";
    case EventKind::Delivered: return "Delivered";
    case EventKind::DeliveredFinal: return "DeliveredFinal";
    case EventKind::Mirrored: return "Mirrored";
    case EventKind::MirrorDropped: return "MirrorDropped";
    case EventKind::Flooded: return "Flooded";
    case EventKind::Forwarded: return "Forwarded";
    case EventKind::Consumed: return "Consumed";
    case EventKind::Dropped: return "Dropped";
    case EventKind::Skipped: return "Skipped";
    }
    return "?";
}

std::size_t DeliveryLog::count(EventKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(), [&](const LogEvent& e) { return e.kind == kind; }));
}

std::string DeliveryLog::serialize() const {
    std::ostringstream os;
    char digest[17];
    for (const auto& e : events_) {
        std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(e.digest));
        os << e.tick << '\t' << event_name(e.kind) << '\t' << e.frame_id << '\t' << e.port << '\t'
           << (e.host.empty() ? "-" : e.host) << '\t' << digest << '\t'
           << (e.detail.empty() ? "-" : e.detail) << '\n';
    }
    return os.str();
}

std::optional<MacAddr> SimHost::lookup(Ipv4Addr ip, Tick now) const {
    auto it = arp_cache.find(ip);
    if (it == arp_cache.end() || now >= it->second.expires_at) return std::nullopt;
    return it->second.mac;
}

CoverageResult coverage(const DeliveryLog& log, const std::string& sensor_id,
                        const std::set<AddrPair>& pairs, CoverageWindow window) {
    struct State {
        bool counted = false;
        bool seen = false;
        bool final = false;
    };
    std::map<std::uint64_t, State> frames;
    const auto& info = log.ipv4_frames();
    for (const auto& e : log.events()) {
        switch (e.kind) {
        case EventKind::Injected: {
            auto it = info.find(e.frame_id);
            if (it == info.end() || e.tick < window.from || e.tick >= window.to) break;
            if (pairs.contains({it->second.src, it->second.dst})) frames[e.frame_id].counted = true;
            break;
        }
        case EventKind::Delivered:
        case EventKind::Mirrored: {
            auto it = frames.find(e.frame_id);
            if (it != frames.end() && !it->second.final && e.host == sensor_id) it->second.seen = true;
            break;
        }
        case EventKind::DeliveredFinal: {
            auto it = frames.find(e.frame_id);
            if (it != frames.end()) it->second.final = true;
            break;
        }
        default: break;
        }
    }
    CoverageResult r;
    for (const auto& [id, s] : frames) {
        if (!s.counted) continue;
        ++r.frames;
        if (s.seen) ++r.observed;
    }
    return r;
}

std::set<AddrPair> ordered_pairs(const std::set<Ipv4Addr>& ips) {
    std::set<AddrPair> out;
    for (const auto& a : ips)
        for (const auto& b : ips)
            if (a != b) out.insert({a, b});
    return out;
}

// ---------------------------------------------------------------------------

struct Segment::Journey {
    std::uint64_t id = 0;
    bool broadcast = false;
    bool terminal = false;
};

Segment::Segment(SegmentConfig config) : config_(std::move(config)), rng_(config_.seed) {
    std::set<std::string> ids;
    std::set<Ipv4Addr> ips;
    std::set<MacAddr> macs;
    for (const auto& h : config_.hosts) {
        if (!ids.insert(h.id).second) throw Error(Errc::DuplicateAddress, "host id " + h.id);
        if (!ips.insert(h.ip).second) throw Error(Errc::DuplicateAddress, "IP " + h.ip.to_string());
        if (!macs.insert(h.mac).second || h.mac.is_broadcast())
            throw Error(Errc::DuplicateAddress, "MAC " + h.mac.to_string());
        hosts_.push_back(SimHost{h, -1, {}});
        truth_[h.ip] = h.mac;
    }
    if (config_.sw.ports.empty())
        for (const auto& h : config_.hosts) config_.sw.ports.push_back(h.id);
    for (std::size_t p = 0; p < config_.sw.ports.size(); ++p) {
        const std::string& id = config_.sw.ports[p];
        auto it = std::find_if(hosts_.begin(), hosts_.end(),
                               [&](const SimHost& h) { return h.config.id == id; });
        if (it == hosts_.end()) throw Error(Errc::PortConflict, "port names unknown host " + id);
        if (it->port >= 0) throw Error(Errc::PortConflict, "host " + id + " on two ports");
        it->port = static_cast<int>(p);
        port_host_.push_back(static_cast<std::size_t>(it - hosts_.begin()));
    }
    for (const auto& h : hosts_)
        if (h.port < 0) throw Error(Errc::PortConflict, "host " + h.config.id + " not attached");
    const int nports = static_cast<int>(port_host_.size());
    if (config_.sw.mirror) {
        if (config_.sw.mirror->port < 0 || config_.sw.mirror->port >= nports)
            throw Error(Errc::PortConflict, "mirror port out of range");
        if (config_.sw.mirror->capacity_frames_per_tick < 1)
            throw Error(Errc::InvalidField, "mirror capacity must be positive");
    }
    if (config_.sw.tap) {
        const auto& t = *config_.sw.tap;
        if (t.link_port < 0 || t.link_port >= nports || t.sensor_port < 0 ||
            t.sensor_port >= nports || t.link_port == t.sensor_port)
            throw Error(Errc::PortConflict, "tap ports invalid");
    }
    if (config_.arp_ttl_ticks <= 0 || config_.fdb_ttl_ticks <= 0 || config_.tick_us <= 0)
        throw Error(Errc::InvalidField, "ttl and tick length must be positive");
}

std::size_t Segment::host_index(const std::string& id) const {
    for (std::size_t i = 0; i < hosts_.size(); ++i)
        if (hosts_[i].config.id == id) return i;
    throw Error(Errc::BadScenario, "unknown host " + id);
}

const SimHost& Segment::host(const std::string& id) const { return hosts_[host_index(id)]; }

TruthMap Segment::truth() const { return truth_; }

const std::vector<Packet>& Segment::observed(const std::string& host_id) const {
    static const std::vector<Packet> kEmpty;
    auto it = observed_.find(host_index(host_id));
    return it == observed_.end() ? kEmpty : it->second;
}

Timestamp Segment::timestamp_of(Tick t) const {
    return Timestamp::from_micros(config_.epoch_s * 1'000'000 + t * config_.tick_us);
}

std::uint64_t Segment::digest() const {
    std::ostringstream os;
    os << "seed=" << config_.seed << ";arp=" << config_.arp_ttl_ticks << ";fdb="
       << config_.fdb_ttl_ticks << ";tick=" << config_.tick_us << ";epoch=" << config_.epoch_s
       << ";clock=" << clock_ << ";next=" << next_frame_id_ << '\n';
    for (const auto& h : hosts_) {
        os << h.config.id << ' ' << h.config.ip.to_string() << ' ' << h.config.mac.to_string() << ' '
           << (h.config.role == HostRole::Sensor ? "sensor" : "endpoint") << ' ' << h.port;
        for (const auto& [ip, e] : h.arp_cache)
            os << ' ' << ip.to_string() << '=' << e.mac.to_string() << '@' << e.expires_at;
        os << '\n';
    }
    if (config_.sw.mirror)
        os << "mirror " << config_.sw.mirror->port << ' ' << config_.sw.mirror->capacity_frames_per_tick << '\n';
    if (config_.sw.tap) os << "tap " << config_.sw.tap->link_port << ' ' << config_.sw.tap->sensor_port << '\n';
    for (const auto& [mac, e] : fdb_) os << mac.to_string() << '>' << e.port << '@' << e.expires_at << '\n';
    return fnv1a64(os.str());
}

void Segment::log(EventKind kind, std::uint64_t frame_id, int port, const std::string& host,
                  std::uint64_t digest, std::string detail) {
    log_.append({clock_, kind, frame_id, port, host, digest, std::move(detail)});
}

void Segment::apply_arp(std::span<const Packet> frames, Tick t) {
    for (const auto& f : frames) {
        const ArpPacket* arp = f.arp();
        if (arp == nullptr) continue;
        for (auto& h : hosts_) {
            bool addressed = f.eth.dst == h.config.mac || arp->target_ip == h.config.ip;
            if (!addressed || arp->sender_ip == h.config.ip) continue;
            h.arp_cache[arp->sender_ip] = {arp->sender_mac, t + config_.arp_ttl_ticks};
        }
    }
}

void Segment::inject(Tick t, const std::string& host_id, Packet frame) {
    host_index(host_id);
    queue_[t].push_back({host_id, std::move(frame), 0});
}

void Segment::attach_campaign(const std::string& sensor_id, RedirectCampaign campaign, Tick start,
                              std::optional<Tick> stop) {
    campaigns_.push_back({host_index(sensor_id), std::move(campaign), start, stop});
}

void Segment::capture(std::size_t host, const Packet& frame) {
    if (hosts_[host].config.role != HostRole::Sensor) return;
    Packet copy = frame;
    copy.ts = timestamp_of(clock_);
    observed_[host].push_back(std::move(copy));
}

void Segment::originate(std::size_t h, Packet frame) {
    frame.ts = timestamp_of(clock_);
    const SimHost& host = hosts_[h];
    Journey j;
    j.id = next_frame_id_++;
    j.broadcast = frame.eth.dst.is_broadcast();
    std::string detail;
    if (const auto* ip = frame.ipv4()) {
        log_.note_ipv4(j.id, {ip->src, ip->dst});
        detail = ip->src.to_string() + ">" + ip->dst.to_string() + "/" + std::to_string(ip->proto);
    } else if (const auto* arp = frame.arp()) {
        detail = std::string(arp->op == ArpPacket::kRequest ? "arp-request " : "arp-reply ") +
                 arp->sender_ip.to_string() + "=" + arp->sender_mac.to_string() + ">" +
                 arp->target_ip.to_string();
    }
    log(EventKind::Injected, j.id, host.port, host.config.id, frame_digest(frame), std::move(detail));
    capture(h, frame);
    switch_ingress(j, host.port, frame, 0);
    if (!j.terminal) {
        log(j.broadcast ? EventKind::Consumed : EventKind::Dropped, j.id, -1, {}, frame_digest(frame),
            j.broadcast ? "broadcast" : "no receiver");
    }
}

void Segment::monitor_copy(Journey& j, int port, const Packet& frame) {
    std::size_t h = port_host_[static_cast<std::size_t>(port)];
    log(EventKind::Mirrored, j.id, port, hosts_[h].config.id, frame_digest(frame));
    capture(h, frame);
}

void Segment::switch_ingress(Journey& j, int ingress, const Packet& frame, int depth) {
    if (depth > kMaxHops) {
        log(EventKind::Dropped, j.id, ingress, {}, frame_digest(frame), "hop limit");
        j.terminal = true;
        return;
    }
    if (!frame.eth.src.is_broadcast())
        fdb_[frame.eth.src] = {ingress, clock_ + config_.fdb_ttl_ticks};

    if (const auto& m = config_.sw.mirror; m && ingress != m->port) {
        if (mirrored_this_tick_ < m->capacity_frames_per_tick) {
            ++mirrored_this_tick_;
            monitor_copy(j, m->port, frame);
        } else {
            log(EventKind::MirrorDropped, j.id, m->port, hosts_[port_host_[m->port]].config.id,
                frame_digest(frame));
        }
    }

    std::vector<int> egress;
    bool flood = frame.eth.dst.is_broadcast();
    if (!flood) {
        auto it = fdb_.find(frame.eth.dst);
        if (it == fdb_.end() || clock_ >= it->second.expires_at) {
            flood = true;
        } else if (it->second.port != ingress) {
            egress.push_back(it->second.port);
        }
    }
    if (flood) {
        log(EventKind::Flooded, j.id, ingress, hosts_[port_host_[ingress]].config.id, frame_digest(frame));
        for (int p = 0; p < static_cast<int>(port_host_.size()); ++p)
            if (p != ingress) egress.push_back(p);
    }

    if (const auto& t = config_.sw.tap) {
        bool on_link = ingress == t->link_port ||
                       std::find(egress.begin(), egress.end(), t->link_port) != egress.end();
        if (on_link && ingress != t->sensor_port) monitor_copy(j, t->sensor_port, frame);
    }

    for (int p : egress) deliver(j, p, frame, depth);
}

void Segment::deliver(Journey& j, int port, const Packet& frame, int depth) {
    std::size_t h = port_host_[static_cast<std::size_t>(port)];
    log(EventKind::Delivered, j.id, port, hosts_[h].config.id, frame_digest(frame));
    host_receive(j, h, frame, depth);
}

void Segment::host_receive(Journey& j, std::size_t h, const Packet& frame, int depth) {
    SimHost& host = hosts_[h];
    capture(h, frame);
    const bool bcast = frame.eth.dst.is_broadcast();
    if (!bcast && frame.eth.dst != host.config.mac) return;  // NIC filter

    auto finish = [&](EventKind kind, std::string detail = {}) {
        if (j.terminal) return;
        j.terminal = true;
        log(kind, j.id, host.port, host.config.id, frame_digest(frame), std::move(detail));
    };

    if (const auto* arp = frame.arp()) {
        if (arp->op == ArpPacket::kRequest && arp->target_ip == host.config.ip) {
            ArpPacket reply;
            reply.sender_mac = host.config.mac;
            reply.sender_ip = host.config.ip;
            reply.target_mac = arp->sender_mac;
            reply.target_ip = arp->sender_ip;
            queue_[clock_ + 1].push_back(
                {host.config.id, make_arp_frame(ArpPacket::kReply, host.config.mac, arp->sender_mac, reply), 0});
        } else if (arp->op == ArpPacket::kReply && !bcast && arp->target_ip == host.config.ip &&
                   arp->sender_ip != host.config.ip) {
            host.arp_cache[arp->sender_ip] = {arp->sender_mac, clock_ + config_.arp_ttl_ticks};
            log(EventKind::ArpResolved, j.id, host.port, host.config.id, frame_digest(frame),
                arp->sender_ip.to_string() + "=" + arp->sender_mac.to_string());
            outstanding_requests_.erase({h, arp->sender_ip});
            auto pit = pending_.find(h);
            if (pit != pending_.end()) {
                auto dit = pit->second.find(arp->sender_ip);
                if (dit != pit->second.end()) {
                    for (auto& [since, tpl] : dit->second) now_queue_.push_back({host.config.id, tpl, 0});
                    pit->second.erase(dit);
                }
            }
        }
        if (!bcast) finish(EventKind::Consumed, "arp");
        return;
    }
    if (bcast) return;

    const Ipv4Packet* ip = frame.ipv4();
    if (ip == nullptr) {
        finish(EventKind::DeliveredFinal);
        return;
    }
    if (ip->dst == host.config.ip) {
        finish(host.config.role == HostRole::Sensor ? EventKind::Consumed : EventKind::DeliveredFinal);
        return;
    }
    if (host.config.role != HostRole::Sensor) {
        finish(EventKind::Dropped, "not addressed to host");
        return;
    }
    try {
        auto relayed = forward_rewrite(frame, truth_, host.config.mac);
        if (!relayed) {
            finish(EventKind::Consumed);
            return;
        }
        log(EventKind::Forwarded, j.id, host.port, host.config.id, frame_digest(*relayed));
        switch_ingress(j, host.port, *relayed, depth + 1);
    } catch (const Error&) {
        finish(EventKind::Dropped, "unknown destination");
    }
}

void Segment::send_arp_request(std::size_t h, Ipv4Addr ip) {
    const SimHost& host = hosts_[h];
    outstanding_requests_[{h, ip}] = clock_;
    ArpPacket req;
    req.sender_mac = host.config.mac;
    req.sender_ip = host.config.ip;
    req.target_ip = ip;
    originate(h, make_arp_frame(ArpPacket::kRequest, host.config.mac, MacAddr::broadcast(), req));
}

void Segment::send_template(std::size_t h, const FrameTemplate& tpl) {
    const SimHost& host = hosts_[h];
    if (tpl.dst_ip == host.config.ip) {
        log(EventKind::Skipped, 0, host.port, host.config.id, 0, "destination is self");
        return;
    }
    auto mac = host.lookup(tpl.dst_ip, clock_);
    if (!mac) {
        pending_[h][tpl.dst_ip].push_back({clock_, tpl});
        auto out = outstanding_requests_.find({h, tpl.dst_ip});
        if (out == outstanding_requests_.end()) send_arp_request(h, tpl.dst_ip);
        return;
    }
    Ipv4FrameSpec spec;
    spec.src_mac = host.config.mac;
    spec.dst_mac = *mac;
    spec.src_ip = host.config.ip;
    spec.dst_ip = tpl.dst_ip;
    spec.proto = tpl.proto;
    spec.src_port = tpl.src_port != 0 ? tpl.src_port : static_cast<std::uint16_t>(49152 + rng_() % 16384);
    spec.dst_port = tpl.dst_port;
    spec.tcp_flags = tpl.tcp_flags;
    spec.payload_len = tpl.payload_len;
    spec.ip_id = static_cast<std::uint16_t>(rng_() & 0xffff);
    originate(h, make_ipv4_frame(spec));
}

void Segment::expire_pending() {
    for (auto it = outstanding_requests_.begin(); it != outstanding_requests_.end();) {
        if (clock_ - it->second < kArpRetryTicks) {
            ++it;
            continue;
        }
        auto [h, ip] = it->first;
        std::size_t n = 0;
        if (auto pit = pending_.find(h); pit != pending_.end()) {
            if (auto dit = pit->second.find(ip); dit != pit->second.end()) {
                n = dit->second.size();
                pit->second.erase(dit);
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            log(EventKind::Skipped, 0, hosts_[h].port, hosts_[h].config.id, 0,
                "arp timeout for " + ip.to_string());
        it = outstanding_requests_.erase(it);
    }
}

const DeliveryLog& Segment::run(const TrafficScript& script, Tick until) {
    std::map<Tick, std::vector<const ScriptEntry*>> by_tick;
    for (const auto& e : script) {
        if (e.t < clock_ || e.t > until) {
            log(EventKind::Skipped, 0, -1, e.src_host, 0, "tick outside run window");
            continue;
        }
        by_tick[e.t].push_back(&e);
    }

    for (Tick t = clock_; t <= until; ++t) {
        clock_ = t;
        mirrored_this_tick_ = 0;

        for (auto& c : campaigns_) {
            if (t < c.start) continue;
            const std::string& sid = hosts_[c.host].config.id;
            if (!c.stop || t < *c.stop) {
                double now_s = static_cast<double>(t - c.start) * static_cast<double>(config_.tick_us) / 1e6;
                for (auto& f : c.campaign.poll(now_s)) now_queue_.push_back({sid, std::move(f), 0});
            } else if (t == *c.stop) {
                for (auto& sf : c.campaign.stop()) {
                    Tick at = t + static_cast<Tick>(std::llround(sf.offset_s * 1e6 / static_cast<double>(config_.tick_us)));
                    if (at == t) now_queue_.push_back({sid, std::move(sf.frame), 0});
                    else queue_[at].push_back({sid, std::move(sf.frame), 0});
                }
            }
        }

        if (auto qit = queue_.find(t); qit != queue_.end()) {
            for (auto& o : qit->second) now_queue_.push_back(std::move(o));
            queue_.erase(qit);
        }
        if (auto sit = by_tick.find(t); sit != by_tick.end()) {
            for (const ScriptEntry* e : sit->second) {
                std::size_t h;
                try {
                    h = host_index(e->src_host);
                } catch (const Error&) {
                    log(EventKind::Skipped, 0, -1, e->src_host, 0, "unknown source host");
                    continue;
                }
                if (const auto* raw = std::get_if<Bytes>(&e->frame)) {
                    try {
                        now_queue_.push_back({hosts_[h].config.id, parse_frame(*raw), 0});
                    } catch (const Error&) {
                        log(EventKind::Skipped, 0, hosts_[h].port, e->src_host, 0, "unparseable raw frame");
                    }
                } else {
                    now_queue_.push_back({hosts_[h].config.id, std::get<FrameTemplate>(e->frame), 0});
                }
            }
        }

        expire_pending();

        while (!now_queue_.empty()) {
            Outgoing o = std::move(now_queue_.front());
            now_queue_.pop_front();
            std::size_t h = host_index(o.host);
            if (auto* tpl = std::get_if<FrameTemplate>(&o.frame)) send_template(h, *tpl);
            else originate(h, std::move(std::get<Packet>(o.frame)));
        }
    }
    clock_ = until + 1;
    return log_;
}

}  // namespace dnids::sim
