#include "dnids/head.hpp"

#include <algorithm>
#include <iostream>

#include "dnids/hash.hpp"
#include "dnids/idmef.hpp"

namespace dnids::head {

using namespace std::chrono_literals;

DispatchDecision dispatch(const store::TrafficRecord& record, const std::vector<SolverRegistration>& regs) {
    DispatchDecision d;
    d.record_id = record.record_id;
    std::optional<Packet> packet;
    try {
        packet = parse_frame(record.raw, record.ts);
    } catch (const Error&) {
    }
    std::map<std::string, std::vector<const SolverRegistration*>> groups;
    for (const auto& r : regs) {
        bool match = packet ? match_filter(*packet, r.subscription) : r.subscription.empty();
        if (match) groups[r.group].push_back(&r);
    }
    for (auto& [name, members] : groups) {
        std::sort(members.begin(), members.end(),
                  [](const SolverRegistration* a, const SolverRegistration* b) { return a->solver_id < b->solver_id; });
        std::size_t pick = 0;
        if (record.flow_key) {
            auto o = record.flow_key->octets();
            pick = static_cast<std::size_t>(fnv1a64(ByteView(o.data(), o.size())) % members.size());
        }
        d.chosen.push_back(members[pick]->solver_id);
    }
    return d;
}

void HeadConfig::validate() const {
    if (token.empty()) throw Error(Errc::BadConfig, "token is empty");
    if (!(heartbeat_s > 0) || missed_beats < 1) throw Error(Errc::BadConfig, "bad heartbeat settings");
    if (store_dir.empty()) throw Error(Errc::BadConfig, "store_dir is empty");
    parse_address(listen);
}

HeadConfig HeadConfig::from_ini(const Ini& ini) {
    HeadConfig c;
    c.listen = ini.get_or("listen", c.listen);
    c.store_dir = ini.get_or("store_dir", c.store_dir.string());
    c.token = ini.get_or("token", "");
    c.dedup = ini.get_bool("dedup", c.dedup);
    c.heartbeat_s = ini.get_double("heartbeat_s", c.heartbeat_s);
    c.missed_beats = static_cast<int>(ini.get_int("missed_beats", c.missed_beats));
    c.sync = ini.get_bool("fsync", c.sync);
    long long roll = ini.get_int("roll_bytes", static_cast<long long>(c.roll_bytes));
    if (roll <= 0) throw Error(Errc::BadConfig, "roll_bytes must be positive");
    c.roll_bytes = static_cast<std::uint64_t>(roll);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

struct HeadServer::Session {
    std::uint64_t id = 0;
    std::shared_ptr<FramedConnection> conn;
    wire::NodeKind kind = wire::NodeKind::Sensor;
    std::string name;
    std::atomic<bool> closing{false};
};

HeadServer::HeadServer(HeadConfig config, std::unique_ptr<store::TrafficStore> traffic,
                       std::unique_ptr<store::AlertStore> alerts, const Clock& clock)
    : config_(std::move(config)),
      traffic_(std::move(traffic)),
      alerts_(std::move(alerts)),
      clock_(clock),
      registry_(config_.token) {}

std::unique_ptr<HeadServer> HeadServer::open(HeadConfig config, const Clock& clock) {
    config.validate();
    auto traffic = store::FileTrafficStore::open(config.store_dir / "traffic",
                                                 {.roll_bytes = config.roll_bytes, .sync = config.sync});
    if (traffic->interior_error())
        std::cerr << "warning: traffic store opened read-only: " << *traffic->interior_error() << "\n";
    auto alerts = store::FileAlertStore::open(config.store_dir / "alerts", config.sync);
    return std::make_unique<HeadServer>(std::move(config), std::move(traffic), std::move(alerts), clock);
}

HeadServer::~HeadServer() { stop(); }

std::vector<std::uint64_t> HeadServer::ingest_batch(const std::string& sensor_id, ByteView payload) {
    auto records = wire::parse_batch(payload);  // throws MalformedBatch before anything is stored
    std::lock_guard lock(ingest_mu_);
    const Timestamp recv = clock_.now();
    std::vector<store::TrafficRecord> stored;
    std::vector<std::uint64_t> new_digests;
    try {
        for (auto& br : records) {
            if (br.data.empty()) continue;
            if (config_.dedup) {
                Bytes key(sensor_id.begin(), sensor_id.end());
                ByteWriter w(key);
                w.u64(static_cast<std::uint64_t>(br.ts.micros()));
                w.bytes(br.data);
                std::uint64_t digest = fnv1a64(ByteView(key));
                if (seen_digests_.count(digest) ||
                    std::find(new_digests.begin(), new_digests.end(), digest) != new_digests.end()) {
                    std::lock_guard s(mu_);
                    ++stats_.duplicates_skipped;
                    continue;
                }
                new_digests.push_back(digest);
            }
            store::TrafficRecord r;
            r.sensor_id = sensor_id;
            r.recv_time = recv;
            r.ts = br.ts;
            r.orig_len = br.orig_len;
            try {
                r.flow_key = flow_key(parse_frame(br.data, br.ts));
            } catch (const Error&) {
            }
            r.raw = std::move(br.data);
            r.record_id = traffic_->append(r);
            stored.push_back(std::move(r));
        }
        traffic_->flush();
    } catch (const Error& e) {
        traffic_->discard_pending();
        std::lock_guard s(mu_);
        ++stats_.store_failures;
        throw Error(Errc::StoreFailure, e.what());
    }
    seen_digests_.insert(new_digests.begin(), new_digests.end());
    {
        std::lock_guard s(mu_);
        ++stats_.batches;
        stats_.records += stored.size();
    }
    fan_out(stored);
    std::vector<std::uint64_t> ids;
    for (const auto& r : stored) ids.push_back(r.record_id);
    return ids;
}

void HeadServer::fan_out(const std::vector<store::TrafficRecord>& records) {
    std::vector<SolverRegistration> regs;
    std::map<std::string, std::shared_ptr<FramedConnection>> conns;
    {
        std::lock_guard lock(mu_);
        for (const auto& [id, entry] : solvers_) {
            regs.push_back(entry.first);
            auto it = sessions_.find(entry.second);
            if (it != sessions_.end()) conns[id] = it->second->conn;
        }
    }
    if (regs.empty()) return;
    std::map<std::string, std::vector<wire::BatchRecord>> per_solver;
    for (const auto& r : records)
        for (const auto& id : dispatch(r, regs).chosen) per_solver[id].push_back({r.ts, r.orig_len, r.raw});
    for (auto& [id, recs] : per_solver) {
        {
            std::lock_guard lock(mu_);
            stats_.dispatched[id] += recs.size();
        }
        auto it = conns.find(id);
        if (it == conns.end()) continue;
        try {
            for (const auto& payload : wire::batch_records(recs, wire::kMaxPayload))
                it->second->send(wire::MsgType::TrafficBatch, payload);
        } catch (const Error&) {
            // The solver's own session notices the broken connection.
        }
    }
}

std::uint64_t HeadServer::ingest_alert(const std::string& solver_id, std::string_view xml) {
    auto parsed = idmef::parse_xml(xml);
    const auto* alert = std::get_if<idmef::Alert>(&parsed.message);
    if (alert == nullptr) throw Error(Errc::ValidationFailed, "document is not an Alert");
    if (auto v = idmef::validate(*alert); !v.empty()) throw Error(Errc::ValidationFailed, v.front());
    std::lock_guard lock(alert_mu_);
    store::AlertRow row;
    row.received_time = clock_.now();
    row.solver_id = solver_id;
    row.messageid = alert->messageid;
    row.classification_text = alert->classification.text;
    row.analyzer_id = alert->analyzerid;
    if (alert->severity) row.severity = std::string(idmef::severity_name(*alert->severity));
    row.duplicate = alerts_->has_messageid(alert->messageid);
    row.xml = std::string(xml);
    std::uint64_t id = alerts_->insert(std::move(row));
    alerts_->flush();
    return id;
}

std::vector<store::TrafficRecord> HeadServer::query_traffic(const store::TrafficQuery& q) const {
    return traffic_->query(q);
}

std::vector<store::AlertRow> HeadServer::query_alerts(const store::AlertCriteria& c) const {
    return alerts_->query(c);
}

void HeadServer::add_registration(SolverRegistration reg) {
    std::lock_guard lock(mu_);
    std::string id = reg.solver_id;
    solvers_[id] = {std::move(reg), 0};
}

std::vector<SolverRegistration> HeadServer::registrations() const {
    std::lock_guard lock(mu_);
    std::vector<SolverRegistration> out;
    for (const auto& [id, entry] : solvers_) out.push_back(entry.first);
    return out;
}

std::size_t HeadServer::live_sessions() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

HeadStats HeadServer::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

// ---- sessions --------------------------------------------------------------

void HeadServer::start() {
    auto [host, port] = parse_address(config_.listen);
    listener_ = std::make_unique<TcpListener>(host, port);
    running_ = true;
    accept_thread_ = std::thread([this] {
        while (running_) {
            TransportPtr t;
            try {
                t = listener_->accept(100ms);
            } catch (const Error&) {
                continue;
            }
            if (t) serve(std::move(t));
        }
    });
}

std::uint16_t HeadServer::port() const { return listener_ ? listener_->port() : 0; }

TransportPtr HeadServer::connect_local() {
    auto [client, server] = make_pipe();
    serve(std::move(server));
    return std::move(client);
}

void HeadServer::serve(TransportPtr transport) {
    running_ = true;
    auto s = std::make_shared<Session>();
    s->conn = std::make_shared<FramedConnection>(std::move(transport));
    std::lock_guard lock(threads_mu_);
    session_threads_.emplace_back([this, s] { run_session(s); });
}

void HeadServer::stop() {
    running_ = false;
    if (accept_thread_.joinable()) accept_thread_.join();
    if (listener_) listener_->close();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(threads_mu_);
        threads.swap(session_threads_);
    }
    for (auto& t : threads)
        if (t.joinable()) t.join();
}

void HeadServer::run_session(std::shared_ptr<Session> s) {
    FramedConnection& conn = *s->conn;
    auto send_error = [&](wire::ErrorCode code, const std::string& msg) {
        try {
            conn.send(wire::MsgType::Error, wire::encode_error(code, msg));
        } catch (const Error&) {
        }
    };

    // Handshake: the first frame must be HELLO.
    std::optional<wire::Frame> first;
    try {
        auto deadline = std::chrono::steady_clock::now() + 5s;
        while (running_ && !first && std::chrono::steady_clock::now() < deadline) first = conn.receive(50ms);
    } catch (const Error&) {
    }
    if (!first || first->type != wire::MsgType::Hello) {
        if (first) send_error(wire::ErrorCode::ProtocolError, "expected HELLO");
        std::lock_guard lock(mu_);
        ++stats_.sessions_rejected;
        conn.close();
        return;
    }
    auto outcome = registry_.handshake(first->payload);
    try {
        conn.send_raw(outcome.reply);
    } catch (const Error&) {
    }
    if (!outcome.accepted) {
        std::lock_guard lock(mu_);
        ++stats_.sessions_rejected;
        conn.close();
        return;
    }
    const wire::Hello& hello = *outcome.hello;
    s->id = outcome.session_id;
    s->kind = hello.kind;
    s->name = hello.name.empty() ? wire::node_id_hex(hello.node_id).substr(0, 16) : hello.name;
    {
        std::lock_guard lock(mu_);
        ++stats_.sessions_accepted;
        if (outcome.superseded) {
            auto it = sessions_.find(*outcome.superseded);
            if (it != sessions_.end()) {
                it->second->closing = true;
                ++stats_.sessions_superseded;
                try {
                    it->second->conn->send(wire::MsgType::Error,
                                           wire::encode_error(wire::ErrorCode::Superseded, "superseded by a newer session"));
                } catch (const Error&) {
                }
            }
        }
        sessions_[s->id] = s;
        if (s->kind == wire::NodeKind::Solver) {
            SolverRegistration reg;
            reg.solver_id = s->name;
            reg.group = hello.solver ? hello.solver->group : std::string("default");
            if (reg.group.empty()) reg.group = "default";
            try {
                reg.subscription = parse_filter(hello.solver ? hello.solver->subscription : "");
            } catch (const Error&) {
                reg.subscription = {FilterRule{FilterRule::Kind::None}};
            }
            std::string id = reg.solver_id;
            solvers_[id] = {std::move(reg), s->id};
        }
    }

    const std::int64_t limit_us = static_cast<std::int64_t>(config_.heartbeat_s * config_.missed_beats * 1e6);
    Timestamp last_seen = clock_.now();
    while (running_ && !s->closing) {
        std::optional<wire::Frame> f;
        try {
            f = conn.receive(50ms);
        } catch (const Error& e) {
            if (e.code() != Errc::ConnectionClosed) send_error(wire::ErrorCode::ProtocolError, e.what());
            break;
        }
        Timestamp now = clock_.now();
        if (!f) {
            if (now.micros() - last_seen.micros() > limit_us) {
                std::lock_guard lock(mu_);
                ++stats_.sessions_timed_out;
                break;
            }
            continue;
        }
        last_seen = now;
        try {
            switch (f->type) {
            case wire::MsgType::TrafficBatch:
                if (s->kind != wire::NodeKind::Sensor) {
                    send_error(wire::ErrorCode::ProtocolError, "solvers do not send traffic");
                    break;
                }
                try {
                    ingest_batch(s->name, f->payload);
                    // The count field was validated by ingest; ACK echoes it.
                    conn.send(wire::MsgType::Ack, wire::encode_u32(load_be32(f->payload, 0)));
                } catch (const Error& e) {
                    if (e.code() == Errc::MalformedBatch) {
                        {
                            std::lock_guard lock(mu_);
                            ++stats_.batches_malformed;
                        }
                        send_error(wire::ErrorCode::MalformedBatch, e.what());
                    } else if (e.code() != Errc::StoreFailure) {
                        throw;
                    }
                    // StoreFailure: no ACK, the sensor retransmits.
                }
                break;
            case wire::MsgType::Alert: {
                if (s->kind != wire::NodeKind::Solver) {
                    send_error(wire::ErrorCode::ProtocolError, "sensors do not send alerts");
                    break;
                }
                std::string xml(f->payload.begin(), f->payload.end());
                try {
                    ingest_alert(s->name, xml);
                    {
                        std::lock_guard lock(mu_);
                        ++stats_.alerts_accepted;
                    }
                    conn.send(wire::MsgType::Ack, wire::encode_u32(1));
                } catch (const Error& e) {
                    if (e.code() == Errc::ConnectionClosed) throw;
                    {
                        std::lock_guard lock(mu_);
                        ++stats_.alerts_rejected;
                    }
                    send_error(wire::ErrorCode::InvalidIdmef, e.what());
                }
                break;
            }
            case wire::MsgType::Heartbeat: {
                std::lock_guard lock(mu_);
                ++stats_.heartbeats;
                break;
            }
            case wire::MsgType::Bye: {
                std::lock_guard lock(mu_);
                ++stats_.byes;
                s->closing = true;
                break;
            }
            default:
                send_error(wire::ErrorCode::ProtocolError,
                           "unexpected " + std::string(wire::msg_type_name(f->type)));
            }
        } catch (const Error&) {
            break;  // connection failed while replying
        }
    }

    {
        std::lock_guard lock(mu_);
        sessions_.erase(s->id);
        auto it = solvers_.find(s->name);
        if (s->kind == wire::NodeKind::Solver && it != solvers_.end() && it->second.second == s->id)
            solvers_.erase(it);
    }
    registry_.release(s->id);
    conn.close();
}

}  // namespace dnids::head
