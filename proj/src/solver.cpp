#include "dnids/solver.hpp"

#include <cstdio>
#include <iostream>
#include <thread>

namespace dnids::solver {

using namespace std::chrono_literals;

namespace {

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::int64_t to_us(double s) { return static_cast<std::int64_t>(s * 1e6); }

}  // namespace

idmef::Alert AlertFactory::make(const std::vector<Ipv4Addr>& sources, const std::vector<Ipv4Addr>& targets,
                                std::string classification, idmef::AlertExtras extras) {
    return idmef::build_alert(analyzer_id_, clock_->now(), sources, targets, std::move(classification), ids_,
                              std::move(extras));
}

// ---- registry --------------------------------------------------------------

AnalyzerRegistry AnalyzerRegistry::with_builtins() {
    AnalyzerRegistry r;
    r.add("portscan", [](const AnalyzerEnv& env) {
        PortScanParams p;
        if (env.params) {
            p.threshold = static_cast<std::size_t>(env.params->get_int("portscan.threshold", static_cast<long long>(p.threshold)));
            p.window_s = env.params->get_double("portscan.window_s", p.window_s);
            p.cooldown_s = env.params->get_double("portscan.cooldown_s", p.cooldown_s);
            p.max_targets = static_cast<std::size_t>(env.params->get_int("portscan.max_targets", static_cast<long long>(p.max_targets)));
        }
        if (p.threshold == 0 || !(p.window_s > 0) || p.cooldown_s < 0)
            throw Error(Errc::BadConfig, "bad portscan parameters");
        return std::make_unique<PortScanAnalyzer>(AlertFactory(env.analyzer_id, env.clock, env.seed), p);
    });
    r.add("arpspoof", [](const AnalyzerEnv& env) {
        return std::make_unique<ArpSpoofAnalyzer>(AlertFactory(env.analyzer_id, env.clock, env.seed));
    });
    return r;
}

void AnalyzerRegistry::add(const std::string& name, AnalyzerMaker maker) { makers_[name] = std::move(maker); }

std::unique_ptr<Analyzer> AnalyzerRegistry::create(const std::string& name, const AnalyzerEnv& env) const {
    auto it = makers_.find(name);
    if (it == makers_.end()) throw Error(Errc::BadConfig, "unknown analyzer '" + name + "'");
    return it->second(env);
}

std::vector<std::string> AnalyzerRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [n, m] : makers_) out.push_back(n);
    return out;
}

// ---- port scan -------------------------------------------------------------

PortScanAnalyzer::PortScanAnalyzer(AlertFactory factory, PortScanParams params)
    : factory_(std::move(factory)), params_(params) {}

void PortScanAnalyzer::on_packet(const Packet& p) {
    const Ipv4Packet* ip = p.ipv4();
    if (!ip || ip->proto != ipproto::kTcp || !ip->transport || !ip->transport->tcp_flags) return;
    std::uint8_t flags = *ip->transport->tcp_flags;
    if (!(flags & tcpflag::kSyn) || (flags & tcpflag::kAck)) return;

    const std::int64_t now = p.ts.micros();
    SourceState& st = sources_[ip->src];
    if (st.cooldown_until && now < *st.cooldown_until) return;
    const std::int64_t window = to_us(params_.window_s);
    for (auto it = st.touched.begin(); it != st.touched.end();) {
        if (now - it->second > window) it = st.touched.erase(it);
        else ++it;
    }
    st.touched[{ip->dst, ip->transport->dst_port}] = now;
    if (st.touched.size() < params_.threshold) return;

    std::vector<Ipv4Addr> victims;
    for (const auto& [target, t] : st.touched) {
        if (victims.size() >= params_.max_targets) break;
        if (victims.empty() || victims.back() != target.ip) victims.push_back(target.ip);
    }
    idmef::AlertExtras extras;
    extras.severity = idmef::Severity::Medium;
    extras.additional_data = {{"distinct targets", std::to_string(st.touched.size())},
                              {"window_s", format_number(params_.window_s)}};
    out_.push_back(factory_.make({ip->src}, victims, "Port scan", std::move(extras)));
    st.cooldown_until = now + to_us(params_.cooldown_s);
    st.touched.clear();
}

std::vector<idmef::Alert> PortScanAnalyzer::drain() { return std::exchange(out_, {}); }

// ---- ARP spoofing ----------------------------------------------------------

void ArpSpoofAnalyzer::on_packet(const Packet& p) {
    const ArpPacket* a = p.arp();
    if (!a || a->sender_ip.value == 0) return;  // probes carry no claim
    auto [it, fresh] = first_seen_.try_emplace(a->sender_ip, a->sender_mac);
    if (fresh || it->second == a->sender_mac || a->op != ArpPacket::kReply) return;
    if (!alerted_.insert({a->sender_ip, a->sender_mac}).second) return;
    idmef::AlertExtras extras;
    extras.severity = idmef::Severity::High;
    extras.additional_data = {{"first-seen mac", it->second.to_string()},
                              {"claimed mac", a->sender_mac.to_string()},
                              {"told", a->target_ip.to_string()}};
    out_.push_back(factory_.make({}, {a->sender_ip}, "ARP spoofing", std::move(extras)));
}

std::vector<idmef::Alert> ArpSpoofAnalyzer::drain() { return std::exchange(out_, {}); }

// ---- host ------------------------------------------------------------------

void SolverHost::add(std::unique_ptr<Analyzer> a) { analyzers_.push_back({std::move(a), true}); }

template <typename F>
void SolverHost::guarded(std::size_t i, F&& f) {
    Slot& s = analyzers_[i];
    if (!s.enabled) return;
    try {
        f(*s.analyzer);
    } catch (const std::exception& e) {
        s.enabled = false;
        errors_.push_back(s.analyzer->name() + ": " + e.what());
        std::cerr << "analyzer " << s.analyzer->name() << " disabled: " << e.what() << "\n";
    } catch (...) {
        s.enabled = false;
        errors_.push_back(s.analyzer->name() + ": unknown exception");
    }
}

void SolverHost::feed(const Packet& p) {
    for (std::size_t i = 0; i < analyzers_.size(); ++i) guarded(i, [&](Analyzer& a) { a.on_packet(p); });
}

void SolverHost::tick(Timestamp now) {
    for (std::size_t i = 0; i < analyzers_.size(); ++i) guarded(i, [&](Analyzer& a) { a.on_tick(now); });
}

std::vector<idmef::Alert> SolverHost::drain() {
    std::vector<idmef::Alert> out;
    for (std::size_t i = 0; i < analyzers_.size(); ++i)
        guarded(i, [&](Analyzer& a) {
            for (auto& alert : a.drain()) out.push_back(std::move(alert));
        });
    return out;
}

std::vector<std::string> SolverHost::disabled() const {
    std::vector<std::string> out;
    for (const auto& s : analyzers_)
        if (!s.enabled) out.push_back(s.analyzer->name());
    return out;
}

// ---- daemon ----------------------------------------------------------------

void SolverConfig::validate() const {
    if (solver_id.empty()) throw Error(Errc::BadConfig, "solver_id is empty");
    if (token.empty()) throw Error(Errc::BadConfig, "token is empty");
    if (!(heartbeat_s > 0)) throw Error(Errc::BadConfig, "heartbeat_s must be positive");
    if (group.empty()) throw Error(Errc::BadConfig, "group is empty");
}

SolverConfig SolverConfig::from_ini(const Ini& ini) {
    SolverConfig c;
    c.solver_id = ini.get_or("solver_id", c.solver_id);
    c.head_address = ini.get_or("head", c.head_address);
    c.token = ini.get_or("token", "");
    c.group = ini.get_or("group", c.group);
    c.subscription = parse_filter(ini.get_or("subscription", ""));
    if (ini.get("analyzers")) c.analyzers = ini.get_list("analyzers");
    c.heartbeat_s = ini.get_double("heartbeat_s", c.heartbeat_s);
    c.seed = static_cast<std::uint64_t>(ini.get_int("seed", static_cast<long long>(c.seed)));
    c.params = ini;
    c.validate();
    return c;
}

SolverNode::SolverNode(SolverConfig config, Connector connect, const Clock& clock, const AnalyzerRegistry& registry)
    : config_(std::move(config)), connect_(std::move(connect)), clock_(clock), heartbeat_ids_(config_.seed ^ 0x5eed) {
    config_.validate();
    std::uint64_t seed = config_.seed;
    for (const auto& name : config_.analyzers) {
        AnalyzerEnv env{config_.solver_id + "/" + name, clock_, seed++, &config_.params};
        host_.add(registry.create(name, env));
    }
}

SolverNode::~SolverNode() {
    if (conn_) conn_->close();
}

void SolverNode::add_analyzer(std::unique_ptr<Analyzer> a) {
    std::lock_guard lock(mu_);
    host_.add(std::move(a));
}

void SolverNode::connect_now(Timestamp now) {
    try {
        auto conn = std::make_unique<FramedConnection>(connect_());
        wire::Hello hello{config_.token, wire::NodeKind::Solver, wire::make_node_id(config_.solver_id),
                          wire::SolverTerms{config_.group, filter_to_string(config_.subscription)}, config_.solver_id};
        conn->send(wire::MsgType::Hello, wire::encode_hello(hello));
        auto reply = conn->receive(2000ms);
        if (!reply || reply->type != wire::MsgType::HelloAck) throw Error(Errc::AuthFailed, "handshake refused");
        conn_ = std::move(conn);
        last_heartbeat_ = now;
        backoff_s_ = 1.0;
        ++stats_.connects;
    } catch (const Error&) {
        next_attempt_ = Timestamp::from_micros(now.micros() + to_us(backoff_s_));
        backoff_s_ = std::min(backoff_s_ * 2, 30.0);
    }
}

void SolverNode::flush_alerts() {
    for (auto& alert : host_.drain()) {
        try {
            outbox_.push_back(idmef::to_xml(alert));
        } catch (const Error& e) {
            std::cerr << "dropping invalid alert from " << alert.analyzerid << ": " << e.what() << "\n";
        }
    }
    while (conn_ && !outbox_.empty()) {
        const std::string& xml = outbox_.front();
        conn_->send(wire::MsgType::Alert, ByteView(reinterpret_cast<const std::uint8_t*>(xml.data()), xml.size()));
        ++awaiting_ack_;
        ++stats_.alerts_sent;
        outbox_.pop_front();
    }
}

void SolverNode::pump(std::chrono::milliseconds wait) {
    std::lock_guard lock(mu_);
    Timestamp now = clock_.now();
    if (!conn_) {
        if (now < next_attempt_) return;
        connect_now(now);
        if (!conn_) return;
    }
    try {
        auto f = conn_->receive(wait);
        while (f) {
            switch (f->type) {
            case wire::MsgType::TrafficBatch:
                for (const auto& br : wire::parse_batch(f->payload)) {
                    ++stats_.records;
                    try {
                        host_.feed(parse_frame(br.data, br.ts));
                    } catch (const Error&) {
                        // runt frame: nothing to analyze
                    }
                }
                break;
            case wire::MsgType::Ack:
                if (awaiting_ack_ > 0) --awaiting_ack_;
                ++stats_.alerts_acked;
                break;
            case wire::MsgType::Error: {
                auto err = wire::decode_error(f->payload);
                if (err.code != wire::ErrorCode::InvalidIdmef) throw Error(Errc::ConnectionClosed, err.message);
                if (awaiting_ack_ > 0) --awaiting_ack_;
                ++stats_.alerts_rejected;
                break;
            }
            case wire::MsgType::Bye:
                throw Error(Errc::ConnectionClosed, "head-server said BYE");
            default:
                break;
            }
            flush_alerts();
            f = conn_->receive(0ms);
        }
        host_.tick(clock_.now());
        flush_alerts();
        now = clock_.now();
        if ((now.micros() - last_heartbeat_.micros()) >= to_us(config_.heartbeat_s)) {
            std::string xml = idmef::to_xml(idmef::build_heartbeat(
                config_.solver_id, now, static_cast<std::uint32_t>(config_.heartbeat_s), heartbeat_ids_));
            conn_->send(wire::MsgType::Heartbeat,
                        ByteView(reinterpret_cast<const std::uint8_t*>(xml.data()), xml.size()));
            last_heartbeat_ = now;
            ++stats_.heartbeats;
        }
    } catch (const Error&) {
        conn_->close();
        conn_.reset();
        awaiting_ack_ = 0;
        next_attempt_ = Timestamp::from_micros(now.micros() + to_us(backoff_s_));
        backoff_s_ = std::min(backoff_s_ * 2, 30.0);
    }
}

void SolverNode::shutdown() {
    std::lock_guard lock(mu_);
    if (!conn_) return;
    try {
        conn_->send(wire::MsgType::Bye);
    } catch (const Error&) {
    }
    conn_->close();
    conn_.reset();
}

bool SolverNode::connected() const {
    std::lock_guard lock(mu_);
    return conn_ != nullptr;
}

bool SolverNode::idle() const {
    std::lock_guard lock(mu_);
    return outbox_.empty() && awaiting_ack_ == 0;
}

SolverStats SolverNode::stats() const {
    std::lock_guard lock(mu_);
    SolverStats s = stats_;
    s.disabled = host_.disabled();
    return s;
}

void run_solver(SolverNode& node, const std::atomic<bool>& stop) {
    while (!stop) node.pump(std::chrono::milliseconds(20));
    node.shutdown();
}

}  // namespace dnids::solver
