#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "dnids/clock.hpp"
#include "dnids/filter.hpp"
#include "dnids/idmef.hpp"
#include "dnids/ini.hpp"
#include "dnids/transport.hpp"

namespace dnids::solver {

/// Builds alerts stamped with one analyzer's identity and the injected clock.
class AlertFactory {
public:
    AlertFactory(std::string analyzer_id, const Clock& clock, std::uint64_t seed)
        : analyzer_id_(std::move(analyzer_id)), clock_(&clock), ids_(seed) {}

    idmef::Alert make(const std::vector<Ipv4Addr>& sources, const std::vector<Ipv4Addr>& targets,
                      std::string classification, idmef::AlertExtras extras = {});
    const std::string& analyzer_id() const noexcept { return analyzer_id_; }

private:
    std::string analyzer_id_;
    const Clock* clock_;
    idmef::MessageIdGenerator ids_;
};

/// Third-party analysis modules implement this. Analyzers must be deterministic in the
/// sequence of packets and ticks they are given; drain() hands over each alert once.
class Analyzer {
public:
    virtual ~Analyzer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<std::string> classifications() const = 0;
    virtual void on_packet(const Packet& p) = 0;
    virtual void on_tick(Timestamp /*now*/) {}
    virtual std::vector<idmef::Alert> drain() = 0;
};

struct AnalyzerEnv {
    std::string analyzer_id;  // solver_id + "/" + analyzer name
    const Clock& clock;
    std::uint64_t seed = 0;
    const Ini* params = nullptr;  // "<analyzer>.<key>" settings, may be null
};

using AnalyzerMaker = std::function<std::unique_ptr<Analyzer>(const AnalyzerEnv&)>;

class AnalyzerRegistry {
public:
    /// Registry preloaded with "portscan" and "arpspoof".
    static AnalyzerRegistry with_builtins();

    void add(const std::string& name, AnalyzerMaker maker);
    /// Throws Error(BadConfig) for unknown names.
    std::unique_ptr<Analyzer> create(const std::string& name, const AnalyzerEnv& env) const;
    std::vector<std::string> names() const;

private:
    std::map<std::string, AnalyzerMaker> makers_;
};

// ---- reference analyzers --------------------------------------------------

struct PortScanParams {
    std::size_t threshold = 15;
    double window_s = 5.0;
    double cooldown_s = 60.0;
    std::size_t max_targets = 10;
};

/// Counts distinct (dst_ip, dst_port) touched by SYN-without-ACK per source over a sliding
/// window of packet time.
class PortScanAnalyzer final : public Analyzer {
public:
    PortScanAnalyzer(AlertFactory factory, PortScanParams params = {});
    std::string name() const override { return "portscan"; }
    std::vector<std::string> classifications() const override { return {"Port scan"}; }
    void on_packet(const Packet& p) override;
    std::vector<idmef::Alert> drain() override;

private:
    struct SourceState {
        std::map<Endpoint, std::int64_t> touched;  // target -> last SYN (us)
        std::optional<std::int64_t> cooldown_until;
    };
    AlertFactory factory_;
    PortScanParams params_;
    std::map<Ipv4Addr, SourceState> sources_;
    std::vector<idmef::Alert> out_;
};

/// Remembers the first MAC seen for each IP and reports ARP replies claiming another one.
class ArpSpoofAnalyzer final : public Analyzer {
public:
    explicit ArpSpoofAnalyzer(AlertFactory factory) : factory_(std::move(factory)) {}
    std::string name() const override { return "arpspoof"; }
    std::vector<std::string> classifications() const override { return {"ARP spoofing"}; }
    void on_packet(const Packet& p) override;
    std::vector<idmef::Alert> drain() override;

    std::size_t conflicts() const noexcept { return alerted_.size(); }

private:
    AlertFactory factory_;
    std::map<Ipv4Addr, MacAddr> first_seen_;
    std::set<std::pair<Ipv4Addr, MacAddr>> alerted_;
    std::vector<idmef::Alert> out_;
};

// ---- host -----------------------------------------------------------------

/// Feeds every analyzer in order; an analyzer that throws is disabled and the rest go on.
class SolverHost {
public:
    void add(std::unique_ptr<Analyzer> a);
    void feed(const Packet& p);
    void tick(Timestamp now);
    std::vector<idmef::Alert> drain();

    std::size_t size() const noexcept { return analyzers_.size(); }
    std::vector<std::string> disabled() const;
    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    template <typename F>
    void guarded(std::size_t i, F&& f);

    struct Slot {
        std::unique_ptr<Analyzer> analyzer;
        bool enabled = true;
    };
    std::vector<Slot> analyzers_;
    std::vector<std::string> errors_;
};

// ---- daemon ---------------------------------------------------------------

struct SolverConfig {
    std::string solver_id = "solver";
    std::string head_address = "127.0.0.1:7415";
    std::string token;
    std::string group = "default";
    std::vector<FilterRule> subscription;
    std::vector<std::string> analyzers = {"portscan", "arpspoof"};
    double heartbeat_s = 10.0;
    std::uint64_t seed = 1;
    Ini params;

    void validate() const;
    /// Keys: solver_id, head, token, group, subscription, analyzers, heartbeat_s, seed, and
    /// per-analyzer settings such as portscan.threshold.
    static SolverConfig from_ini(const Ini& ini);
};

struct SolverStats {
    std::uint64_t records = 0;
    std::uint64_t alerts_sent = 0;
    std::uint64_t alerts_acked = 0;
    std::uint64_t alerts_rejected = 0;
    std::uint64_t heartbeats = 0;
    std::uint64_t connects = 0;
    std::vector<std::string> disabled;
};

class SolverNode {
public:
    using Connector = std::function<TransportPtr()>;

    SolverNode(SolverConfig config, Connector connect, const Clock& clock,
               const AnalyzerRegistry& registry = AnalyzerRegistry::with_builtins());
    ~SolverNode();

    /// Adds an analyzer built outside the registry.
    void add_analyzer(std::unique_ptr<Analyzer> a);
    /// One round: (re)connect, wait up to `wait` for traffic, analyze, send alerts, heartbeat.
    void pump(std::chrono::milliseconds wait = std::chrono::milliseconds(20));
    void shutdown();
    bool connected() const;
    /// No alert waits to be sent or acknowledged.
    bool idle() const;
    SolverStats stats() const;
    const SolverConfig& config() const noexcept { return config_; }

private:
    void connect_now(Timestamp now);
    void flush_alerts();

    SolverConfig config_;
    Connector connect_;
    const Clock& clock_;
    SolverHost host_;
    std::unique_ptr<FramedConnection> conn_;
    std::deque<std::string> outbox_;
    std::size_t awaiting_ack_ = 0;
    Timestamp last_heartbeat_{0, 0};
    Timestamp next_attempt_{0, 0};
    double backoff_s_ = 1.0;
    idmef::MessageIdGenerator heartbeat_ids_;
    mutable std::mutex mu_;
    SolverStats stats_;
};

/// Pumps until *stop becomes true, then says BYE.
void run_solver(SolverNode& node, const std::atomic<bool>& stop);

}  // namespace dnids::solver
