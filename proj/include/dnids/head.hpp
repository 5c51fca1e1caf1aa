#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dnids/clock.hpp"
#include "dnids/filter.hpp"
#include "dnids/ini.hpp"
#include "dnids/store.hpp"
#include "dnids/transport.hpp"

namespace dnids::head {

struct SolverRegistration {
    std::string solver_id;
    std::vector<FilterRule> subscription;
    std::string group;

    bool operator==(const SolverRegistration&) const = default;
};

struct DispatchDecision {
    std::uint64_t record_id = 0;
    std::vector<std::string> chosen;  // at most one solver per group, groups in name order

    bool operator==(const DispatchDecision&) const = default;
};

/// Per group: the subscribed members sorted by solver_id, one picked by FNV-1a-64 of the flow
/// key; keyless records go to the first member.
DispatchDecision dispatch(const store::TrafficRecord& record, const std::vector<SolverRegistration>& regs);

struct HeadConfig {
    std::string listen = "127.0.0.1:7415";
    std::filesystem::path store_dir = "dnids-store";
    std::string token;
    bool dedup = false;
    double heartbeat_s = 10.0;
    int missed_beats = 3;
    bool sync = true;
    std::uint64_t roll_bytes = 64ull << 20;

    void validate() const;
    /// Keys: listen, store_dir, token, dedup, heartbeat_s, missed_beats, fsync, roll_bytes.
    static HeadConfig from_ini(const Ini& ini);
};

struct HeadStats {
    std::uint64_t sessions_accepted = 0;
    std::uint64_t sessions_rejected = 0;
    std::uint64_t sessions_superseded = 0;
    std::uint64_t sessions_timed_out = 0;
    std::uint64_t batches = 0;
    std::uint64_t batches_malformed = 0;
    std::uint64_t store_failures = 0;
    std::uint64_t records = 0;
    std::uint64_t duplicates_skipped = 0;
    std::uint64_t alerts_accepted = 0;
    std::uint64_t alerts_rejected = 0;
    std::uint64_t heartbeats = 0;
    std::uint64_t byes = 0;
    std::map<std::string, std::uint64_t> dispatched;  // solver_id -> records
};

class HeadServer {
public:
    HeadServer(HeadConfig config, std::unique_ptr<store::TrafficStore> traffic,
               std::unique_ptr<store::AlertStore> alerts, const Clock& clock);
    /// File-backed stores under <store_dir>/traffic and <store_dir>/alerts.
    static std::unique_ptr<HeadServer> open(HeadConfig config, const Clock& clock);
    ~HeadServer();

    HeadServer(const HeadServer&) = delete;
    HeadServer& operator=(const HeadServer&) = delete;

    /// Parses the whole batch, persists every record and flushes before returning the ids.
    /// Throws Error(MalformedBatch) with the store untouched, or Error(StoreFailure).
    std::vector<std::uint64_t> ingest_batch(const std::string& sensor_id, ByteView payload);
    /// Throws the parse or validation error; nothing is stored in that case.
    std::uint64_t ingest_alert(const std::string& solver_id, std::string_view xml);

    std::vector<store::TrafficRecord> query_traffic(const store::TrafficQuery& q) const;
    std::vector<store::AlertRow> query_alerts(const store::AlertCriteria& c) const;

    /// Binds the configured listener and accepts sessions on a background thread.
    void start();
    std::uint16_t port() const;
    /// In-process session (colocated solver or sensor); returns the client end.
    TransportPtr connect_local();
    /// Serves an already-connected transport on its own thread.
    void serve(TransportPtr transport);
    void stop();

    void add_registration(SolverRegistration reg);  // for sessionless use
    std::vector<SolverRegistration> registrations() const;
    std::size_t live_sessions() const;
    HeadStats stats() const;
    const HeadConfig& config() const noexcept { return config_; }

private:
    struct Session;

    void run_session(std::shared_ptr<Session> s);
    void fan_out(const std::vector<store::TrafficRecord>& records);

    HeadConfig config_;
    std::unique_ptr<store::TrafficStore> traffic_;
    std::unique_ptr<store::AlertStore> alerts_;
    const Clock& clock_;
    wire::SessionRegistry registry_;

    std::mutex ingest_mu_;  // single writer for the traffic store, and dispatch order
    std::mutex alert_mu_;
    std::set<std::uint64_t> seen_digests_;

    mutable std::mutex mu_;  // sessions, registrations, stats
    std::map<std::uint64_t, std::shared_ptr<Session>> sessions_;
    std::map<std::string, std::pair<SolverRegistration, std::uint64_t>> solvers_;  // id -> (reg, session)
    HeadStats stats_;

    std::atomic<bool> running_{false};
    std::unique_ptr<TcpListener> listener_;
    std::thread accept_thread_;
    std::mutex threads_mu_;
    std::vector<std::thread> session_threads_;
};

}  // namespace dnids::head
