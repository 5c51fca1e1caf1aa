#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnids/ini.hpp"
#include "dnids/segment_sim.hpp"
#include "dnids/store.hpp"

namespace dnids::scenario {

enum class Strategy { None, Mirror, Tap, Redirect };

std::string_view strategy_name(Strategy s);
/// Throws Error(BadScenario).
Strategy parse_strategy(std::string_view text);

struct PipelineSpec {
    bool enabled = false;
    Strategy strategy = Strategy::Redirect;  // whose sensor capture feeds the pipeline
    std::uint32_t channels = 1;
    int solvers = 1;
    std::vector<std::string> analyzers = {"portscan", "arpspoof"};
    Ini params;  // analyzer settings, e.g. portscan.threshold
};

/// A desk-scale experiment: one segment, a traffic script, and the capture strategies to
/// compare on it.
///
/// Top-level keys: name, seed, ticks, tick_us, arp_ttl_ticks, fdb_ttl_ticks, ports (switch
/// port order), sensor, strategies, mirror_capacity, tap_host, redirect_targets,
/// repoison_interval_s, campaign_start, campaign_stop, coverage_from, coverage_to.
/// [hosts] maps id to "ip mac". [traffic] lines are one of
///   all_pairs FROM TO [EVERY [udp|tcp [PAYLOAD]]]
///   syn_scan SRC DST FROM COUNT SPACING [BASE_PORT]
///   flow SRC DST FROM TO EVERY udp|tcp SPORT DPORT [PAYLOAD]
/// [pipeline] has enabled, strategy, channels, solvers, analyzers; [params] is passed to
/// the analyzers.
struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    sim::Tick ticks = 100;
    std::int64_t tick_us = 1000;
    sim::Tick arp_ttl_ticks = sim::kDefaultArpTtl;
    sim::Tick fdb_ttl_ticks = sim::kDefaultFdbTtl;
    std::vector<sim::HostConfig> hosts;  // in switch port order
    std::string sensor;
    std::vector<Strategy> strategies = {Strategy::None, Strategy::Redirect};
    int mirror_capacity = 1;
    std::string tap_host;
    std::vector<std::string> redirect_targets;  // empty: every endpoint
    double repoison_interval_s = 20.0;
    sim::Tick campaign_start = 0;
    std::optional<sim::Tick> campaign_stop;
    sim::CoverageWindow window;
    sim::TrafficScript script;
    PipelineSpec pipeline;

    /// Throws Error(BadScenario) naming the offending key.
    static Scenario parse(std::string_view text);
    static Scenario load(const std::filesystem::path& path);

    std::vector<const sim::HostConfig*> endpoints() const;
};

struct StrategyResult {
    Strategy strategy = Strategy::None;
    sim::CoverageResult coverage;
    std::size_t mirror_drops = 0;
    bool caches_true = true;  // every endpoint cache entry agrees with the true addressing
    std::size_t impersonations = 0;
    std::string delivery_log;
    std::vector<Packet> observed;
};

struct PipelineResult {
    std::size_t records_stored = 0;
    std::size_t records_analyzed = 0;
    std::vector<store::AlertRow> alerts;
};

struct ScenarioResult {
    std::vector<StrategyResult> strategies;
    std::optional<PipelineResult> pipeline;

    const StrategyResult* find(Strategy s) const;
    /// strategy, frames, observed, coverage (%.3f), mirror_drops, caches_true; tab-separated.
    std::string coverage_table() const;
};

/// Runs every strategy on a fresh segment and then the pipeline, if enabled. With `out_dir`
/// set, writes coverage.tsv, <strategy>/delivery.tsv, <strategy>/sensor.pcap, and for the
/// pipeline store/ and alerts.tsv. Throws Error(BadScenario) when the scenario cannot run.
ScenarioResult run_scenario(const Scenario& sc, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string alerts_table(const std::vector<store::AlertRow>& rows);

}  // namespace dnids::scenario
