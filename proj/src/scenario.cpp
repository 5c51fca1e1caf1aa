#include "dnids/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "dnids/clock.hpp"
#include "dnids/error.hpp"
#include "dnids/head.hpp"
#include "dnids/idmef.hpp"
#include "dnids/sensor.hpp"
#include "dnids/solver.hpp"

namespace dnids::scenario {
namespace {

constexpr const char* kToken = "scenario";

[[noreturn]] void fail(const std::string& what) { throw Error(Errc::BadScenario, what); }

std::vector<std::string> words(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

long long number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    fail(what + ": not a number: " + text);
}

long long int_key(const Ini& ini, const std::string& key, long long fallback) {
    try {
        return ini.get_int(key, fallback);
    } catch (const Error& e) {
        fail(e.what());
    }
}

std::uint8_t proto_of(const std::string& s) {
    if (s == "udp") return ipproto::kUdp;
    if (s == "tcp") return ipproto::kTcp;
    fail("unknown protocol " + s);
}

const sim::HostConfig& host_named(const Scenario& sc, const std::string& id) {
    for (const auto& h : sc.hosts)
        if (h.id == id) return h;
    fail("unknown host " + id);
}

void parse_traffic_line(Scenario& sc, const std::string& key, const std::string& line) {
    auto w = words(line);
    if (w.empty()) fail(key + ": empty traffic line");
    auto arg = [&](std::size_t i) -> long long {
        if (i >= w.size()) fail(key + ": missing argument " + std::to_string(i));
        return number(w[i], key);
    };
    sim::TrafficScript& out = sc.script;
    if (w[0] == "all_pairs") {
        sim::Tick from = arg(1), to = arg(2);
        sim::Tick every = w.size() > 3 ? arg(3) : 1;
        std::uint8_t proto = w.size() > 4 ? proto_of(w[4]) : ipproto::kUdp;
        std::size_t payload = w.size() > 5 ? static_cast<std::size_t>(arg(5)) : 10;
        if (every <= 0) fail(key + ": step must be positive");
        auto eps = sc.endpoints();
        for (sim::Tick t = from; t < to; t += every)
            for (const auto* a : eps)
                for (const auto* b : eps) {
                    if (a == b) continue;
                    sim::FrameTemplate f;
                    f.dst_ip = b->ip;
                    f.proto = proto;
                    f.src_port = 40000;
                    f.dst_port = 9;
                    f.payload_len = payload;
                    f.tcp_flags = proto == ipproto::kTcp ? tcpflag::kAck : 0;
                    out.push_back({t, a->id, f});
                }
    } else if (w[0] == "syn_scan") {
        if (w.size() < 6) fail(key + ": syn_scan SRC DST FROM COUNT SPACING [BASE_PORT]");
        const auto& dst = host_named(sc, w[2]);
        host_named(sc, w[1]);
        sim::Tick from = arg(3);
        long long count = arg(4), spacing = arg(5);
        long long base = w.size() > 6 ? arg(6) : 1;
        if (base < 1 || base + count > 65536) fail(key + ": port range out of bounds");
        for (long long i = 0; i < count; ++i) {
            sim::FrameTemplate f;
            f.dst_ip = dst.ip;
            f.proto = ipproto::kTcp;
            f.src_port = 40000;
            f.dst_port = static_cast<std::uint16_t>(base + i);
            f.tcp_flags = tcpflag::kSyn;
            out.push_back({from + i * spacing, w[1], f});
        }
    } else if (w[0] == "flow") {
        if (w.size() < 9) fail(key + ": flow SRC DST FROM TO EVERY PROTO SPORT DPORT [PAYLOAD]");
        const auto& dst = host_named(sc, w[2]);
        host_named(sc, w[1]);
        sim::Tick from = arg(3), to = arg(4), every = arg(5);
        if (every <= 0) fail(key + ": step must be positive");
        sim::FrameTemplate f;
        f.dst_ip = dst.ip;
        f.proto = proto_of(w[6]);
        f.src_port = static_cast<std::uint16_t>(arg(7));
        f.dst_port = static_cast<std::uint16_t>(arg(8));
        f.payload_len = w.size() > 9 ? static_cast<std::size_t>(arg(9)) : 10;
        f.tcp_flags = f.proto == ipproto::kTcp ? tcpflag::kAck : 0;
        for (sim::Tick t = from; t < to; t += every) out.push_back({t, w[1], f});
    } else {
        fail(key + ": unknown traffic kind " + w[0]);
    }
}

bool caches_agree(const sim::Segment& seg, const TruthMap& truth) {
    for (const auto& h : seg.hosts()) {
        if (h.config.role != sim::HostRole::Endpoint) continue;
        for (const auto& [ip, entry] : h.arp_cache) {
            auto it = truth.find(ip);
            if (it == truth.end() || it->second != entry.mac) return false;
        }
    }
    return true;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(Errc::IoFailure, "cannot write " + p.string());
}

StrategyResult run_strategy(const Scenario& sc, Strategy strategy) {
    sim::SegmentConfig cfg;
    cfg.hosts = sc.hosts;
    for (const auto& h : sc.hosts) cfg.sw.ports.push_back(h.id);
    cfg.seed = sc.seed;
    cfg.arp_ttl_ticks = sc.arp_ttl_ticks;
    cfg.fdb_ttl_ticks = sc.fdb_ttl_ticks;
    cfg.tick_us = sc.tick_us;
    auto port_of = [&](const std::string& id) {
        auto it = std::find(cfg.sw.ports.begin(), cfg.sw.ports.end(), id);
        if (it == cfg.sw.ports.end()) fail("unknown host " + id);
        return static_cast<int>(it - cfg.sw.ports.begin());
    };
    if (strategy == Strategy::Mirror) cfg.sw.mirror = sim::MirrorConfig{port_of(sc.sensor), sc.mirror_capacity};
    if (strategy == Strategy::Tap) {
        if (sc.tap_host.empty()) fail("tap strategy needs tap_host");
        cfg.sw.tap = sim::TapConfig{port_of(sc.tap_host), port_of(sc.sensor)};
    }

    std::optional<sim::Segment> seg;
    try {
        seg.emplace(cfg);
    } catch (const Error& e) {
        fail(e.what());
    }
    StrategyResult r;
    r.strategy = strategy;
    const TruthMap truth = seg->truth();
    if (strategy == Strategy::Redirect) {
        std::set<Ipv4Addr> targets;
        if (sc.redirect_targets.empty())
            for (const auto* h : sc.endpoints()) targets.insert(h->ip);
        for (const auto& id : sc.redirect_targets) targets.insert(host_named(sc, id).ip);
        const auto& sensor = host_named(sc, sc.sensor);
        RedirectPlan plan;
        try {
            plan = plan_redirect(targets, truth, sensor.mac, sensor.ip, sc.repoison_interval_s);
        } catch (const Error& e) {
            fail(e.what());
        }
        r.impersonations = plan.impersonated().size();
        seg->attach_campaign(sc.sensor, RedirectCampaign(plan, truth), sc.campaign_start, sc.campaign_stop);
    }
    const auto& log = seg->run(sc.script, sc.ticks);
    std::set<Ipv4Addr> ips;
    for (const auto* h : sc.endpoints()) ips.insert(h->ip);
    r.coverage = sim::coverage(log, sc.sensor, sim::ordered_pairs(ips), sc.window);
    r.mirror_drops = log.count(sim::EventKind::MirrorDropped);
    r.caches_true = caches_agree(*seg, truth);
    r.delivery_log = log.serialize();
    r.observed = seg->observed(sc.sensor);
    return r;
}

bool wait_until(const std::function<bool()>& done, std::chrono::seconds limit, const std::function<void()>& step) {
    auto deadline = std::chrono::steady_clock::now() + limit;
    while (!done()) {
        if (std::chrono::steady_clock::now() > deadline) return false;
        step();
    }
    return true;
}

PipelineResult run_pipeline(const Scenario& sc, const StrategyResult& source, const std::filesystem::path& store_dir) {
    head::HeadConfig hc;
    hc.store_dir = store_dir;
    hc.token = kToken;
    hc.sync = false;
    // Head and solvers share a frozen clock at the end of the run so stored timestamps
    // depend on the scenario alone.
    ManualClock frozen(Timestamp::from_micros(1'700'000'000'000'000 + sc.ticks * sc.tick_us));
    auto server = head::HeadServer::open(hc, frozen);

    auto registry = solver::AnalyzerRegistry::with_builtins();
    std::vector<std::unique_ptr<solver::SolverNode>> solvers;
    for (int i = 1; i <= sc.pipeline.solvers; ++i) {
        solver::SolverConfig cfg;
        cfg.solver_id = "solver-" + std::to_string(i);
        cfg.token = kToken;
        cfg.analyzers = sc.pipeline.analyzers;
        cfg.seed = sc.seed + static_cast<std::uint64_t>(i);
        cfg.params = sc.pipeline.params;
        try {
            solvers.push_back(std::make_unique<solver::SolverNode>(cfg, [&] { return server->connect_local(); }, frozen, registry));
        } catch (const Error& e) {
            fail(e.what());
        }
    }
    auto pump_all = [&] {
        for (auto& s : solvers) s->pump(std::chrono::milliseconds(2));
    };
    if (!wait_until([&] { return server->registrations().size() == solvers.size(); }, std::chrono::seconds(5), pump_all))
        throw Error(Errc::ConnectionClosed, "solvers did not register");

    sensor::SensorConfig scfg;
    scfg.node_id = sc.sensor;
    scfg.token = kToken;
    scfg.channels = sc.pipeline.channels;
    scfg.flush_ms = 20;
    SystemClock wall;
    sensor::SensorNode node(scfg, [&](std::uint32_t) { return server->connect_local(); }, wall);
    std::vector<PcapRecord> records;
    for (const auto& p : source.observed) records.push_back(to_pcap_record(p));
    sensor::VectorSource src(records);
    auto stats = sensor::run_sensor(node, src);
    if (stats.records_sent != records.size()) throw Error(Errc::ConnectionClosed, "sensor did not deliver every record");

    auto settled = [&] {
        auto st = server->stats();
        for (auto& s : solvers) {
            auto it = st.dispatched.find(s->config().solver_id);
            std::uint64_t want = it == st.dispatched.end() ? 0 : it->second;
            if (s->stats().records != want || !s->idle()) return false;
        }
        return true;
    };
    if (!wait_until(settled, std::chrono::seconds(10), pump_all)) throw Error(Errc::ConnectionClosed, "solvers did not settle");

    PipelineResult r;
    for (auto& s : solvers) {
        r.records_analyzed += s->stats().records;
        s->shutdown();
    }
    r.records_stored = server->query_traffic({}).size();
    r.alerts = server->query_alerts({});
    server->stop();
    return r;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
    switch (s) {
    case Strategy::None: return "none";
    case Strategy::Mirror: return "mirror";
    case Strategy::Tap: return "tap";
    case Strategy::Redirect: return "redirect";
    }
    return "?";
}

Strategy parse_strategy(std::string_view text) {
    for (Strategy s : {Strategy::None, Strategy::Mirror, Strategy::Tap, Strategy::Redirect})
        if (strategy_name(s) == text) return s;
    fail("unknown strategy " + std::string(text));
}

std::vector<const sim::HostConfig*> Scenario::endpoints() const {
    std::vector<const sim::HostConfig*> out;
    for (const auto& h : hosts)
        if (h.role == sim::HostRole::Endpoint) out.push_back(&h);
    return out;
}

Scenario Scenario::parse(std::string_view text) {
    Ini ini;
    try {
        ini = Ini::parse(text);
    } catch (const Error& e) {
        fail(e.what());
    }
    Scenario sc;
    sc.name = ini.get_or("name", sc.name);
    sc.seed = static_cast<std::uint64_t>(int_key(ini, "seed", 1));
    sc.ticks = int_key(ini, "ticks", sc.ticks);
    sc.tick_us = int_key(ini, "tick_us", sc.tick_us);
    sc.arp_ttl_ticks = int_key(ini, "arp_ttl_ticks", sc.arp_ttl_ticks);
    sc.fdb_ttl_ticks = int_key(ini, "fdb_ttl_ticks", sc.fdb_ttl_ticks);
    if (sc.ticks <= 0 || sc.tick_us <= 0) fail("ticks and tick_us must be positive");

    auto sensor = ini.get("sensor");
    if (!sensor) fail("missing key sensor");
    sc.sensor = *sensor;
    auto ports = ini.get_list("ports");
    if (ports.empty()) fail("missing key ports");
    for (const auto& id : ports) {
        auto spec = ini.get("hosts." + id);
        if (!spec) fail("port " + id + " has no [hosts] entry");
        auto w = words(*spec);
        auto ip = w.size() == 2 ? Ipv4Addr::try_parse(w[0]) : std::nullopt;
        auto mac = w.size() == 2 ? MacAddr::try_parse(w[1]) : std::nullopt;
        if (!ip || !mac) fail("hosts." + id + ": expected \"ip mac\"");
        sc.hosts.push_back({id, *ip, *mac, id == sc.sensor ? sim::HostRole::Sensor : sim::HostRole::Endpoint});
    }
    for (const auto& [key, value] : ini.values())
        if (key.rfind("hosts.", 0) == 0 && std::find(ports.begin(), ports.end(), key.substr(6)) == ports.end())
            fail(key + " is not attached to any port");
    host_named(sc, sc.sensor);

    if (auto list = ini.get_list("strategies"); !list.empty()) {
        sc.strategies.clear();
        for (const auto& s : list) sc.strategies.push_back(parse_strategy(s));
    }
    sc.mirror_capacity = static_cast<int>(int_key(ini, "mirror_capacity", sc.mirror_capacity));
    sc.tap_host = ini.get_or("tap_host", "");
    sc.redirect_targets = ini.get_list("redirect_targets");
    try {
        sc.repoison_interval_s = ini.get_double("repoison_interval_s", sc.repoison_interval_s);
    } catch (const Error& e) {
        fail(e.what());
    }
    sc.campaign_start = int_key(ini, "campaign_start", 0);
    if (ini.get("campaign_stop")) sc.campaign_stop = int_key(ini, "campaign_stop", 0);
    sc.window.from = int_key(ini, "coverage_from", 0);
    sc.window.to = int_key(ini, "coverage_to", INT64_MAX);

    for (const auto& [key, value] : ini.values())
        if (key.rfind("traffic.", 0) == 0) parse_traffic_line(sc, key, value);
    std::stable_sort(sc.script.begin(), sc.script.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

    auto& pl = sc.pipeline;
    pl.enabled = ini.get_bool("pipeline.enabled", false);
    if (auto s = ini.get("pipeline.strategy")) pl.strategy = parse_strategy(*s);
    pl.channels = static_cast<std::uint32_t>(int_key(ini, "pipeline.channels", 1));
    pl.solvers = static_cast<int>(int_key(ini, "pipeline.solvers", 1));
    if (auto a = ini.get_list("pipeline.analyzers"); !a.empty()) pl.analyzers = a;
    for (const auto& [key, value] : ini.values())
        if (key.rfind("params.", 0) == 0) pl.params.set(key.substr(7), value);
    if (pl.enabled && (pl.channels < 1 || pl.solvers < 1)) fail("pipeline needs at least one channel and solver");
    if (pl.enabled && std::find(sc.strategies.begin(), sc.strategies.end(), pl.strategy) == sc.strategies.end())
        fail("pipeline strategy is not among the strategies run");
    return sc;
}

Scenario Scenario::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot read scenario " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const StrategyResult* ScenarioResult::find(Strategy s) const {
    for (const auto& r : strategies)
        if (r.strategy == s) return &r;
    return nullptr;
}

std::string ScenarioResult::coverage_table() const {
    std::string out = "strategy\tframes\tobserved\tcoverage\tmirror_drops\tcaches_true\n";
    for (const auto& r : strategies) {
        char cov[32];
        std::snprintf(cov, sizeof cov, "%.3f", r.coverage.fraction());
        out += std::string(strategy_name(r.strategy)) + "\t" + std::to_string(r.coverage.frames) + "\t" +
               std::to_string(r.coverage.observed) + "\t" + cov + "\t" + std::to_string(r.mirror_drops) + "\t" +
               (r.caches_true ? "yes" : "no") + "\n";
    }
    return out;
}

std::string alerts_table(const std::vector<store::AlertRow>& rows) {
    std::string out = "alert_id\tsolver\tanalyzer\tclassification\tseverity\tsource\ttargets\tduplicate\n";
    for (const auto& r : rows) {
        std::string sources, targets;
        try {
            auto parsed = idmef::parse_xml(r.xml);
            if (const auto* a = std::get_if<idmef::Alert>(&parsed.message)) {
                for (const auto& s : a->sources) sources += (sources.empty() ? "" : ",") + s.address;
                for (const auto& t : a->targets) targets += (targets.empty() ? "" : ",") + t.address;
            }
        } catch (const Error&) {
        }
        out += std::to_string(r.alert_id) + "\t" + r.solver_id + "\t" + r.analyzer_id + "\t" + r.classification_text + "\t" +
               r.severity.value_or("-") + "\t" + (sources.empty() ? "-" : sources) + "\t" +
               (targets.empty() ? "-" : targets) + "\t" + (r.duplicate ? "yes" : "no") + "\n";
    }
    return out;
}

ScenarioResult run_scenario(const Scenario& sc, const std::optional<std::filesystem::path>& out_dir) {
    ScenarioResult res;
    for (Strategy s : sc.strategies) res.strategies.push_back(run_strategy(sc, s));

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_file(*out_dir / "coverage.tsv", res.coverage_table());
        for (const auto& r : res.strategies) {
            auto dir = *out_dir / std::string(strategy_name(r.strategy));
            std::filesystem::create_directories(dir);
            write_file(dir / "delivery.tsv", r.delivery_log);
            std::vector<PcapRecord> recs;
            for (const auto& p : r.observed) recs.push_back(to_pcap_record(p));
            write_pcap_file((dir / "sensor.pcap").string(), recs);
        }
    }

    if (sc.pipeline.enabled) {
        std::filesystem::path store_dir;
        bool temporary = !out_dir;
        if (out_dir) {
            store_dir = *out_dir / "store";
            std::filesystem::remove_all(store_dir);
        } else {
            std::string tmpl = (std::filesystem::temp_directory_path() / "dnids-scenario-XXXXXX").string();
            if (::mkdtemp(tmpl.data()) == nullptr) throw Error(Errc::IoFailure, "mkdtemp failed");
            store_dir = tmpl;
        }
        try {
            res.pipeline = run_pipeline(sc, *res.find(sc.pipeline.strategy), store_dir);
        } catch (...) {
            if (temporary) std::filesystem::remove_all(store_dir);
            throw;
        }
        if (temporary) std::filesystem::remove_all(store_dir);
        if (out_dir) write_file(*out_dir / "alerts.tsv", alerts_table(res.pipeline->alerts));
    }
    return res;
}

}  // namespace dnids::scenario
