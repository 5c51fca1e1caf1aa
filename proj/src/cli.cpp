#include "dnids/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dnids/arp_redirect.hpp"
#include "dnids/error.hpp"
#include "dnids/head.hpp"
#include "dnids/idmef.hpp"
#include "dnids/scenario.hpp"
#include "dnids/sensor.hpp"
#include "dnids/solver.hpp"
#include "dnids/store.hpp"

namespace dnids::cli {
namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void install_signals() {
    g_stop = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
}

void apply_token_env(std::string& token) {
    if (const char* t = std::getenv("DNIDS_TOKEN"); t != nullptr && *t != '\0') token = t;
}

Timestamp parse_time(const std::string& text) {
    if (auto t = idmef::parse_iso8601(text)) return *t;
    try {
        std::size_t used = 0;
        long long s = std::stoll(text, &used);
        if (used == text.size()) return {s, 0};
    } catch (const std::exception&) {
    }
    throw Error(Errc::BadConfig, "bad time '" + text + "' (ISO 8601 or unix seconds)");
}

Endpoint parse_endpoint(const std::string& text) {
    auto colon = text.rfind(':');
    auto ip = colon == std::string::npos ? std::nullopt : Ipv4Addr::try_parse(text.substr(0, colon));
    if (!ip) throw Error(Errc::BadConfig, "bad endpoint '" + text + "'");
    try {
        unsigned long port = std::stoul(text.substr(colon + 1));
        if (port <= 65535) return {*ip, static_cast<std::uint16_t>(port)};
    } catch (const std::exception&) {
    }
    throw Error(Errc::BadConfig, "bad endpoint '" + text + "'");
}

FlowKey parse_flow(const std::string& text) {
    std::istringstream in(text);
    std::string proto, a, b, extra;
    if (!(in >> proto >> a >> b) || (in >> extra)) throw Error(Errc::BadConfig, "flow is 'PROTO IP:PORT IP:PORT'");
    int p = 0;
    try {
        p = std::stoi(proto);
    } catch (const std::exception&) {
        p = -1;
    }
    if (p < 0 || p > 255) throw Error(Errc::BadConfig, "bad protocol '" + proto + "'");
    return FlowKey::make(static_cast<std::uint8_t>(p), parse_endpoint(a), parse_endpoint(b));
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::BadConfig, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- subcommands ----------------------------------------------------------

struct SimOpts {
    std::string scenario;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

int sim_run(const SimOpts& o, std::ostream& out) {
    auto sc = scenario::Scenario::load(o.scenario);
    if (o.seed) sc.seed = *o.seed;
    std::filesystem::path dir = o.out_dir.empty() ? std::filesystem::path(sc.name + "-out") : std::filesystem::path(o.out_dir);
    auto res = scenario::run_scenario(sc, dir);
    out << res.coverage_table();
    if (res.pipeline) {
        out << "records_stored\t" << res.pipeline->records_stored << "\n";
        out << scenario::alerts_table(res.pipeline->alerts);
    }
    return kOk;
}

struct DaemonOpts {
    std::string config;
    std::string pcap;
    std::string emit;
    std::optional<std::uint64_t> seed;
    bool once = false;
};

int run_head(const DaemonOpts& o, std::ostream& out) {
    auto cfg = head::HeadConfig::from_ini(Ini::load(o.config));
    apply_token_env(cfg.token);
    cfg.validate();
    SystemClock clock;
    auto server = head::HeadServer::open(cfg, clock);
    install_signals();
    server->start();
    out << "head listening on port " << server->port() << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server->stop();
    auto st = server->stats();
    out << "batches " << st.batches << " records " << st.records << std::endl;
    return kOk;
}

int run_solver_cmd(const DaemonOpts& o, std::ostream& out) {
    auto cfg = solver::SolverConfig::from_ini(Ini::load(o.config));
    apply_token_env(cfg.token);
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    auto [host, port] = parse_address(cfg.head_address);
    SystemClock clock;
    solver::SolverNode node(cfg, [host = host, port = port] { return tcp_connect(host, port); }, clock);
    install_signals();
    out << "solver " << cfg.solver_id << " connecting to " << cfg.head_address << std::endl;
    solver::run_solver(node, g_stop);
    auto st = node.stats();
    out << "records " << st.records << " alerts " << st.alerts_acked << std::endl;
    return kOk;
}

void print_sensor_stats(const sensor::SensorStats& st, std::ostream& out) {
    out << "captured\t" << st.captured << "\nfiltered_out\t" << st.filtered_out << "\nrecords_sent\t" << st.records_sent
        << "\nbatches_acked\t" << st.batches_acked << "\nretransmits\t" << st.retransmits << "\n";
}

int run_sensor_cmd(const DaemonOpts& o, std::ostream& out) {
    Ini ini = Ini::load(o.config);
    auto cfg = sensor::SensorConfig::from_ini(ini);
    apply_token_env(cfg.token);
    cfg.validate();
    std::string source = o.pcap.empty() ? ini.get_or("source", "") : o.pcap;
    if (source.empty()) throw Error(Errc::BadConfig, "no capture source: give --pcap or 'source' in the config");
    auto src = sensor::open_pcap_source(source);

    std::mutex emit_mu;
    std::vector<PcapRecord> emitted;
    sensor::SensorNode::FrameSink sink;
    if (!o.emit.empty())
        sink = [&](const Packet& p, double) {
            std::lock_guard lock(emit_mu);
            emitted.push_back(to_pcap_record(p));
        };
    SystemClock clock;
    sensor::SensorNode node(cfg, sensor::tcp_connector(cfg.head_address), clock, sink);
    install_signals();
    sensor::RunOptions ro;
    ro.stop_when_drained = o.once;
    ro.stop = &g_stop;
    auto st = sensor::run_sensor(node, *src, ro);
    if (!o.emit.empty()) write_pcap_file(o.emit, emitted);
    print_sensor_stats(st, out);
    if (node.auth_rejected()) throw Error(Errc::AuthFailed, "head-server rejected the token");
    return kOk;
}

struct ReplayOpts {
    std::string config;
    std::string pcap;
    std::string head;
    std::string token;
    std::string node_id;
    std::uint32_t channels = 0;
};

int replay(const ReplayOpts& o, std::ostream& out) {
    sensor::SensorConfig cfg;
    if (!o.config.empty()) cfg = sensor::SensorConfig::from_ini(Ini::load(o.config));
    cfg.redirect.reset();
    if (!o.head.empty()) cfg.head_address = o.head;
    if (!o.token.empty()) cfg.token = o.token;
    if (!o.node_id.empty()) cfg.node_id = o.node_id;
    if (o.channels != 0) cfg.channels = o.channels;
    apply_token_env(cfg.token);
    cfg.validate();
    auto src = sensor::open_pcap_source(o.pcap);
    SystemClock clock;
    sensor::SensorNode node(cfg, sensor::tcp_connector(cfg.head_address), clock);
    auto st = sensor::run_sensor(node, *src);
    print_sensor_stats(st, out);
    if (node.auth_rejected()) throw Error(Errc::AuthFailed, "head-server rejected the token");
    return kOk;
}

struct PlanOpts {
    std::string targets;
    std::string truth;
    std::string sensor_mac;
    std::string sensor_ip;
    double interval = 20.0;
};

int redirect_plan(const PlanOpts& o, std::ostream& out) {
    auto truth = sensor::parse_truth(split_list(o.truth));
    std::set<Ipv4Addr> targets;
    for (const auto& t : split_list(o.targets)) {
        auto ip = Ipv4Addr::try_parse(t);
        if (!ip) throw Error(Errc::BadConfig, "bad target '" + t + "'");
        targets.insert(*ip);
    }
    auto mac = MacAddr::try_parse(o.sensor_mac);
    auto ip = Ipv4Addr::try_parse(o.sensor_ip);
    if (!mac || !ip) throw Error(Errc::BadConfig, "bad sensor address");
    RedirectPlan plan;
    try {
        plan = plan_redirect(targets, truth, *mac, *ip, o.interval);
    } catch (const Error& e) {
        throw Error(Errc::BadConfig, e.what());
    }
    for (const auto& d : plan.directives)
        out << d.victim_ip.to_string() << " " << d.victim_mac.to_string() << " " << d.impersonated_ip.to_string() << " "
            << plan.sensor_mac.to_string() << "\n";
    return kOk;
}

struct QueryOpts {
    std::string store;
    std::string classification;
    std::string analyzer;
    std::string from;
    std::string to;
    std::string flow;
    std::size_t limit = 0;
    bool xml = false;
};

int alerts_query(const QueryOpts& o, std::ostream& out) {
    auto dir = std::filesystem::path(o.store) / "alerts";
    if (!std::filesystem::is_directory(dir)) throw Error(Errc::BadConfig, "no alert store under " + o.store);
    auto st = store::FileAlertStore::open(dir, false);
    store::AlertCriteria c;
    if (!o.classification.empty()) c.classification = o.classification;
    if (!o.analyzer.empty()) c.analyzer = o.analyzer;
    if (!o.from.empty()) c.from = parse_time(o.from);
    if (!o.to.empty()) c.to = parse_time(o.to);
    if (o.limit != 0) c.limit = o.limit;
    auto rows = st->query(c);
    if (o.xml) {
        for (const auto& r : rows) out << r.xml << "\n";
    } else {
        out << scenario::alerts_table(rows);
    }
    return kOk;
}

int traffic_query(const QueryOpts& o, std::ostream& out) {
    auto dir = std::filesystem::path(o.store) / "traffic";
    if (!std::filesystem::is_directory(dir)) throw Error(Errc::BadConfig, "no traffic store under " + o.store);
    auto st = store::FileTrafficStore::open(dir, {.read_only = true});
    store::TrafficQuery q;
    if (!o.from.empty()) q.from = parse_time(o.from);
    if (!o.to.empty()) q.to = parse_time(o.to);
    if (!o.flow.empty()) q.flow = parse_flow(o.flow);
    if (o.limit != 0) q.limit = o.limit;
    std::vector<store::TrafficRecord> rows;
    try {
        rows = st->query(q);
    } catch (const Error& e) {
        if (e.code() == Errc::BadRange) throw Error(Errc::BadConfig, e.what());
        throw;
    }
    out << "record_id\tts\tsensor\torig_len\tflow\n";
    for (const auto& r : rows)
        out << r.record_id << "\t" << idmef::iso8601(r.ts) << "\t" << r.sensor_id << "\t" << r.orig_len << "\t"
            << (r.flow_key ? r.flow_key->to_string() : "-") << "\n";
    return kOk;
}

int idmef_validate(const std::string& file, std::ostream& out) {
    std::string xml = slurp(file);
    idmef::ParseResult parsed;
    try {
        parsed = idmef::parse_xml(xml);
    } catch (const Error& e) {
        out << "invalid: " << e.what() << "\n";
        return kFailure;
    }
    std::vector<std::string> v = std::visit([](const auto& m) { return idmef::validate(m); }, parsed.message);
    for (const auto& s : v) out << "violation: " << s << "\n";
    if (v.empty()) out << "valid\n";
    return v.empty() ? kOk : kFailure;
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
    case Errc::BadConfig:
    case Errc::BadScenario:
        return kUsage;
    default:
        return kFailure;
    }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Distributed network intrusion detection on a switched segment", "dnids"};
    app.require_subcommand(1, 1);
    std::function<int()> action;

    SimOpts sim;
    auto* sim_cmd = app.add_subcommand("sim-run", "Run a scenario on the segment simulator");
    sim_cmd->add_option("scenario", sim.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--out", sim.out_dir, "Output directory (default <name>-out)");
    sim_cmd->add_option("--seed", sim.seed, "Override the scenario seed");
    sim_cmd->callback([&] { action = [&] { return sim_run(sim, out); }; });

    DaemonOpts daemon;
    auto* sensor_cmd = app.add_subcommand("sensor", "Capture and ship traffic to the head-server");
    sensor_cmd->add_option("--config", daemon.config, "Sensor INI file")->required()->check(CLI::ExistingFile);
    sensor_cmd->add_option("--pcap", daemon.pcap, "Capture source (pcap file)");
    sensor_cmd->add_option("--emit", daemon.emit, "Write campaign frames to this pcap file");
    sensor_cmd->add_flag("--once", daemon.once, "Exit once the source is drained");
    sensor_cmd->callback([&] { action = [&] { return run_sensor_cmd(daemon, out); }; });

    auto* head_cmd = app.add_subcommand("head", "Run the head-server");
    head_cmd->add_option("--config", daemon.config, "Head INI file")->required()->check(CLI::ExistingFile);
    head_cmd->callback([&] { action = [&] { return run_head(daemon, out); }; });

    auto* solver_cmd = app.add_subcommand("solver", "Run a solver-server");
    solver_cmd->add_option("--config", daemon.config, "Solver INI file")->required()->check(CLI::ExistingFile);
    solver_cmd->add_option("--seed", daemon.seed, "Seed for message identifiers");
    solver_cmd->callback([&] { action = [&] { return run_solver_cmd(daemon, out); }; });

    ReplayOpts rep;
    auto* replay_cmd = app.add_subcommand("replay", "Replay a pcap through a sensor and exit");
    replay_cmd->add_option("--pcap", rep.pcap, "pcap file")->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("--config", rep.config, "Sensor INI file")->check(CLI::ExistingFile);
    replay_cmd->add_option("--head", rep.head, "Head-server address host:port");
    replay_cmd->add_option("--token", rep.token, "Shared token");
    replay_cmd->add_option("--node-id", rep.node_id, "Sensor name");
    replay_cmd->add_option("--channels", rep.channels, "Parallel channels")->check(CLI::PositiveNumber);
    replay_cmd->callback([&] { action = [&] { return replay(rep, out); }; });

    PlanOpts plan;
    auto add_plan_options = [&](CLI::App* cmd) {
        cmd->add_option("--targets", plan.targets, "Comma-separated target IPs")->required();
        cmd->add_option("--truth", plan.truth, "Comma-separated ip=mac entries")->required();
        cmd->add_option("--sensor-mac", plan.sensor_mac, "Sensor MAC")->required();
        cmd->add_option("--sensor-ip", plan.sensor_ip, "Sensor IP")->required();
        cmd->add_option("--interval", plan.interval, "Repoison interval in seconds")->check(CLI::PositiveNumber);
        cmd->callback([&] { action = [&] { return redirect_plan(plan, out); }; });
    };
    add_plan_options(app.add_subcommand("redirect-plan", "Print ARP redirect directives"));
    auto* redirect_cmd = app.add_subcommand("redirect", "ARP redirect tools");
    redirect_cmd->require_subcommand(1, 1);
    add_plan_options(redirect_cmd->add_subcommand("plan", "Print ARP redirect directives"));

    QueryOpts query;
    auto* aq = app.add_subcommand("alerts-query", "List stored alerts");
    aq->add_option("--store", query.store, "Head store directory")->required();
    aq->add_option("--classification", query.classification, "Exact classification text");
    aq->add_option("--analyzer", query.analyzer, "Exact analyzer id");
    aq->add_option("--from", query.from, "Received at or after (ISO 8601 or unix seconds)");
    aq->add_option("--to", query.to, "Received at or before");
    aq->add_option("--limit", query.limit, "Maximum rows");
    aq->add_flag("--xml", query.xml, "Print the stored documents");
    aq->callback([&] { action = [&] { return alerts_query(query, out); }; });

    auto* tq = app.add_subcommand("traffic-query", "List stored traffic records");
    tq->add_option("--store", query.store, "Head store directory")->required();
    tq->add_option("--from", query.from, "Captured at or after (ISO 8601 or unix seconds)");
    tq->add_option("--to", query.to, "Captured at or before");
    tq->add_option("--flow", query.flow, "'PROTO IP:PORT IP:PORT', either direction");
    tq->add_option("--limit", query.limit, "Maximum rows");
    tq->callback([&] { action = [&] { return traffic_query(query, out); }; });

    std::string idmef_file;
    auto add_validate = [&](CLI::App* cmd) {
        cmd->add_option("file", idmef_file, "IDMEF XML document")->required()->check(CLI::ExistingFile);
        cmd->callback([&] { action = [&] { return idmef_validate(idmef_file, out); }; });
    };
    add_validate(app.add_subcommand("idmef-validate", "Check an IDMEF document"));
    auto* idmef_cmd = app.add_subcommand("idmef", "IDMEF tools");
    idmef_cmd->require_subcommand(1, 1);
    add_validate(idmef_cmd->add_subcommand("validate", "Check an IDMEF document"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }
    if (!action) {
        err << app.help();
        return kUsage;
    }
    try {
        return action();
    } catch (const Error& e) {
        err << "dnids: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "dnids: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace dnids::cli
