#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "dnids/head.hpp"
#include "dnids/solver.hpp"
#include "fixtures.hpp"
#include "temp_dir.hpp"

using namespace dnids;
using namespace dnids::solver;
using namespace std::chrono_literals;
using fixtures::ip;
using fixtures::mac;

namespace {

constexpr std::int64_t kT0 = 1'700'000'000'000'000;

Packet syn(int src, int dst, std::uint16_t dport, std::int64_t us) {
    return fixtures::tcp(src, dst, 40000, dport, tcpflag::kSyn, Timestamp::from_micros(us));
}

std::unique_ptr<PortScanAnalyzer> portscan(const Clock& clock, PortScanParams params = {}) {
    return std::make_unique<PortScanAnalyzer>(AlertFactory("solver-1/portscan", clock, 1), params);
}

std::string extra(const idmef::Alert& a, const std::string& meaning) {
    for (const auto& d : a.additional_data)
        if (d.meaning == meaning) return d.value;
    return {};
}

}  // namespace

TEST(PortScan, FifteenPortsInTwoSecondsAlertsOnce) {
    ManualClock clock;
    auto a = portscan(clock);
    for (int i = 0; i < 15; ++i) a->on_packet(syn(7, 2, static_cast<std::uint16_t>(20 + i), kT0 + i * 130'000));
    auto alerts = a->drain();
    ASSERT_EQ(alerts.size(), 1u);
    const auto& al = alerts[0];
    EXPECT_EQ(al.classification.text, "Port scan");
    EXPECT_EQ(al.analyzerid, "solver-1/portscan");
    ASSERT_EQ(al.sources.size(), 1u);
    EXPECT_EQ(al.sources[0].address, "10.0.0.7");
    ASSERT_EQ(al.targets.size(), 1u);
    EXPECT_EQ(al.targets[0].address, "10.0.0.2");
    EXPECT_EQ(al.severity, idmef::Severity::Medium);
    EXPECT_EQ(extra(al, "distinct targets"), "15");
    EXPECT_TRUE(idmef::validate(al).empty());
    EXPECT_TRUE(a->drain().empty());
}

TEST(PortScan, FourteenPortsStaySilent) {
    ManualClock clock;
    auto a = portscan(clock);
    for (int i = 0; i < 14; ++i) a->on_packet(syn(7, 2, static_cast<std::uint16_t>(20 + i), kT0 + i * 100'000));
    EXPECT_TRUE(a->drain().empty());
}

TEST(PortScan, SlowScanOutsideWindowStaysSilent) {
    ManualClock clock;
    auto a = portscan(clock);
    for (int i = 0; i < 15; ++i) a->on_packet(syn(7, 2, static_cast<std::uint16_t>(20 + i), kT0 + i * 4'000'000));
    EXPECT_TRUE(a->drain().empty());
}

TEST(PortScan, HandshakeRepliesAndRepeatsDoNotCount) {
    ManualClock clock;
    auto a = portscan(clock);
    for (int i = 0; i < 30; ++i) {
        a->on_packet(fixtures::tcp(2, 7, static_cast<std::uint16_t>(20 + i), 40000, tcpflag::kSyn | tcpflag::kAck,
                                   Timestamp::from_micros(kT0 + i)));
        a->on_packet(syn(7, 2, 80, kT0 + i));  // same target over and over
    }
    a->on_packet(fixtures::udp(7, 2, 1, 2, Timestamp::from_micros(kT0)));
    EXPECT_TRUE(a->drain().empty());
}

TEST(PortScan, TargetsAreDistinctHostsCapped) {
    ManualClock clock;
    auto a = portscan(clock);
    for (int i = 0; i < 15; ++i) a->on_packet(syn(7, 20 + i, 22, kT0 + i * 1000));
    auto alerts = a->drain();
    ASSERT_EQ(alerts.size(), 1u);
    EXPECT_EQ(alerts[0].targets.size(), 10u);
}

TEST(PortScan, CooldownBoundsAlertRate) {
    ManualClock clock;
    auto a = portscan(clock);
    // A relentless scan: 200 new ports per second for 300 seconds.
    std::size_t alerts = 0;
    for (int s = 0; s < 300; ++s) {
        for (int i = 0; i < 200; ++i) a->on_packet(syn(7, 2, static_cast<std::uint16_t>(i + s), kT0 + s * 1'000'000ll + i * 5000));
        alerts += a->drain().size();
    }
    EXPECT_GE(alerts, 4u);
    EXPECT_LE(alerts, 300u / 60u + 1);
}

TEST(PortScanProperty, AlertsNeverExceedCooldownBound) {
    std::mt19937_64 rng(3);
    for (int iter = 0; iter < 30; ++iter) {
        ManualClock clock;
        PortScanParams params;
        params.cooldown_s = 1 + static_cast<double>(rng() % 30);
        auto a = portscan(clock, params);
        std::int64_t t = kT0;
        const std::int64_t span = 120'000'000;
        std::map<std::string, std::size_t> per_source;
        while (t < kT0 + span) {
            t += static_cast<std::int64_t>(rng() % 50'000);
            a->on_packet(syn(1 + static_cast<int>(rng() % 3), 50, static_cast<std::uint16_t>(rng() % 2000), t));
        }
        for (const auto& al : a->drain()) ++per_source[al.sources[0].address];
        std::size_t bound = static_cast<std::size_t>(span / 1e6 / params.cooldown_s) + 1;
        for (const auto& [src, n] : per_source) ASSERT_LE(n, bound) << src;
    }
}

TEST(ArpSpoof, StableMappingsStaySilent) {
    ManualClock clock;
    ArpSpoofAnalyzer a(AlertFactory("solver-1/arpspoof", clock, 1));
    for (int i = 0; i < 50; ++i) a.on_packet(fixtures::arp_reply(1 + i % 4, ip(9), mac(9)));
    EXPECT_TRUE(a.drain().empty());
}

TEST(ArpSpoof, ConflictingReplyNamesBothMacs) {
    ManualClock clock;
    ArpSpoofAnalyzer a(AlertFactory("solver-1/arpspoof", clock, 1));
    a.on_packet(fixtures::arp_reply(1, ip(9), mac(9)));
    a.on_packet(fixtures::arp_reply(1, ip(9), mac(66)));
    a.on_packet(fixtures::arp_reply(2, ip(9), mac(66)));  // same conflict again
    auto alerts = a.drain();
    ASSERT_EQ(alerts.size(), 1u);
    EXPECT_EQ(alerts[0].classification.text, "ARP spoofing");
    ASSERT_EQ(alerts[0].targets.size(), 1u);
    EXPECT_EQ(alerts[0].targets[0].address, "10.0.0.9");
    EXPECT_EQ(alerts[0].severity, idmef::Severity::High);
    EXPECT_EQ(extra(alerts[0], "first-seen mac"), mac(9).to_string());
    EXPECT_EQ(extra(alerts[0], "claimed mac"), mac(66).to_string());
    EXPECT_TRUE(idmef::validate(alerts[0]).empty());
    // A legitimate reply keeps the first-seen mapping; a third MAC is a new conflict.
    a.on_packet(fixtures::arp_reply(1, ip(9), mac(9)));
    a.on_packet(fixtures::arp_reply(1, ip(9), mac(67)));
    EXPECT_EQ(a.drain().size(), 1u);
    EXPECT_EQ(a.conflicts(), 2u);
}

TEST(Solver, SameInputsSameAlerts) {
    auto run = [] {
        ManualClock clock;
        SolverHost host;
        host.add(portscan(clock));
        host.add(std::make_unique<ArpSpoofAnalyzer>(AlertFactory("solver-1/arpspoof", clock, 2)));
        std::mt19937_64 rng(11);
        std::vector<std::string> xml;
        for (int i = 0; i < 3000; ++i) {
            clock.advance_ms(3);
            if (rng() % 10 == 0)
                host.feed(fixtures::arp_reply(1, ip(1 + static_cast<int>(rng() % 4)), mac(1 + static_cast<int>(rng() % 6))));
            else
                host.feed(syn(1 + static_cast<int>(rng() % 3), 2, static_cast<std::uint16_t>(rng() % 500), kT0 + i * 3000));
            for (const auto& a : host.drain()) xml.push_back(idmef::to_xml(a));
        }
        return xml;
    };
    auto a = run();
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, run());
}

namespace {

class Exploding final : public Analyzer {
public:
    std::string name() const override { return "exploding"; }
    std::vector<std::string> classifications() const override { return {}; }
    void on_packet(const Packet&) override { throw std::runtime_error("boom"); }
    std::vector<idmef::Alert> drain() override { return {}; }
};

}  // namespace

TEST(Solver, ThrowingAnalyzerIsIsolated) {
    ManualClock clock;
    SolverHost host;
    host.add(std::make_unique<Exploding>());
    host.add(portscan(clock));
    for (int i = 0; i < 15; ++i) host.feed(syn(7, 2, static_cast<std::uint16_t>(i + 1), kT0 + i * 1000));
    EXPECT_EQ(host.drain().size(), 1u);
    EXPECT_EQ(host.disabled(), (std::vector<std::string>{"exploding"}));
    ASSERT_EQ(host.errors().size(), 1u);
    EXPECT_NE(host.errors()[0].find("boom"), std::string::npos);
}

TEST(Solver, RegistryAndParams) {
    ManualClock clock;
    auto reg = AnalyzerRegistry::with_builtins();
    EXPECT_EQ(reg.names(), (std::vector<std::string>{"arpspoof", "portscan"}));
    Ini params = Ini::parse("[portscan]\nthreshold = 3\n");
    AnalyzerEnv env{"s/portscan", clock, 1, &params};
    auto a = reg.create("portscan", env);
    for (int i = 0; i < 3; ++i) a->on_packet(syn(7, 2, static_cast<std::uint16_t>(i + 1), kT0 + i));
    EXPECT_EQ(a->drain().size(), 1u);
    try {
        reg.create("nosuch", env);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::BadConfig);
    }
}

TEST(Solver, AlertCreateTimeComesFromClock) {
    ManualClock clock(Timestamp{1'800'000'000, 250'000});
    AlertFactory f("x/y", clock, 4);
    auto a = f.make({ip(1)}, {}, "c");
    EXPECT_EQ(a.create_time.iso8601, "2027-01-15T08:00:00.250000Z");
    EXPECT_EQ(a.create_time.ntpstamp, idmef::ntpstamp(Timestamp{1'800'000'000, 250'000}));
}

TEST(SolverConfig, FromIni) {
    auto c = SolverConfig::from_ini(Ini::parse(
        "solver_id = s9\ntoken = t\ngroup = g\nsubscription = proto 6; arp\nanalyzers = portscan\nportscan.threshold = 4\n"));
    EXPECT_EQ(c.solver_id, "s9");
    EXPECT_EQ(c.subscription.size(), 2u);
    EXPECT_EQ(c.analyzers, (std::vector<std::string>{"portscan"}));
    EXPECT_EQ(c.params.get_int("portscan.threshold", 0), 4);
    auto bogus = SolverConfig::from_ini(Ini::parse("solver_id = s\ntoken = t\nanalyzers = bogus\n"));
    ManualClock clock;
    EXPECT_THROW(SolverNode(bogus, [] { return TransportPtr{}; }, clock), Error);
    EXPECT_THROW(SolverConfig::from_ini(Ini::parse("solver_id = s\nanalyzers = portscan\n")), Error);
}

TEST(Solver, EndToEndThroughHead) {
    TempDir d;
    SystemClock clock;
    head::HeadConfig hc;
    hc.store_dir = d.path();
    hc.token = "tok";
    hc.sync = false;
    auto server = head::HeadServer::open(hc, clock);

    SolverConfig sc;
    sc.solver_id = "solver-1";
    sc.token = "tok";
    SolverNode node(sc, [&] { return server->connect_local(); }, clock);
    auto deadline = std::chrono::steady_clock::now() + 3s;
    while (server->registrations().empty() && std::chrono::steady_clock::now() < deadline) node.pump(5ms);
    ASSERT_TRUE(node.connected());
    ASSERT_EQ(server->registrations().size(), 1u);

    std::vector<wire::BatchRecord> recs;
    for (int i = 0; i < 20; ++i) {
        Packet p = syn(7, 2, static_cast<std::uint16_t>(100 + i), kT0 + i * 10'000);
        recs.push_back({p.ts, static_cast<std::uint32_t>(p.raw.size()), p.raw});
    }
    server->ingest_batch("sensor-a", wire::encode_batch(recs));

    deadline = std::chrono::steady_clock::now() + 3s;
    while ((node.stats().alerts_acked == 0 || !node.idle()) && std::chrono::steady_clock::now() < deadline) node.pump(5ms);
    EXPECT_EQ(node.stats().records, 20u);
    EXPECT_EQ(node.stats().alerts_acked, 1u);
    auto rows = server->query_alerts({});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].classification_text, "Port scan");
    EXPECT_EQ(rows[0].analyzer_id, "solver-1/portscan");
    EXPECT_EQ(rows[0].severity, "medium");
    node.shutdown();
    server->stop();
}
