#include <gtest/gtest.h>

#include "dnids/arp_redirect.hpp"
#include "dnids/segment_sim.hpp"

using namespace dnids;

namespace {

Ipv4Addr ip(const char* s) { return Ipv4Addr::parse(s); }
MacAddr mac(const char* s) { return MacAddr::parse(s); }

const MacAddr kSensorMac = mac("02:00:00:00:00:64");
const Ipv4Addr kSensorIp = ip("10.0.0.100");

TruthMap truth() {
    return {{ip("10.0.0.1"), mac("02:00:00:00:00:01")},
            {ip("10.0.0.2"), mac("02:00:00:00:00:02")},
            {ip("10.0.0.3"), mac("02:00:00:00:00:03")},
            {kSensorIp, kSensorMac}};
}

// Independent enumeration: every (victim, other) with victim != other.
std::vector<std::pair<Ipv4Addr, Ipv4Addr>> enumerate_pairs(const std::vector<Ipv4Addr>& ts) {
    std::vector<std::pair<Ipv4Addr, Ipv4Addr>> out;
    for (std::size_t i = 0; i < ts.size(); ++i)
        for (std::size_t j = 0; j < ts.size(); ++j)
            if (i != j) out.emplace_back(ts[i], ts[j]);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST(PlanRedirect, TwoTargets) {
    auto plan = plan_redirect({ip("10.0.0.1"), ip("10.0.0.2")}, truth(), kSensorMac, kSensorIp);
    ASSERT_EQ(plan.directives.size(), 2u);
    EXPECT_EQ(plan.directives[0].victim_ip, ip("10.0.0.1"));
    EXPECT_EQ(plan.directives[0].impersonated_ip, ip("10.0.0.2"));
    EXPECT_EQ(plan.directives[0].victim_mac, mac("02:00:00:00:00:01"));
    EXPECT_EQ(plan.directives[1].victim_ip, ip("10.0.0.2"));
    EXPECT_EQ(plan.directives[1].impersonated_ip, ip("10.0.0.1"));
}

TEST(PlanRedirect, SingletonAndTriple) {
    EXPECT_TRUE(plan_redirect({ip("10.0.0.1")}, truth(), kSensorMac, kSensorIp).directives.empty());
    std::vector<Ipv4Addr> ts{ip("10.0.0.1"), ip("10.0.0.2"), ip("10.0.0.3")};
    auto plan = plan_redirect({ts.begin(), ts.end()}, truth(), kSensorMac, kSensorIp);
    ASSERT_EQ(plan.directives.size(), 6u);
    auto expected = enumerate_pairs(ts);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(plan.directives[i].victim_ip, expected[i].first);
        EXPECT_EQ(plan.directives[i].impersonated_ip, expected[i].second);
        EXPECT_NE(plan.directives[i].victim_mac, kSensorMac);
    }
    EXPECT_EQ(plan.impersonated().size(), 3u);
}

TEST(PlanRedirect, Deterministic) {
    std::set<Ipv4Addr> ts{ip("10.0.0.3"), ip("10.0.0.1"), ip("10.0.0.2")};
    EXPECT_EQ(plan_redirect(ts, truth(), kSensorMac, kSensorIp),
              plan_redirect(ts, truth(), kSensorMac, kSensorIp));
}

TEST(PlanRedirect, Errors) {
    try {
        plan_redirect({ip("10.0.0.1"), ip("10.9.9.9")}, truth(), kSensorMac, kSensorIp);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnknownTarget);
    }
    try {
        plan_redirect({ip("10.0.0.1"), kSensorIp}, truth(), kSensorMac, kSensorIp);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::SensorIsTarget);
    }
}

TEST(PoisonFrames, Layout) {
    EXPECT_TRUE(poison_frames(RedirectPlan{}).empty());
    auto plan = plan_redirect({ip("10.0.0.1"), ip("10.0.0.2")}, truth(), kSensorMac, kSensorIp);
    auto frames = poison_frames(plan);
    ASSERT_EQ(frames.size(), 2u);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        const auto& d = plan.directives[i];
        EXPECT_EQ(f.raw.size(), 42u);
        ASSERT_NE(f.arp(), nullptr);
        EXPECT_EQ(f.arp()->op, ArpPacket::kReply);
        EXPECT_EQ(f.arp()->sender_ip, d.impersonated_ip);
        EXPECT_EQ(f.arp()->sender_mac, kSensorMac);
        EXPECT_EQ(f.arp()->target_ip, d.victim_ip);
        EXPECT_EQ(f.arp()->target_mac, d.victim_mac);
        EXPECT_EQ(f.eth.dst, d.victim_mac);
        EXPECT_FALSE(f.eth.dst.is_broadcast());
    }
}

TEST(PoisonSchedule, Arithmetic) {
    auto plan = plan_redirect({ip("10.0.0.1"), ip("10.0.0.2")}, truth(), kSensorMac, kSensorIp, 20);
    auto s = poison_schedule(plan, 60);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_DOUBLE_EQ(s[0].t_s, 0);
    EXPECT_DOUBLE_EQ(s[1].t_s, 20);
    EXPECT_DOUBLE_EQ(s[2].t_s, 40);
    EXPECT_EQ(s[1].frames.size(), 2u);
    EXPECT_TRUE(poison_schedule(plan, 0).empty());
    plan.repoison_interval_s = 25;
    auto one = poison_schedule(plan, 25);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_DOUBLE_EQ(one[0].t_s, 0);
    plan.repoison_interval_s = 0;
    EXPECT_THROW(poison_schedule(plan, 10), Error);
}

TEST(RestoreFrames, CountsAndSpacing) {
    auto plan = plan_redirect({ip("10.0.0.1"), ip("10.0.0.2")}, truth(), kSensorMac, kSensorIp);
    auto r = restore_frames(plan, truth());
    ASSERT_EQ(r.size(), 6u);
    EXPECT_DOUBLE_EQ(r[0].offset_s, 0.0);
    EXPECT_DOUBLE_EQ(r[2].offset_s, 0.5);
    EXPECT_DOUBLE_EQ(r[5].offset_s, 1.0);
    for (const auto& f : r) {
        const auto* a = f.frame.arp();
        ASSERT_NE(a, nullptr);
        EXPECT_EQ(a->sender_mac, truth().at(a->sender_ip));
    }
    EXPECT_TRUE(restore_frames(RedirectPlan{}, truth()).empty());
    TruthMap partial{{ip("10.0.0.1"), mac("02:00:00:00:00:01")}};
    EXPECT_THROW(restore_frames(plan, partial), Error);
}

TEST(RestoreFrames, CacheReturnsToTruth) {
    sim::SegmentConfig cfg;
    for (int i = 1; i <= 2; ++i)
        cfg.hosts.push_back({"h" + std::to_string(i), Ipv4Addr::from_octets(10, 0, 0, i),
                             MacAddr{{2, 0, 0, 0, 0, static_cast<std::uint8_t>(i)}}, sim::HostRole::Endpoint});
    cfg.hosts.push_back({"s", kSensorIp, kSensorMac, sim::HostRole::Sensor});
    sim::Segment seg(cfg);
    auto plan = plan_redirect({ip("10.0.0.1"), ip("10.0.0.2")}, seg.truth(), kSensorMac, kSensorIp);
    auto poison = poison_frames(plan);
    seg.apply_arp(poison, 0);
    EXPECT_EQ(seg.host("h1").arp_cache.at(ip("10.0.0.2")).mac, kSensorMac);
    std::vector<Packet> restore;
    for (auto& f : restore_frames(plan, seg.truth())) restore.push_back(f.frame);
    seg.apply_arp(restore, 1);
    for (const auto& h : seg.hosts())
        for (const auto& [addr, entry] : h.arp_cache) EXPECT_EQ(entry.mac, seg.truth().at(addr));
}

TEST(ForwardRewrite, RelaysToOwner) {
    Ipv4FrameSpec s;
    s.src_mac = mac("02:00:00:00:00:01");
    s.dst_mac = kSensorMac;
    s.src_ip = ip("10.0.0.1");
    s.dst_ip = ip("10.0.0.2");
    s.src_port = 4000;
    s.dst_port = 80;
    s.payload_len = 33;
    Packet in = make_ipv4_frame(s);
    auto out = forward_rewrite(in, truth(), kSensorMac);
    ASSERT_TRUE(out);
    EXPECT_EQ(out->eth.dst, mac("02:00:00:00:00:02"));
    EXPECT_EQ(out->eth.src, kSensorMac);
    ASSERT_EQ(out->raw.size(), in.raw.size());
    EXPECT_TRUE(std::equal(in.raw.begin() + 12, in.raw.end(), out->raw.begin() + 12));
    EXPECT_EQ(parse_frame(out->raw), *out);
    // Relayed frames are never relayed again.
    Packet again = *out;
    again.eth.dst = kSensorMac;
    std::copy(kSensorMac.octets.begin(), kSensorMac.octets.end(), again.raw.begin());
    EXPECT_FALSE(forward_rewrite(again, truth(), kSensorMac));
}

TEST(ForwardRewrite, OwnTrafficAndUnknown) {
    Ipv4FrameSpec s;
    s.src_mac = mac("02:00:00:00:00:01");
    s.dst_mac = kSensorMac;
    s.src_ip = ip("10.0.0.1");
    s.dst_ip = kSensorIp;
    EXPECT_FALSE(forward_rewrite(make_ipv4_frame(s), truth(), kSensorMac));
    s.dst_ip = ip("192.168.1.1");
    try {
        forward_rewrite(make_ipv4_frame(s), truth(), kSensorMac);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnknownDestination);
    }
}

TEST(ForwardRewrite, OnlyEthernetAddressesChangeProperty) {
    std::mt19937_64 rng(9);
    auto t = truth();
    std::vector<Ipv4Addr> owners{ip("10.0.0.1"), ip("10.0.0.2"), ip("10.0.0.3")};
    for (int i = 0; i < 300; ++i) {
        Ipv4FrameSpec s;
        s.src_mac = mac("02:00:00:00:00:01");
        s.dst_mac = kSensorMac;
        s.src_ip = Ipv4Addr{static_cast<std::uint32_t>(rng())};
        s.dst_ip = owners[rng() % owners.size()];
        s.proto = rng() % 2 ? ipproto::kTcp : ipproto::kUdp;
        s.src_port = static_cast<std::uint16_t>(rng());
        s.dst_port = static_cast<std::uint16_t>(rng());
        s.payload_len = rng() % 200;
        Packet in = make_ipv4_frame(s);
        auto out = forward_rewrite(in, t, kSensorMac);
        ASSERT_TRUE(out);
        for (std::size_t b = 12; b < in.raw.size(); ++b) ASSERT_EQ(in.raw[b], out->raw[b]);
    }
}

TEST(RedirectCampaign, PollsOnInterval) {
    auto plan = plan_redirect({ip("10.0.0.1"), ip("10.0.0.2")}, truth(), kSensorMac, kSensorIp, 20);
    RedirectCampaign c(plan, truth());
    EXPECT_EQ(c.poll(0).size(), 2u);
    EXPECT_TRUE(c.poll(19.9).empty());
    EXPECT_EQ(c.poll(20).size(), 2u);
    EXPECT_EQ(c.poll(45).size(), 2u);
    EXPECT_TRUE(c.poll(59).empty());
    EXPECT_EQ(c.stop().size(), 6u);
    EXPECT_TRUE(c.poll(100).empty());
    EXPECT_TRUE(c.stop().empty());
}
