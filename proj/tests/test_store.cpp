#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <thread>

#include "dnids/store.hpp"
#include "temp_dir.hpp"

using namespace dnids;
using namespace dnids::store;
namespace fs = std::filesystem;

namespace {

TrafficRecord random_record(std::mt19937_64& rng) {
    TrafficRecord r;
    r.sensor_id = "sensor-" + std::to_string(rng() % 4);
    r.ts = Timestamp{1'700'000'000 + static_cast<std::int64_t>(rng() % 1000), static_cast<std::uint32_t>(rng() % 1'000'000)};
    r.recv_time = Timestamp{r.ts.sec + 1, r.ts.usec};
    if (rng() % 3 != 0)
        r.flow_key = FlowKey::make(6, {Ipv4Addr{static_cast<std::uint32_t>(rng())}, static_cast<std::uint16_t>(rng())},
                                   {Ipv4Addr{static_cast<std::uint32_t>(rng())}, static_cast<std::uint16_t>(rng())});
    r.raw.resize(14 + rng() % 200);
    for (auto& b : r.raw) b = static_cast<std::uint8_t>(rng());
    r.orig_len = static_cast<std::uint32_t>(r.raw.size());
    return r;
}

std::vector<TrafficRecord> fill(TrafficStore& s, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TrafficRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        TrafficRecord r = random_record(rng);
        r.record_id = s.append(r);
        out.push_back(r);
    }
    s.flush();
    return out;
}

}  // namespace

TEST(Crc32, CheckValue) {
    const std::string s = "123456789";
    EXPECT_EQ(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xcbf43926u);
    EXPECT_EQ(crc32({}), 0u);
}

TEST(TrafficDocument, CanonicalSortedKeys) {
    TrafficRecord r;
    r.record_id = 3;
    r.sensor_id = "s";
    r.ts = {1, 2};
    r.recv_time = {3, 4};
    r.orig_len = 2;
    r.raw = {0xab, 0xcd};
    EXPECT_EQ(encode_document(r),
              R"({"flow_key":null,"orig_len":2,"raw":"abcd","record_id":3,"recv_time_us":3000004,)"
              R"("sensor_id":"s","ts_us":1000002})");
    EXPECT_EQ(decode_document(encode_document(r)), r);
}

TEST(TrafficStore, EmptyDirectoryIsEmptyStore) {
    TempDir d;
    auto s = FileTrafficStore::open(d.path() / "traffic");
    EXPECT_EQ(s->size(), 0u);
    EXPECT_TRUE(s->query({}).empty());
    EXPECT_FALSE(s->get(1));
}

TEST(TrafficStore, AppendGetAndMonotonicIds) {
    TempDir d;
    auto s = FileTrafficStore::open(d.path(), {.sync = false});
    auto recs = fill(*s, 1000, 1);
    for (std::size_t i = 1; i < recs.size(); ++i) ASSERT_GT(recs[i].record_id, recs[i - 1].record_id);
    EXPECT_EQ(*s->get(recs[17].record_id), recs[17]);
    EXPECT_EQ(s->size(), 1000u);
}

TEST(TrafficStore, UnflushedRecordsInvisible) {
    TempDir d;
    auto s = FileTrafficStore::open(d.path(), {.sync = false});
    std::mt19937_64 rng(3);
    auto id = s->append(random_record(rng));
    EXPECT_FALSE(s->get(id));
    s->flush();
    EXPECT_TRUE(s->get(id));
    auto id2 = s->append(random_record(rng));
    s->discard_pending();
    EXPECT_EQ(s->append(random_record(rng)), id2);
}

TEST(TrafficStore, ReopenRoundTrip) {
    TempDir d;
    std::vector<TrafficRecord> recs;
    {
        auto s = FileTrafficStore::open(d.path(), {.sync = false});
        recs = fill(*s, 200, 2);
    }
    auto s = FileTrafficStore::open(d.path());
    EXPECT_EQ(s->query({}), recs);
    EXPECT_FALSE(s->interior_error());
    ASSERT_TRUE(fs::exists(d.path() / "index"));
}

TEST(TrafficStore, IndexRebuiltWhenMissing) {
    TempDir d;
    {
        auto s = FileTrafficStore::open(d.path(), {.sync = false});
        fill(*s, 10, 4);
    }
    std::string before;
    {
        std::ifstream in(d.path() / "index");
        before.assign(std::istreambuf_iterator<char>(in), {});
    }
    fs::remove(d.path() / "index");
    auto s = FileTrafficStore::open(d.path());
    std::ifstream in(d.path() / "index");
    std::string after(std::istreambuf_iterator<char>(in), {});
    EXPECT_EQ(after, before);
    EXPECT_EQ(s->size(), 10u);
}

TEST(TrafficStore, RollsToSecondSegment) {
    TempDir d;
    auto s = FileTrafficStore::open(d.path(), {.roll_bytes = 4096, .sync = false});
    std::mt19937_64 rng(5);
    std::size_t bytes = 0;
    std::vector<TrafficRecord> recs;
    while (bytes <= 4096) {
        TrafficRecord r = random_record(rng);
        r.record_id = s->append(r);
        bytes += 8 + encode_document(r).size();
        recs.push_back(r);
    }
    s->flush();
    EXPECT_EQ(s->segment_count(), 2u);
    EXPECT_TRUE(fs::exists(FileTrafficStore::segment_path(d.path(), 2)));
    EXPECT_LE(fs::file_size(FileTrafficStore::segment_path(d.path(), 1)), 4096u);
    s.reset();
    auto r = FileTrafficStore::open(d.path(), {.roll_bytes = 4096});
    EXPECT_EQ(r->query({}), recs);
}

// Every truncation of the final record recovers exactly the prefix.
TEST(TrafficStoreProperty, TruncationAtEveryOffsetOfTail) {
    TempDir d;
    std::vector<TrafficRecord> recs;
    {
        auto s = FileTrafficStore::open(d.path(), {.sync = false});
        recs = fill(*s, 30, 6);
    }
    fs::path seg = FileTrafficStore::segment_path(d.path(), 1);
    std::string full;
    {
        std::ifstream in(seg, std::ios::binary);
        full.assign(std::istreambuf_iterator<char>(in), {});
    }
    const std::size_t tail_len = 8 + encode_document(recs.back()).size();
    const std::size_t tail_start = full.size() - tail_len;
    std::vector<TrafficRecord> prefix(recs.begin(), recs.end() - 1);
    for (std::size_t cut = tail_start; cut <= full.size(); ++cut) {
        {
            std::ofstream out(seg, std::ios::binary | std::ios::trunc);
            out.write(full.data(), static_cast<std::streamsize>(cut));
        }
        fs::remove(d.path() / "index");
        auto s = FileTrafficStore::open(d.path(), {.sync = false});
        ASSERT_FALSE(s->interior_error()) << cut;
        ASSERT_EQ(s->query({}), cut == full.size() ? recs : prefix) << cut;
        ASSERT_EQ(fs::file_size(seg), cut == full.size() ? full.size() : tail_start);
        // The store stays appendable after recovery.
        std::mt19937_64 rng(cut);
        auto id = s->append(random_record(rng));
        s->flush();
        ASSERT_TRUE(s->get(id));
    }
}

TEST(TrafficStore, CrcFailingTailDiscarded) {
    TempDir d;
    std::vector<TrafficRecord> recs;
    {
        auto s = FileTrafficStore::open(d.path(), {.sync = false});
        recs = fill(*s, 5, 7);
    }
    fs::path seg = FileTrafficStore::segment_path(d.path(), 1);
    {
        std::fstream f(seg, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(static_cast<std::streamoff>(fs::file_size(seg) - 3));
        f.put('#');
    }
    auto s = FileTrafficStore::open(d.path());
    EXPECT_FALSE(s->interior_error());
    EXPECT_EQ(s->size(), 4u);
}

TEST(TrafficStore, InteriorCorruptionOpensReadOnly) {
    TempDir d;
    {
        auto s = FileTrafficStore::open(d.path(), {.sync = false});
        fill(*s, 5, 8);
    }
    fs::path seg = FileTrafficStore::segment_path(d.path(), 1);
    {
        std::fstream f(seg, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(20);
        f.put('#');
    }
    auto s = FileTrafficStore::open(d.path());
    EXPECT_TRUE(s->read_only());
    ASSERT_TRUE(s->interior_error());
    try {
        s->check();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::CorruptInterior);
    }
    std::mt19937_64 rng(1);
    try {
        s->append(random_record(rng));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ReadOnly);
    }
}

TEST(TrafficStore, QueryRangeFlowAndLimit) {
    TempDir d;
    auto s = FileTrafficStore::open(d.path(), {.sync = false});
    auto recs = fill(*s, 300, 9);
    EXPECT_EQ(s->query({.limit = 10}), std::vector<TrafficRecord>(recs.begin(), recs.begin() + 10));

    Timestamp from{1'700'000'200, 0}, to{1'700'000'499, 999'999};
    std::vector<TrafficRecord> expect;
    for (const auto& r : recs)
        if (r.ts >= from && r.ts <= to) expect.push_back(r);
    EXPECT_EQ(s->query({.from = from, .to = to}), expect);

    auto keyed = std::find_if(recs.begin(), recs.end(), [](const TrafficRecord& r) { return r.flow_key.has_value(); });
    ASSERT_NE(keyed, recs.end());
    FlowKey k = *keyed->flow_key;
    // Build the same flow from the opposite direction; the canonical key must match.
    FlowKey rev = FlowKey::make(k.proto, k.hi, k.lo);
    auto got = s->query({.flow = rev});
    ASSERT_FALSE(got.empty());
    for (const auto& r : got) EXPECT_EQ(r.flow_key, k);

    try {
        s->query({.from = to, .to = from});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::BadRange);
    }
}

TEST(TrafficStore, ConcurrentReaderSeesFlushedPrefix) {
    TempDir d;
    auto s = FileTrafficStore::open(d.path(), {.sync = false});
    std::atomic<bool> done{false};
    std::atomic<bool> bad{false};
    std::thread reader([&] {
        std::size_t last = 0;
        while (!done) {
            auto all = s->query({});
            if (all.size() < last) bad = true;
            for (std::size_t i = 0; i < all.size(); ++i)
                if (all[i].record_id != i + 1) bad = true;
            last = all.size();
        }
    });
    fill(*s, 500, 10);
    done = true;
    reader.join();
    EXPECT_FALSE(bad);
}

// ---- alerts ----------------------------------------------------------------

namespace {

AlertRow make_row(int i) {
    AlertRow r;
    r.received_time = Timestamp{1'700'000'000 + i, 0};
    r.solver_id = i % 2 ? "solver-a" : "solver-b";
    r.messageid = "m" + std::to_string(i);
    r.classification_text = i % 3 ? "Port scan" : "ARP spoofing";
    r.analyzer_id = r.solver_id + (i % 3 ? "/portscan" : "/arpspoof");
    if (i % 5 == 0) r.severity = "high";
    r.xml = "<x>" + std::to_string(i) + "</x>";
    return r;
}

}  // namespace

TEST(AlertStore, InsertQueryReopen) {
    TempDir d;
    std::vector<AlertRow> rows;
    {
        auto s = FileAlertStore::open(d.path(), false);
        for (int i = 0; i < 100; ++i) {
            AlertRow r = make_row(i);
            r.alert_id = s->insert(r);
            rows.push_back(r);
        }
        s->flush();
        EXPECT_EQ(s->query({}), rows);
    }
    auto s = FileAlertStore::open(d.path());
    EXPECT_EQ(s->query({}), rows);
    EXPECT_EQ(s->insert(make_row(100)), 101u);
    EXPECT_TRUE(s->has_messageid("m5"));
}

TEST(AlertStore, ConjunctiveCriteriaMatchReferenceFilter) {
    TempDir d;
    auto s = FileAlertStore::open(d.path(), false);
    std::vector<AlertRow> rows;
    for (int i = 0; i < 100; ++i) {
        AlertRow r = make_row(i);
        r.alert_id = s->insert(r);
        rows.push_back(r);
    }
    Timestamp from{1'700'000'025, 0}, to{1'700'000'074, 0};
    auto half = s->query({.from = from, .to = to});
    EXPECT_EQ(half, std::vector<AlertRow>(rows.begin() + 25, rows.begin() + 75));

    std::vector<AlertRow> expect;
    for (const auto& r : rows)
        if (r.classification_text == "Port scan" && r.analyzer_id == "solver-a/portscan" && r.received_time >= from &&
            r.received_time <= to)
            expect.push_back(r);
    EXPECT_EQ(s->query({.classification = "Port scan", .analyzer = "solver-a/portscan", .from = from, .to = to}), expect);
    EXPECT_TRUE(s->query({.classification = "Port scan", .analyzer = "solver-b/arpspoof"}).empty());
    EXPECT_TRUE(s->query({.classification = "Port scan", .analyzer = "nobody"}).empty());
    EXPECT_TRUE(s->query({.from = Timestamp{1, 0}, .to = Timestamp{2, 0}}).empty());
    EXPECT_EQ(s->query({.limit = 3}).size(), 3u);
    try {
        s->query({.from = to, .to = from});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::BadRange);
    }
}

TEST(AlertStore, TornLastRowDropped) {
    TempDir d;
    {
        auto s = FileAlertStore::open(d.path(), false);
        for (int i = 0; i < 3; ++i) s->insert(make_row(i));
    }
    fs::path p = d.path() / "rows.log";
    fs::resize_file(p, fs::file_size(p) - 5);
    auto s = FileAlertStore::open(d.path());
    EXPECT_EQ(s->size(), 2u);
    EXPECT_FALSE(s->read_only());
    EXPECT_EQ(s->insert(make_row(9)), 3u);
}
