#include "dnids/store.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dnids::store {

namespace {

constexpr std::size_t kFrameHeader = 8;  // len u32 + crc32 u32

[[noreturn]] void io_fail(const std::string& what) {
    throw Error(Errc::IoFailure, what + ": " + std::strerror(errno));
}

void write_fully(int fd, const char* data, std::size_t n, const std::string& what) {
    while (n > 0) {
        ssize_t w = ::write(fd, data, n);
        if (w < 0) {
            if (errno == EINTR) continue;
            io_fail(what);
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
}

void read_at(int fd, char* out, std::size_t n, std::uint64_t offset) {
    while (n > 0) {
        ssize_t r = ::pread(fd, out, n, static_cast<off_t>(offset));
        if (r < 0) {
            if (errno == EINTR) continue;
            io_fail("read");
        }
        if (r == 0) throw Error(Errc::IoFailure, "short read");
        out += r;
        n -= static_cast<std::size_t>(r);
        offset += static_cast<std::uint64_t>(r);
    }
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::IoFailure, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

int open_file(const fs::path& p, bool writable) {
    int fd = ::open(p.c_str(), writable ? (O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC) : (O_RDONLY | O_CLOEXEC), 0644);
    if (fd < 0) io_fail("open " + p.string());
    return fd;
}

json flow_to_json(const std::optional<FlowKey>& k) {
    if (!k) return nullptr;
    return json{{"proto", k->proto},
                {"lo_ip", k->lo.ip.to_string()},
                {"lo_port", k->lo.port},
                {"hi_ip", k->hi.ip.to_string()},
                {"hi_port", k->hi.port}};
}

std::optional<FlowKey> flow_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return FlowKey::make(j.at("proto").get<std::uint8_t>(),
                         {Ipv4Addr::parse(j.at("lo_ip").get<std::string>()), j.at("lo_port").get<std::uint16_t>()},
                         {Ipv4Addr::parse(j.at("hi_ip").get<std::string>()), j.at("hi_port").get<std::uint16_t>()});
}

std::string frame_document(const std::string& doc) {
    Bytes hdr;
    ByteWriter w(hdr);
    w.u32(static_cast<std::uint32_t>(doc.size()));
    w.u32(crc32({reinterpret_cast<const std::uint8_t*>(doc.data()), doc.size()}));
    std::string out(hdr.begin(), hdr.end());
    out += doc;
    return out;
}

}  // namespace

std::uint32_t crc32(ByteView data) {
    // zlib's crc32 is the reflected IEEE 802.3 polynomial.
    uLong c = ::crc32(0L, Z_NULL, 0);
    std::size_t off = 0;
    while (off < data.size()) {
        auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
        c = ::crc32(c, data.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(c);
}

std::string encode_document(const TrafficRecord& r) {
    json j = {{"record_id", r.record_id},
              {"sensor_id", r.sensor_id},
              {"recv_time_us", r.recv_time.micros()},
              {"ts_us", r.ts.micros()},
              {"flow_key", flow_to_json(r.flow_key)},
              {"orig_len", r.orig_len},
              {"raw", to_hex(r.raw)}};
    return j.dump();
}

TrafficRecord decode_document(std::string_view doc) {
    try {
        json j = json::parse(doc);
        TrafficRecord r;
        r.record_id = j.at("record_id").get<std::uint64_t>();
        r.sensor_id = j.at("sensor_id").get<std::string>();
        r.recv_time = Timestamp::from_micros(j.at("recv_time_us").get<std::int64_t>());
        r.ts = Timestamp::from_micros(j.at("ts_us").get<std::int64_t>());
        r.flow_key = flow_from_json(j.at("flow_key"));
        r.orig_len = j.at("orig_len").get<std::uint32_t>();
        r.raw = from_hex(j.at("raw").get<std::string>());
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptInterior, std::string("bad traffic document: ") + e.what());
    }
}

// ---- FileTrafficStore ------------------------------------------------------

fs::path FileTrafficStore::segment_path(const fs::path& dir, std::uint32_t n) {
    char name[32];
    std::snprintf(name, sizeof name, "seg-%08u.log", n);
    return dir / name;
}

FileTrafficStore::FileTrafficStore(fs::path dir, TrafficStoreOptions opts)
    : dir_(std::move(dir)), opts_(opts), read_only_(opts.read_only) {}

FileTrafficStore::~FileTrafficStore() {
    for (auto& s : segments_) ::close(s.fd);
    if (index_fd_ >= 0) ::close(index_fd_);
}

std::unique_ptr<FileTrafficStore> FileTrafficStore::open(const fs::path& dir, TrafficStoreOptions opts) {
    std::error_code ec;
    if (!opts.read_only) fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string());
    std::unique_ptr<FileTrafficStore> s(new FileTrafficStore(dir, opts));
    s->recover();
    return s;
}

void FileTrafficStore::open_segment(std::uint32_t number) {
    int fd = open_file(segment_path(dir_, number), !read_only_);
    off_t end = ::lseek(fd, 0, SEEK_END);
    segments_.push_back({number, fd, static_cast<std::uint64_t>(end)});
}

void FileTrafficStore::recover() {
    std::vector<std::uint32_t> numbers;
    if (fs::exists(dir_)) {
        for (const auto& de : fs::directory_iterator(dir_)) {
            std::string name = de.path().filename().string();
            unsigned n = 0;
            char tail = 0;
            if (name.size() == 16 && std::sscanf(name.c_str(), "seg-%8u.lo%c", &n, &tail) == 2 && tail == 'g')
                numbers.push_back(n);
        }
    }
    std::sort(numbers.begin(), numbers.end());

    for (std::size_t i = 0; i < numbers.size(); ++i) {
        const bool last = i + 1 == numbers.size();
        fs::path path = segment_path(dir_, numbers[i]);
        std::string data = slurp(path);
        std::size_t pos = 0;
        std::optional<std::string> damage;
        while (pos < data.size()) {
            std::size_t left = data.size() - pos;
            if (left < kFrameHeader) {
                damage = "torn header";
                break;
            }
            ByteView hdr(reinterpret_cast<const std::uint8_t*>(data.data()), data.size());
            std::uint32_t len = load_be32(hdr, pos);
            std::uint32_t crc = load_be32(hdr, pos + 4);
            if (len > left - kFrameHeader) {
                damage = "torn record";
                break;
            }
            std::string_view doc(data.data() + pos + kFrameHeader, len);
            if (crc32({reinterpret_cast<const std::uint8_t*>(doc.data()), doc.size()}) != crc) {
                damage = "crc mismatch";
                break;
            }
            TrafficRecord r;
            try {
                r = decode_document(doc);
            } catch (const Error&) {
                damage = "undecodable document";
                break;
            }
            if (!entries_.empty() && r.record_id <= entries_.back().id) {
                damage = "record id out of order";
                break;
            }
            entries_.push_back({r.record_id, numbers[i], pos, len, r.ts.micros(), r.flow_key});
            pos += kFrameHeader + len;
        }
        if (damage) {
            // A damaged final record is a torn append; anything else is interior corruption.
            ByteView all(reinterpret_cast<const std::uint8_t*>(data.data()), data.size());
            bool torn = *damage == "torn header" || *damage == "torn record";
            bool tail = last && (torn || pos + kFrameHeader + load_be32(all, pos) == data.size());
            if (tail) {
                discarded_tail_ = data.size() - pos;
                if (!read_only_) fs::resize_file(path, pos);
            } else {
                interior_error_ = *damage + " in " + path.filename().string() + " at offset " + std::to_string(pos);
                read_only_ = true;
            }
        }
    }
    for (auto n : numbers) open_segment(n);
    if (!entries_.empty()) next_id_ = entries_.back().id + 1;
    if (read_only_) return;

    std::string expected;
    for (const auto& e : entries_)
        expected += std::to_string(e.id) + ' ' + std::to_string(e.segment) + ' ' + std::to_string(e.offset) + '\n';
    fs::path index = dir_ / "index";
    bool current = fs::exists(index) && slurp(index) == expected;
    if (!current) {
        std::ofstream out(index, std::ios::binary | std::ios::trunc);
        out << expected;
        if (!out) throw Error(Errc::IoFailure, "cannot write index");
    }
    index_fd_ = open_file(index, true);
}

void FileTrafficStore::check() const {
    if (interior_error_) throw Error(Errc::CorruptInterior, *interior_error_);
}

std::uint64_t FileTrafficStore::append(TrafficRecord r) {
    std::unique_lock lock(mu_);
    if (read_only_) throw Error(Errc::ReadOnly, "traffic store is read-only");
    if (r.raw.empty()) throw Error(Errc::InvalidField, "traffic record has no octets");
    r.record_id = next_id_++;
    std::string doc = encode_document(r);
    Pending p{{r.record_id, 0, 0, static_cast<std::uint32_t>(doc.size()), r.ts.micros(), r.flow_key},
              frame_document(doc)};
    pending_.push_back(std::move(p));
    return r.record_id;
}

void FileTrafficStore::discard_pending() {
    std::unique_lock lock(mu_);
    if (!pending_.empty()) next_id_ = pending_.front().entry.id;
    pending_.clear();
}

void FileTrafficStore::flush() {
    std::unique_lock lock(mu_);
    if (pending_.empty()) return;
    if (read_only_) throw Error(Errc::ReadOnly, "traffic store is read-only");

    const std::size_t old_segments = segments_.size();
    const std::uint64_t old_size = segments_.empty() ? 0 : segments_.back().size;
    try {
        std::string staged;
        std::string index_lines;
        std::vector<Entry> added;
        auto write_staged = [&] {
            if (!staged.empty()) write_fully(segments_.back().fd, staged.data(), staged.size(), "append");
            staged.clear();
        };
        if (segments_.empty()) open_segment(1);
        for (auto& p : pending_) {
            Segment* seg = &segments_.back();
            if (seg->size > 0 && seg->size + p.framed.size() > opts_.roll_bytes) {
                write_staged();
                open_segment(seg->number + 1);
                seg = &segments_.back();
            }
            p.entry.segment = seg->number;
            p.entry.offset = seg->size;
            seg->size += p.framed.size();
            staged += p.framed;
            index_lines += std::to_string(p.entry.id) + ' ' + std::to_string(p.entry.segment) + ' ' +
                           std::to_string(p.entry.offset) + '\n';
            added.push_back(p.entry);
        }
        write_staged();
        if (opts_.sync)
            for (std::size_t i = old_segments == 0 ? 0 : old_segments - 1; i < segments_.size(); ++i)
                if (::fdatasync(segments_[i].fd) != 0) io_fail("fdatasync");
        write_fully(index_fd_, index_lines.data(), index_lines.size(), "index append");
        entries_.insert(entries_.end(), added.begin(), added.end());
        pending_.clear();
    } catch (...) {
        // Roll the files back to their pre-flush state; nothing staged becomes visible.
        while (segments_.size() > old_segments) {
            ::close(segments_.back().fd);
            std::error_code ec;
            fs::remove(segment_path(dir_, segments_.back().number), ec);
            segments_.pop_back();
        }
        if (!segments_.empty()) {
            if (::ftruncate(segments_.back().fd, static_cast<off_t>(old_size)) == 0)
                segments_.back().size = old_size;
        }
        next_id_ = pending_.front().entry.id;
        pending_.clear();
        throw;
    }
}

TrafficRecord FileTrafficStore::read_entry(const Entry& e) const {
    auto seg = std::find_if(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.number == e.segment; });
    if (seg == segments_.end()) throw Error(Errc::IoFailure, "missing segment");
    std::string doc(e.length, '\0');
    read_at(seg->fd, doc.data(), doc.size(), e.offset + kFrameHeader);
    return decode_document(doc);
}

std::optional<TrafficRecord> FileTrafficStore::get(std::uint64_t id) const {
    std::shared_lock lock(mu_);
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const Entry& e, std::uint64_t v) { return e.id < v; });
    if (it == entries_.end() || it->id != id) return std::nullopt;
    return read_entry(*it);
}

std::vector<TrafficRecord> FileTrafficStore::query(const TrafficQuery& q) const {
    if (q.to < q.from) throw Error(Errc::BadRange, "range start is after its end");
    std::shared_lock lock(mu_);
    std::vector<TrafficRecord> out;
    const std::int64_t from = q.from.micros(), to = q.to.micros();
    for (const auto& e : entries_) {
        if (out.size() >= q.limit) break;
        if (e.ts_micros < from || e.ts_micros > to) continue;
        if (q.flow && e.flow != q.flow) continue;
        out.push_back(read_entry(e));
    }
    return out;
}

std::size_t FileTrafficStore::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

// ---- FileAlertStore --------------------------------------------------------

std::string encode_alert_row(const AlertRow& r) {
    json j = {{"alert_id", r.alert_id},
              {"received_time_us", r.received_time.micros()},
              {"solver_id", r.solver_id},
              {"messageid", r.messageid},
              {"classification_text", r.classification_text},
              {"analyzer_id", r.analyzer_id},
              {"severity", r.severity ? json(*r.severity) : json(nullptr)},
              {"duplicate", r.duplicate},
              {"xml", r.xml}};
    return j.dump();
}

AlertRow decode_alert_row(std::string_view line) {
    try {
        json j = json::parse(line);
        AlertRow r;
        r.alert_id = j.at("alert_id").get<std::uint64_t>();
        r.received_time = Timestamp::from_micros(j.at("received_time_us").get<std::int64_t>());
        r.solver_id = j.at("solver_id").get<std::string>();
        r.messageid = j.at("messageid").get<std::string>();
        r.classification_text = j.at("classification_text").get<std::string>();
        r.analyzer_id = j.at("analyzer_id").get<std::string>();
        if (!j.at("severity").is_null()) r.severity = j.at("severity").get<std::string>();
        r.duplicate = j.at("duplicate").get<bool>();
        r.xml = j.at("xml").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptInterior, std::string("bad alert row: ") + e.what());
    }
}

FileAlertStore::FileAlertStore(fs::path dir, bool sync) : dir_(std::move(dir)), sync_(sync) {}

FileAlertStore::~FileAlertStore() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<FileAlertStore> FileAlertStore::open(const fs::path& dir, bool sync) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string());
    std::unique_ptr<FileAlertStore> s(new FileAlertStore(dir, sync));
    fs::path path = dir / "rows.log";
    std::string data = fs::exists(path) ? slurp(path) : std::string{};
    std::size_t pos = 0;
    while (pos < data.size()) {
        std::size_t nl = data.find('\n', pos);
        bool torn = nl == std::string::npos;
        std::string_view line(data.data() + pos, (torn ? data.size() : nl) - pos);
        try {
            if (torn) throw Error(Errc::CorruptInterior, "torn row");
            s->rows_.push_back(decode_alert_row(line));
        } catch (const Error&) {
            if (torn || nl + 1 == data.size()) {
                fs::resize_file(path, pos);
            } else {
                s->read_only_ = true;
            }
            break;
        }
        pos = nl + 1;
    }
    s->fd_ = open_file(path, !s->read_only_);
    return s;
}

std::uint64_t FileAlertStore::insert(AlertRow row) {
    std::unique_lock lock(mu_);
    if (read_only_) throw Error(Errc::ReadOnly, "alert store is read-only");
    row.alert_id = rows_.empty() ? 1 : rows_.back().alert_id + 1;
    std::string line = encode_alert_row(row) + '\n';
    write_fully(fd_, line.data(), line.size(), "alert append");
    rows_.push_back(std::move(row));
    return rows_.back().alert_id;
}

void FileAlertStore::flush() {
    std::unique_lock lock(mu_);
    if (sync_ && !read_only_ && ::fdatasync(fd_) != 0) io_fail("fdatasync");
}

std::vector<AlertRow> FileAlertStore::query(const AlertCriteria& c) const {
    if (c.from && c.to && *c.to < *c.from) throw Error(Errc::BadRange, "range start is after its end");
    std::shared_lock lock(mu_);
    std::vector<AlertRow> out;
    for (const auto& r : rows_) {
        if (c.classification && r.classification_text != *c.classification) continue;
        if (c.analyzer && r.analyzer_id != *c.analyzer) continue;
        if (c.from && r.received_time < *c.from) continue;
        if (c.to && r.received_time > *c.to) continue;
        out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(), [](const AlertRow& a, const AlertRow& b) {
        return a.received_time < b.received_time;
    });
    if (out.size() > c.limit) out.resize(c.limit);
    return out;
}

bool FileAlertStore::has_messageid(const std::string& messageid) const {
    std::shared_lock lock(mu_);
    return std::any_of(rows_.begin(), rows_.end(), [&](const AlertRow& r) { return r.messageid == messageid; });
}

std::size_t FileAlertStore::size() const {
    std::shared_lock lock(mu_);
    return rows_.size();
}

}  // namespace dnids::store
