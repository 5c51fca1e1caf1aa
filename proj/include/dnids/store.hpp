#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dnids/packet.hpp"

namespace dnids::store {

struct TrafficRecord {
    std::uint64_t record_id = 0;  // assigned by the store
    std::string sensor_id;
    Timestamp recv_time;
    Timestamp ts;
    std::optional<FlowKey> flow_key;
    std::uint32_t orig_len = 0;
    Bytes raw;

    bool operator==(const TrafficRecord&) const = default;
};

/// Canonical document octets: JSON, keys sorted, no whitespace.
std::string encode_document(const TrafficRecord& r);
TrafficRecord decode_document(std::string_view doc);

std::uint32_t crc32(ByteView data);

struct TrafficQuery {
    Timestamp from{0, 0};
    Timestamp to{std::numeric_limits<std::int64_t>::max() / 2'000'000, 0};
    std::optional<FlowKey> flow;  // matched on the canonical key, so both directions
    std::size_t limit = std::numeric_limits<std::size_t>::max();
};

class TrafficStore {
public:
    virtual ~TrafficStore() = default;
    /// Staged until flush(); returns the assigned id.
    virtual std::uint64_t append(TrafficRecord r) = 0;
    /// Makes staged records durable and visible. On failure nothing staged becomes visible.
    virtual void flush() = 0;
    /// Drops staged, unflushed records.
    virtual void discard_pending() = 0;
    virtual std::optional<TrafficRecord> get(std::uint64_t id) const = 0;
    /// Throws Error(BadRange) when from > to.
    virtual std::vector<TrafficRecord> query(const TrafficQuery& q) const = 0;
    virtual std::size_t size() const = 0;
};

struct TrafficStoreOptions {
    std::uint64_t roll_bytes = 64ull << 20;
    bool sync = true;  // fdatasync on flush
    bool read_only = false;
};

// Segments live in <dir>/seg-%08d.log; <dir>/index maps record_id -> (segment, offset).
class FileTrafficStore final : public TrafficStore {
public:
    /// Recovers whatever is on disk. A torn or crc-failing tail record is discarded. Damage
    /// before the tail leaves the store read-only with interior_error() set.
    static std::unique_ptr<FileTrafficStore> open(const std::filesystem::path& dir,
                                                  TrafficStoreOptions opts = {});
    ~FileTrafficStore() override;

    std::uint64_t append(TrafficRecord r) override;
    void flush() override;
    void discard_pending() override;
    std::optional<TrafficRecord> get(std::uint64_t id) const override;
    std::vector<TrafficRecord> query(const TrafficQuery& q) const override;
    std::size_t size() const override;

    bool read_only() const { return read_only_; }
    const std::optional<std::string>& interior_error() const { return interior_error_; }
    std::size_t segment_count() const { return segments_.size(); }
    std::size_t discarded_tail_bytes() const { return discarded_tail_; }
    /// Throws Error(CorruptInterior) if recovery found interior damage.
    void check() const;

    static std::filesystem::path segment_path(const std::filesystem::path& dir, std::uint32_t n);

private:
    struct Entry {
        std::uint64_t id;
        std::uint32_t segment;
        std::uint64_t offset;
        std::uint32_t length;  // document length
        std::int64_t ts_micros;
        std::optional<FlowKey> flow;
    };
    struct Segment {
        std::uint32_t number;
        int fd;
        std::uint64_t size;
    };

    FileTrafficStore(std::filesystem::path dir, TrafficStoreOptions opts);
    void recover();
    void write_index();
    void open_segment(std::uint32_t number);
    TrafficRecord read_entry(const Entry& e) const;

    std::filesystem::path dir_;
    TrafficStoreOptions opts_;
    bool read_only_ = false;
    std::optional<std::string> interior_error_;
    std::size_t discarded_tail_ = 0;
    std::vector<Segment> segments_;
    std::vector<Entry> entries_;
    std::uint64_t next_id_ = 1;
    int index_fd_ = -1;

    struct Pending {
        Entry entry;
        std::string framed;
    };
    std::vector<Pending> pending_;
    mutable std::shared_mutex mu_;
};

struct AlertRow {
    std::uint64_t alert_id = 0;  // assigned by the store
    Timestamp received_time;
    std::string solver_id;
    std::string messageid;
    std::string classification_text;
    std::string analyzer_id;
    std::optional<std::string> severity;
    bool duplicate = false;
    std::string xml;

    bool operator==(const AlertRow&) const = default;
};

struct AlertCriteria {
    std::optional<std::string> classification;
    std::optional<std::string> analyzer;
    std::optional<Timestamp> from;  // received_time bounds, inclusive
    std::optional<Timestamp> to;
    std::size_t limit = std::numeric_limits<std::size_t>::max();
};

class AlertStore {
public:
    virtual ~AlertStore() = default;
    virtual std::uint64_t insert(AlertRow row) = 0;
    virtual void flush() = 0;
    /// Conjunction of the given criteria, ordered by received_time then alert_id.
    /// Throws Error(BadRange).
    virtual std::vector<AlertRow> query(const AlertCriteria& c) const = 0;
    virtual bool has_messageid(const std::string& messageid) const = 0;
    virtual std::size_t size() const = 0;
};

// Rows are line-delimited JSON in <dir>/rows.log; the index is rebuilt on open.
class FileAlertStore final : public AlertStore {
public:
    static std::unique_ptr<FileAlertStore> open(const std::filesystem::path& dir, bool sync = true);
    ~FileAlertStore() override;

    std::uint64_t insert(AlertRow row) override;
    void flush() override;
    std::vector<AlertRow> query(const AlertCriteria& c) const override;
    bool has_messageid(const std::string& messageid) const override;
    std::size_t size() const override;
    bool read_only() const { return read_only_; }

private:
    FileAlertStore(std::filesystem::path dir, bool sync);

    std::filesystem::path dir_;
    bool sync_;
    bool read_only_ = false;
    int fd_ = -1;
    std::vector<AlertRow> rows_;
    mutable std::shared_mutex mu_;
};

std::string encode_alert_row(const AlertRow& row);
AlertRow decode_alert_row(std::string_view line);

}  // namespace dnids::store
