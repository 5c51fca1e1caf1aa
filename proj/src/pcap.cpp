#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dnids/packet.hpp"

namespace dnids {

namespace {

constexpr std::uint32_t kMaxRecordLen = 0x40000;  // sanity bound on incl_len

std::uint32_t bswap32(std::uint32_t v) {
    return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
}

// Reads up to n octets; returns how many arrived.
std::size_t read_some(std::istream& in, std::uint8_t* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount());
}

}  // namespace

PcapReader::PcapReader(std::istream& in) : in_(in) {
    std::array<std::uint8_t, 24> hdr{};
    std::size_t got = read_some(in_, hdr.data(), hdr.size());
    if (got < 4) throw Error(Errc::BadMagic, "stream shorter than a pcap magic number");
    std::uint32_t magic = load_be32(hdr, 0);
    if (magic == kPcapMagic) {
        swapped_ = false;
    } else if (magic == kPcapMagicSwapped) {
        swapped_ = true;
    } else {
        throw Error(Errc::BadMagic, "unrecognised pcap magic");
    }
    if (got < hdr.size()) throw Error(Errc::Truncated, "pcap global header");
    snaplen_ = fix(load_be32(hdr, 16));
    linktype_ = fix(load_be32(hdr, 20));
}

std::uint32_t PcapReader::fix(std::uint32_t v) const noexcept { return swapped_ ? bswap32(v) : v; }

std::optional<PcapRecord> PcapReader::next() {
    std::array<std::uint8_t, 16> hdr{};
    std::size_t got = read_some(in_, hdr.data(), hdr.size());
    if (got == 0) return std::nullopt;
    if (got < hdr.size()) throw Error(Errc::TruncatedRecord, "record header cut short");
    std::uint32_t sec = fix(load_be32(hdr, 0));
    std::uint32_t usec = fix(load_be32(hdr, 4));
    std::uint32_t incl = fix(load_be32(hdr, 8));
    std::uint32_t orig = fix(load_be32(hdr, 12));
    if (incl > kMaxRecordLen) throw Error(Errc::TruncatedRecord, "implausible record length");
    PcapRecord r;
    r.ts = Timestamp::from_micros(std::int64_t{sec} * 1'000'000 + usec);
    r.orig_len = orig;
    r.data.resize(incl);
    if (read_some(in_, r.data.data(), incl) < incl)
        throw Error(Errc::TruncatedRecord, "record data cut short");
    return r;
}

std::vector<PcapRecord> read_pcap(std::istream& in) {
    PcapReader reader(in);
    std::vector<PcapRecord> out;
    try {
        while (auto r = reader.next()) out.push_back(std::move(*r));
    } catch (const Error& e) {
        if (e.code() != Errc::TruncatedRecord) throw;
        throw PcapTruncated(std::move(out), e.what());
    }
    return out;
}

std::vector<PcapRecord> read_pcap_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + path);
    return read_pcap(in);
}

void write_pcap(std::ostream& out, std::span<const PcapRecord> records) {
    Bytes buf;
    ByteWriter w(buf);
    w.u32(kPcapMagic);
    w.u16(2);
    w.u16(4);
    w.u32(0);  // thiszone
    w.u32(0);  // sigfigs
    w.u32(kPcapSnaplen);
    w.u32(kLinktypeEthernet);
    for (const auto& r : records) {
        if (r.data.size() > kPcapSnaplen)
            throw Error(Errc::RecordTooLarge, std::to_string(r.data.size()) + " octets");
        if (r.ts.sec < 0 || r.ts.sec > 0xffffffffLL || r.ts.usec >= 1'000'000)
            throw Error(Errc::InvalidField, "timestamp out of pcap range");
        w.u32(static_cast<std::uint32_t>(r.ts.sec));
        w.u32(r.ts.usec);
        w.u32(static_cast<std::uint32_t>(r.data.size()));
        w.u32(std::max<std::uint32_t>(r.orig_len, static_cast<std::uint32_t>(r.data.size())));
        w.bytes(r.data);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Bytes write_pcap(std::span<const PcapRecord> records) {
    std::ostringstream os(std::ios::binary);
    write_pcap(os, records);
    const std::string s = os.str();
    return Bytes(s.begin(), s.end());
}

void write_pcap_file(const std::string& path, std::span<const PcapRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot create " + path);
    write_pcap(out, records);
    if (!out) throw Error(Errc::IoFailure, "write failed for " + path);
}

PcapRecord to_pcap_record(const Packet& p) {
    return {p.ts, static_cast<std::uint32_t>(p.raw.size()), p.raw};
}

}  // namespace dnids
