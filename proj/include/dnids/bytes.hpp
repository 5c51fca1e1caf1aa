#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dnids/error.hpp"

namespace dnids {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Big-endian field access into a byte buffer. Callers check bounds.
inline std::uint16_t load_be16(ByteView b, std::size_t off) {
    return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}
inline std::uint32_t load_be32(ByteView b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}
inline std::uint64_t load_be64(ByteView b, std::size_t off) {
    return (std::uint64_t{load_be32(b, off)} << 32) | load_be32(b, off + 4);
}
inline void store_be16(std::span<std::uint8_t> b, std::size_t off, std::uint16_t v) {
    b[off] = static_cast<std::uint8_t>(v >> 8);
    b[off + 1] = static_cast<std::uint8_t>(v);
}
inline void store_be32(std::span<std::uint8_t> b, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
}

/// Appends big-endian integers and raw octets to a growing buffer.
class ByteWriter {
public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
        out_.push_back(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void u64(std::uint64_t v) {
        for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void bytes(ByteView v) { out_.insert(out_.end(), v.begin(), v.end()); }

private:
    Bytes& out_;
};

/// Bounds-checked big-endian cursor. Reading past the end throws Error(on_short).
class ByteReader {
public:
    ByteReader(ByteView data, Errc on_short) : data_(data), on_short_(on_short) {}

    std::uint8_t u8() { need(1); return data_[pos_++]; }
    std::uint16_t u16() { need(2); auto v = load_be16(data_, pos_); pos_ += 2; return v; }
    std::uint32_t u32() { need(4); auto v = load_be32(data_, pos_); pos_ += 4; return v; }
    std::uint64_t u64() { need(8); auto v = load_be64(data_, pos_); pos_ += 8; return v; }
    ByteView take(std::size_t n) {
        need(n);
        auto v = data_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw Error(on_short_, "short read");
    }

    ByteView data_;
    Errc on_short_;
    std::size_t pos_ = 0;
};

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view text);

}  // namespace dnids
