#include "dnids/bytes.hpp"
#include "dnids/error.hpp"

namespace dnids {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::Truncated: return "Truncated";
    case Errc::InvalidField: return "InvalidField";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedRecord: return "TruncatedRecord";
    case Errc::RecordTooLarge: return "RecordTooLarge";
    case Errc::UnknownTarget: return "UnknownTarget";
    case Errc::SensorIsTarget: return "SensorIsTarget";
    case Errc::UnknownDestination: return "UnknownDestination";
    case Errc::DuplicateAddress: return "DuplicateAddress";
    case Errc::PortConflict: return "PortConflict";
    case Errc::BadScenario: return "BadScenario";
    case Errc::FrameTooLarge: return "FrameTooLarge";
    case Errc::BadVersion: return "BadVersion";
    case Errc::UnknownType: return "UnknownType";
    case Errc::BadHello: return "BadHello";
    case Errc::MalformedBatch: return "MalformedBatch";
    case Errc::AuthFailed: return "AuthFailed";
    case Errc::ConnectionClosed: return "ConnectionClosed";
    case Errc::EmptyClassification: return "EmptyClassification";
    case Errc::ValidationFailed: return "ValidationFailed";
    case Errc::NotXml: return "NotXml";
    case Errc::WrongNamespace: return "WrongNamespace";
    case Errc::MissingRequired: return "MissingRequired";
    case Errc::IoFailure: return "IoFailure";
    case Errc::CorruptInterior: return "CorruptInterior";
    case Errc::ReadOnly: return "ReadOnly";
    case Errc::BadRange: return "BadRange";
    case Errc::StoreFailure: return "StoreFailure";
    case Errc::BadConfig: return "BadConfig";
    }
    return "Unknown";
}

std::string to_hex(ByteView data) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

Bytes from_hex(std::string_view text) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (text.size() % 2 != 0) throw Error(Errc::InvalidField, "odd-length hex string");
    Bytes out;
    out.reserve(text.size() / 2);
    for (std::size_t i = 0; i < text.size(); i += 2) {
        int hi = nibble(text[i]);
        int lo = nibble(text[i + 1]);
        if (hi < 0 || lo < 0) throw Error(Errc::InvalidField, "bad hex digit");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

}  // namespace dnids
