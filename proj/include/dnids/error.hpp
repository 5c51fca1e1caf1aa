#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dnids {

enum class Errc {
    // packet_model
    Truncated,
    InvalidField,
    BadMagic,
    TruncatedRecord,
    RecordTooLarge,
    // arp_redirect
    UnknownTarget,
    SensorIsTarget,
    UnknownDestination,
    // segment_sim
    DuplicateAddress,
    PortConflict,
    BadScenario,
    // wire_protocol
    FrameTooLarge,
    BadVersion,
    UnknownType,
    BadHello,
    MalformedBatch,
    AuthFailed,
    ConnectionClosed,
    // idmef
    EmptyClassification,
    ValidationFailed,
    NotXml,
    WrongNamespace,
    MissingRequired,
    // persistence / head
    IoFailure,
    CorruptInterior,
    ReadOnly,
    BadRange,
    StoreFailure,
    // config
    BadConfig,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace dnids
