#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dnids/packet.hpp"

// IDMEF (RFC 4765) Alert and Heartbeat messages: the subset solvers exchange with the
// head-server. Serialization is canonical: fixed element order, no whitespace between
// elements, `idmef:` prefix bound to the IANA namespace.
namespace dnids::idmef {

inline constexpr std::string_view kNamespace = "http://iana.org/idmef";
inline constexpr std::string_view kVersion = "1.0";
inline constexpr std::int64_t kNtpEpochOffset = 2'208'988'800;  // 1900-01-01 -> 1970-01-01

struct Address {
    std::string address;
    std::string category = "ipv4-addr";

    bool operator==(const Address&) const = default;
};

struct Reference {
    std::string origin = "unknown";
    std::string name;
    std::string url;

    bool operator==(const Reference&) const = default;
};

struct Classification {
    std::string text;
    std::vector<Reference> references;

    bool operator==(const Classification&) const = default;
};

enum class Severity { Info, Low, Medium, High };
std::string_view severity_name(Severity s);
std::optional<Severity> parse_severity(std::string_view text);

struct AdditionalData {
    std::string meaning;
    std::string value;

    bool operator==(const AdditionalData&) const = default;
};

struct CreateTime {
    std::string iso8601;
    std::string ntpstamp;

    bool operator==(const CreateTime&) const = default;
};

struct Alert {
    std::string messageid;
    std::string analyzerid;
    CreateTime create_time;
    std::vector<Address> sources;
    std::vector<Address> targets;
    Classification classification;
    std::optional<Severity> severity;
    std::vector<AdditionalData> additional_data;

    bool operator==(const Alert&) const = default;
};

struct Heartbeat {
    std::string messageid;
    std::string analyzerid;
    CreateTime create_time;
    std::optional<std::uint32_t> heartbeat_interval_s;

    bool operator==(const Heartbeat&) const = default;
};

using Message = std::variant<Alert, Heartbeat>;

/// Seeded 128-bit identifiers rendered as 32 lowercase hex characters.
class MessageIdGenerator {
public:
    explicit MessageIdGenerator(std::uint64_t seed) : rng_(seed) {}
    std::string next();

private:
    std::mt19937_64 rng_;
};

/// "0x" + 8 hex seconds since 1900 (mod 2^32) + ".0x" + 8 hex fraction.
std::string ntpstamp(Timestamp t);
/// "YYYY-MM-DDThh:mm:ss[.ffffff]Z"
std::string iso8601(Timestamp t);
CreateTime make_time(Timestamp t);

std::optional<Timestamp> parse_iso8601(std::string_view text);
/// Seconds since 1900 and fraction, as written.
std::optional<std::pair<std::uint32_t, std::uint32_t>> parse_ntpstamp(std::string_view text);

struct AlertExtras {
    std::optional<Severity> severity;
    std::vector<AdditionalData> additional_data;
    std::vector<Reference> references;
};

/// Throws Error(EmptyClassification).
Alert build_alert(std::string analyzer_id, Timestamp t, const std::vector<Ipv4Addr>& sources,
                  const std::vector<Ipv4Addr>& targets, std::string classification,
                  MessageIdGenerator& ids, AlertExtras extras = {});

Heartbeat build_heartbeat(std::string analyzer_id, Timestamp t, std::uint32_t interval_s,
                          MessageIdGenerator& ids);

/// Empty when the message is valid; otherwise human-readable violations such as
/// "invalid ipv4 address" or "time mismatch".
std::vector<std::string> validate(const Alert& a);
std::vector<std::string> validate(const Heartbeat& h);
std::vector<std::string> validate(const Message& m);

/// Throws Error(ValidationFailed) when validate() reports anything.
std::string to_xml(const Alert& a);
std::string to_xml(const Heartbeat& h);
std::string to_xml(const Message& m);

struct ParseResult {
    Message message;
    std::size_t warnings = 0;  // unknown elements that could not be kept
};

/// Throws Error(NotXml), Error(WrongNamespace), Error(MissingRequired) whose message names
/// the missing element.
ParseResult parse_xml(std::string_view document);

}  // namespace dnids::idmef
