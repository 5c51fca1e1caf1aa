#include "dnids/idmef.hpp"

#include <expat.h>

#include <cctype>
#include <chrono>
#include <cstdio>
#include <memory>

namespace dnids::idmef {

namespace {

constexpr char kNsSep = '|';

void escape_into(std::string& out, std::string_view s, bool attribute) {
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += attribute ? "&quot;" : "\""; break;
        case '\r': out += "&#13;"; break;
        case '\n': out += attribute ? "&#10;" : "\n"; break;
        case '\t': out += attribute ? "&#9;" : "\t"; break;
        default: out += c;
        }
    }
}

class XmlWriter {
public:
    void open(std::string_view name, std::initializer_list<std::pair<std::string_view, std::string_view>> attrs = {},
              bool empty = false) {
        out_ += "<idmef:";
        out_ += name;
        for (const auto& [k, v] : attrs) {
            out_ += ' ';
            out_ += k;
            out_ += "=\"";
            escape_into(out_, v, true);
            out_ += '"';
        }
        out_ += empty ? "/>" : ">";
    }
    void close(std::string_view name) {
        out_ += "</idmef:";
        out_ += name;
        out_ += '>';
    }
    void text_element(std::string_view name, std::string_view text,
                      std::initializer_list<std::pair<std::string_view, std::string_view>> attrs = {}) {
        open(name, attrs);
        escape_into(out_, text, false);
        close(name);
    }
    void raw(std::string_view s) { out_ += s; }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

void write_analyzer_and_time(XmlWriter& w, const std::string& analyzerid, const CreateTime& t) {
    w.open("Analyzer", {{"analyzerid", analyzerid}}, true);
    w.text_element("CreateTime", t.iso8601, {{"ntpstamp", t.ntpstamp}});
}

void write_address_holder(XmlWriter& w, std::string_view holder, const Address& a) {
    w.open(holder);
    w.open("Node");
    w.open("Address", {{"category", a.category}});
    w.text_element("address", a.address);
    w.close("Address");
    w.close("Node");
    w.close(holder);
}

constexpr std::string_view kHeader =
    "<?xml version=\"1.0\" encoding=\"UTF-8\"?>"
    "<idmef:IDMEF-Message xmlns:idmef=\"http://iana.org/idmef\" version=\"1.0\">";
constexpr std::string_view kFooter = "</idmef:IDMEF-Message>";

// ---- parsing --------------------------------------------------------------

struct XmlNode {
    std::string ns;
    std::string local;
    std::vector<std::pair<std::string, std::string>> attrs;
    std::vector<XmlNode> children;
    std::string text;

    const std::string* attr(std::string_view name) const {
        for (const auto& [k, v] : attrs)
            if (k == name) return &v;
        return nullptr;
    }
    bool is(std::string_view name) const { return ns == kNamespace && local == name; }
    const XmlNode* child(std::string_view name) const {
        for (const auto& c : children)
            if (c.is(name)) return &c;
        return nullptr;
    }
};

struct TreeBuilder {
    std::vector<XmlNode> stack;
    std::optional<XmlNode> root;

    static void split(const char* name, std::string& ns, std::string& local) {
        std::string_view n(name);
        auto p = n.find(kNsSep);
        if (p == std::string_view::npos) {
            ns.clear();
            local = n;
        } else {
            ns = n.substr(0, p);
            local = n.substr(p + 1);
        }
    }

    static void XMLCALL on_start(void* ud, const XML_Char* name, const XML_Char** atts) {
        auto* self = static_cast<TreeBuilder*>(ud);
        XmlNode node;
        split(name, node.ns, node.local);
        for (int i = 0; atts[i] != nullptr; i += 2) {
            std::string ans, alocal;
            split(atts[i], ans, alocal);
            node.attrs.emplace_back(alocal, atts[i + 1]);
        }
        self->stack.push_back(std::move(node));
    }

    static void XMLCALL on_end(void* ud, const XML_Char*) {
        auto* self = static_cast<TreeBuilder*>(ud);
        XmlNode node = std::move(self->stack.back());
        self->stack.pop_back();
        if (self->stack.empty()) self->root = std::move(node);
        else self->stack.back().children.push_back(std::move(node));
    }

    static void XMLCALL on_text(void* ud, const XML_Char* s, int len) {
        auto* self = static_cast<TreeBuilder*>(ud);
        if (!self->stack.empty()) self->stack.back().text.append(s, static_cast<std::size_t>(len));
    }
};

XmlNode parse_tree(std::string_view doc) {
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
        XML_ParserCreateNS("UTF-8", kNsSep), &XML_ParserFree);
    if (!parser) throw Error(Errc::NotXml, "cannot create XML parser");
    TreeBuilder builder;
    XML_SetUserData(parser.get(), &builder);
    XML_SetElementHandler(parser.get(), &TreeBuilder::on_start, &TreeBuilder::on_end);
    XML_SetCharacterDataHandler(parser.get(), &TreeBuilder::on_text);
    if (XML_Parse(parser.get(), doc.data(), static_cast<int>(doc.size()), XML_TRUE) != XML_STATUS_OK)
        throw Error(Errc::NotXml, std::string(XML_ErrorString(XML_GetErrorCode(parser.get()))) + " at line " +
                                      std::to_string(XML_GetCurrentLineNumber(parser.get())));
    if (!builder.root) throw Error(Errc::NotXml, "no root element");
    return std::move(*builder.root);
}

[[noreturn]] void missing(std::string_view element) {
    throw Error(Errc::MissingRequired, std::string(element));
}

const XmlNode& require(const XmlNode& parent, std::string_view name) {
    const XmlNode* n = parent.child(name);
    if (n == nullptr) missing(name);
    return *n;
}

std::string attr_or_empty(const XmlNode& n, std::string_view name) {
    const std::string* v = n.attr(name);
    return v ? *v : std::string{};
}

CreateTime read_time(const XmlNode& n) {
    const std::string* stamp = n.attr("ntpstamp");
    if (stamp == nullptr) missing("CreateTime.ntpstamp");
    return {n.text, *stamp};
}

Address read_address(const XmlNode& holder, std::size_t& warnings) {
    const XmlNode& node = require(holder, "Node");
    const XmlNode& addr = require(node, "Address");
    const XmlNode& value = require(addr, "address");
    Address a;
    a.address = value.text;
    a.category = attr_or_empty(addr, "category");
    if (a.category.empty()) a.category = "unknown";
    warnings += node.children.size() - 1;
    return a;
}

// An unrecognised child survives as AdditionalData when it is plain text.
void keep_unknown(const XmlNode& n, std::vector<AdditionalData>& extra, std::size_t& warnings) {
    if (n.children.empty() && !n.text.empty()) extra.push_back({n.local, n.text});
    else ++warnings;
}

Alert read_alert(const XmlNode& n, std::size_t& warnings) {
    Alert a;
    a.messageid = attr_or_empty(n, "messageid");
    a.analyzerid = attr_or_empty(require(n, "Analyzer"), "analyzerid");
    a.create_time = read_time(require(n, "CreateTime"));
    const XmlNode& cls = require(n, "Classification");
    const std::string* text = cls.attr("text");
    if (text == nullptr) missing("Classification.text");
    a.classification.text = *text;
    for (const auto& c : n.children) {
        if (c.ns != kNamespace) {
            keep_unknown(c, a.additional_data, warnings);
        } else if (c.local == "Analyzer" || c.local == "CreateTime" || c.local == "Classification") {
            continue;
        } else if (c.local == "Source") {
            a.sources.push_back(read_address(c, warnings));
        } else if (c.local == "Target") {
            a.targets.push_back(read_address(c, warnings));
        } else if (c.local == "Assessment") {
            if (const XmlNode* impact = c.child("Impact")) {
                if (const std::string* sev = impact->attr("severity")) {
                    a.severity = parse_severity(*sev);
                    if (!a.severity) ++warnings;
                }
            }
        } else if (c.local == "AdditionalData") {
            AdditionalData d;
            d.meaning = attr_or_empty(c, "meaning");
            if (!c.children.empty()) d.value = c.children.front().text;
            a.additional_data.push_back(std::move(d));
        } else {
            keep_unknown(c, a.additional_data, warnings);
        }
    }
    for (const auto& r : cls.children) {
        if (!r.is("Reference")) {
            ++warnings;
            continue;
        }
        Reference ref;
        ref.origin = attr_or_empty(r, "origin");
        if (const XmlNode* nm = r.child("name")) ref.name = nm->text;
        if (const XmlNode* u = r.child("url")) ref.url = u->text;
        a.classification.references.push_back(std::move(ref));
    }
    return a;
}

Heartbeat read_heartbeat(const XmlNode& n, std::size_t& warnings) {
    Heartbeat h;
    h.messageid = attr_or_empty(n, "messageid");
    h.analyzerid = attr_or_empty(require(n, "Analyzer"), "analyzerid");
    h.create_time = read_time(require(n, "CreateTime"));
    if (const XmlNode* iv = n.child("HeartbeatInterval")) {
        try {
            std::size_t used = 0;
            unsigned long v = std::stoul(iv->text, &used);
            if (used != iv->text.size() || v > 0xffffffffUL) throw std::invalid_argument("interval");
            h.heartbeat_interval_s = static_cast<std::uint32_t>(v);
        } catch (const std::exception&) {
            ++warnings;
        }
    }
    for (const auto& c : n.children)
        if (!c.is("Analyzer") && !c.is("CreateTime") && !c.is("HeartbeatInterval")) ++warnings;
    return h;
}

bool all_hex(std::string_view s) {
    for (char c : s)
        if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

void check_common(std::vector<std::string>& v, const std::string& messageid,
                  const std::string& analyzerid, const CreateTime& t) {
    if (messageid.empty()) v.emplace_back("missing messageid");
    if (analyzerid.empty()) v.emplace_back("missing analyzerid");
    auto iso = parse_iso8601(t.iso8601);
    auto ntp = parse_ntpstamp(t.ntpstamp);
    if (!iso) v.emplace_back("invalid create time");
    if (!ntp) v.emplace_back("invalid ntpstamp");
    if (iso && ntp) {
        // Both sides reduced to NTP era seconds; wrap-around compares modulo 2^32.
        auto expected = static_cast<std::uint32_t>(iso->sec + kNtpEpochOffset);
        auto diff = static_cast<std::int32_t>(ntp->first - expected);
        if (diff < -1 || diff > 1) v.emplace_back("time mismatch");
    }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view severity_name(Severity s) {
    switch (s) {
    case Severity::Info: return "info";
    case Severity::Low: return "low";
    case Severity::Medium: return "medium";
    case Severity::High: return "high";
    }
    return "low";
}

std::optional<Severity> parse_severity(std::string_view text) {
    if (text == "info") return Severity::Info;
    if (text == "low") return Severity::Low;
    if (text == "medium") return Severity::Medium;
    if (text == "high") return Severity::High;
    return std::nullopt;
}

std::string MessageIdGenerator::next() {
    char buf[33];
    auto hi = static_cast<unsigned long long>(rng_());
    auto lo = static_cast<unsigned long long>(rng_());
    std::snprintf(buf, sizeof buf, "%016llx%016llx", hi, lo);
    return buf;
}

std::string ntpstamp(Timestamp t) {
    auto secs = static_cast<std::uint32_t>(t.sec + kNtpEpochOffset);
    auto frac = static_cast<std::uint32_t>((std::uint64_t{t.usec} << 32) / 1'000'000);
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%08x.0x%08x", secs, frac);
    return buf;
}

std::string iso8601(Timestamp t) {
    using namespace std::chrono;
    sys_seconds tp{seconds{t.sec}};
    auto day = floor<days>(tp);
    year_month_day ymd{day};
    hh_mm_ss hms{tp - day};
    char buf[40];
    int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                          static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                          static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                          static_cast<long>(hms.seconds().count()));
    std::string out(buf, static_cast<std::size_t>(n));
    if (t.usec != 0) {
        std::snprintf(buf, sizeof buf, ".%06u", t.usec);
        out += buf;
    }
    out += 'Z';
    return out;
}

CreateTime make_time(Timestamp t) { return {iso8601(t), ntpstamp(t)}; }

std::optional<Timestamp> parse_iso8601(std::string_view s) {
    auto digits = [&](std::size_t off, std::size_t n, int& out) {
        if (off + n > s.size()) return false;
        out = 0;
        for (std::size_t i = 0; i < n; ++i) {
            char c = s[off + i];
            if (c < '0' || c > '9') return false;
            out = out * 10 + (c - '0');
        }
        return true;
    };
    int y, mo, d, h, mi, sec;
    if (!digits(0, 4, y) || s.size() < 19 || s[4] != '-' || !digits(5, 2, mo) || s[7] != '-' ||
        !digits(8, 2, d) || (s[10] != 'T' && s[10] != 't') || !digits(11, 2, h) || s[13] != ':' ||
        !digits(14, 2, mi) || s[16] != ':' || !digits(17, 2, sec))
        return std::nullopt;
    using namespace std::chrono;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    std::size_t pos = 19;
    std::uint32_t usec = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        std::uint64_t scale = 100'000;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            usec += static_cast<std::uint32_t>((s[pos] - '0') * scale);
            scale /= 10;
            ++pos;
        }
        if (pos == start) return std::nullopt;
    }
    std::int64_t offset = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        int oh, om;
        if (!digits(pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' || !digits(pos + 4, 2, om))
            return std::nullopt;
        offset = (oh * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;
    std::int64_t secs = sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600 + mi * 60 + sec - offset;
    return Timestamp{secs, usec};
}

std::optional<std::pair<std::uint32_t, std::uint32_t>> parse_ntpstamp(std::string_view s) {
    if (s.size() != 21 || s.substr(0, 2) != "0x" || s.substr(10, 3) != ".0x") return std::nullopt;
    auto a = s.substr(2, 8);
    auto b = s.substr(13, 8);
    if (!all_hex(a) || !all_hex(b)) return std::nullopt;
    return std::pair{static_cast<std::uint32_t>(std::stoul(std::string(a), nullptr, 16)),
                     static_cast<std::uint32_t>(std::stoul(std::string(b), nullptr, 16))};
}

Alert build_alert(std::string analyzer_id, Timestamp t, const std::vector<Ipv4Addr>& sources,
                  const std::vector<Ipv4Addr>& targets, std::string classification,
                  MessageIdGenerator& ids, AlertExtras extras) {
    if (classification.empty()) throw Error(Errc::EmptyClassification, "classification text is empty");
    Alert a;
    a.messageid = ids.next();
    a.analyzerid = std::move(analyzer_id);
    a.create_time = make_time(t);
    for (const auto& s : sources) a.sources.push_back({s.to_string(), "ipv4-addr"});
    for (const auto& d : targets) a.targets.push_back({d.to_string(), "ipv4-addr"});
    a.classification.text = std::move(classification);
    a.classification.references = std::move(extras.references);
    a.severity = extras.severity;
    a.additional_data = std::move(extras.additional_data);
    return a;
}

Heartbeat build_heartbeat(std::string analyzer_id, Timestamp t, std::uint32_t interval_s,
                          MessageIdGenerator& ids) {
    return {ids.next(), std::move(analyzer_id), make_time(t), interval_s};
}

std::vector<std::string> validate(const Alert& a) {
    std::vector<std::string> v;
    check_common(v, a.messageid, a.analyzerid, a.create_time);
    if (a.classification.text.empty()) v.emplace_back("missing classification text");
    auto check_addr = [&](const Address& addr) {
        if (addr.category != "ipv4-addr") v.emplace_back("unsupported address category");
        else if (!Ipv4Addr::try_parse(addr.address)) v.emplace_back("invalid ipv4 address");
    };
    for (const auto& s : a.sources) check_addr(s);
    for (const auto& t : a.targets) check_addr(t);
    return v;
}

std::vector<std::string> validate(const Heartbeat& h) {
    std::vector<std::string> v;
    check_common(v, h.messageid, h.analyzerid, h.create_time);
    return v;
}

std::vector<std::string> validate(const Message& m) {
    return std::visit([](const auto& x) { return validate(x); }, m);
}

std::string to_xml(const Alert& a) {
    if (auto v = validate(a); !v.empty()) throw Error(Errc::ValidationFailed, v.front());
    XmlWriter w;
    w.raw(kHeader);
    w.open("Alert", {{"messageid", a.messageid}});
    write_analyzer_and_time(w, a.analyzerid, a.create_time);
    for (const auto& s : a.sources) write_address_holder(w, "Source", s);
    for (const auto& t : a.targets) write_address_holder(w, "Target", t);
    if (a.classification.references.empty()) {
        w.open("Classification", {{"text", a.classification.text}}, true);
    } else {
        w.open("Classification", {{"text", a.classification.text}});
        for (const auto& r : a.classification.references) {
            w.open("Reference", {{"origin", r.origin}});
            w.text_element("name", r.name);
            w.text_element("url", r.url);
            w.close("Reference");
        }
        w.close("Classification");
    }
    if (a.severity) {
        w.open("Assessment");
        w.open("Impact", {{"severity", severity_name(*a.severity)}}, true);
        w.close("Assessment");
    }
    for (const auto& d : a.additional_data) {
        w.open("AdditionalData", {{"meaning", d.meaning}, {"type", "string"}});
        w.text_element("string", d.value);
        w.close("AdditionalData");
    }
    w.close("Alert");
    w.raw(kFooter);
    return w.take();
}

std::string to_xml(const Heartbeat& h) {
    if (auto v = validate(h); !v.empty()) throw Error(Errc::ValidationFailed, v.front());
    XmlWriter w;
    w.raw(kHeader);
    w.open("Heartbeat", {{"messageid", h.messageid}});
    write_analyzer_and_time(w, h.analyzerid, h.create_time);
    if (h.heartbeat_interval_s) w.text_element("HeartbeatInterval", std::to_string(*h.heartbeat_interval_s));
    w.close("Heartbeat");
    w.raw(kFooter);
    return w.take();
}

std::string to_xml(const Message& m) {
    return std::visit([](const auto& x) { return to_xml(x); }, m);
}

ParseResult parse_xml(std::string_view document) {
    if (document.empty()) throw Error(Errc::NotXml, "empty document");
    XmlNode root = parse_tree(document);
    if (root.ns != kNamespace) throw Error(Errc::WrongNamespace, "root namespace '" + root.ns + "'");
    if (root.local != "IDMEF-Message") missing("IDMEF-Message");
    ParseResult r;
    const XmlNode* msg = nullptr;
    for (const auto& c : root.children) {
        if (c.is("Alert") || c.is("Heartbeat")) {
            if (msg == nullptr) msg = &c;
            else ++r.warnings;  // only the first message is taken
        } else {
            ++r.warnings;
        }
    }
    if (msg == nullptr) missing("Alert");
    if (msg->local == "Alert") r.message = read_alert(*msg, r.warnings);
    else r.message = read_heartbeat(*msg, r.warnings);
    return r;
}

}  // namespace dnids::idmef
