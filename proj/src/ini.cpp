#include "dnids/ini.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "dnids/error.hpp"

namespace dnids {

std::string trim_copy(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    while (true) {
        auto p = s.find(sep);
        std::string item = trim_copy(s.substr(0, p));
        if (!item.empty()) out.push_back(std::move(item));
        if (p == std::string_view::npos) break;
        s.remove_prefix(p + 1);
    }
    return out;
}

Ini Ini::parse(std::string_view text) {
    Ini ini;
    std::string section;
    int lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim_copy(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(Errc::BadConfig, "line " + std::to_string(lineno) + ": bad section");
            section = trim_copy(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::BadConfig, "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim_copy(std::string_view(line).substr(0, eq));
        if (key.empty()) throw Error(Errc::BadConfig, "line " + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        ini.values_[key] = trim_copy(std::string_view(line).substr(eq + 1));
    }
    return ini;
}

Ini Ini::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::BadConfig, "cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::string> Ini::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Ini::get_or(const std::string& key, std::string fallback) const {
    auto v = get(key);
    return v ? *v : std::move(fallback);
}

std::string Ini::require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw Error(Errc::BadConfig, "missing key '" + key + "'");
    return *v;
}

long long Ini::get_int(const std::string& key, long long fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        long long n = std::stoll(*v, &used);
        if (used != v->size()) throw std::invalid_argument(key);
        return n;
    } catch (const std::exception&) {
        throw Error(Errc::BadConfig, "key '" + key + "' is not an integer");
    }
}

double Ini::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(key);
        return d;
    } catch (const std::exception&) {
        throw Error(Errc::BadConfig, "key '" + key + "' is not a number");
    }
}

bool Ini::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "off" || *v == "0") return false;
    throw Error(Errc::BadConfig, "key '" + key + "' is not a boolean");
}

std::vector<std::string> Ini::get_list(const std::string& key) const {
    auto v = get(key);
    return v ? split_list(*v) : std::vector<std::string>{};
}

}  // namespace dnids
