#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dnids {

/// key = value lines; '#' and ';' start comments; "[name]" prefixes later keys with "name.".
class Ini {
public:
    /// Throws Error(BadConfig) with the offending line number.
    static Ini parse(std::string_view text);
    static Ini load(const std::filesystem::path& path);

    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, std::string fallback) const;
    /// Throws Error(BadConfig) when the key is missing.
    std::string require(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated list, each item trimmed; empty items dropped.
    std::vector<std::string> get_list(const std::string& key) const;

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::string trim_copy(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');

}  // namespace dnids
