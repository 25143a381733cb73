#include "weldwatch/config.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/textio.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace weldwatch {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

long long parse_int(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw ParseError(what + ": expected an integer, got '" + text + "'");
    return v;
}

double parse_real(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
        throw ParseError(what + ": expected a finite real, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    throw ParseError(what + ": expected a boolean, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::pair<int, int> parse_range(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    const auto dots = t.find("..");
    if (dots == std::string::npos) {
        const int v = static_cast<int>(parse_int(t, what));
        return {v, v};
    }
    const int lo = static_cast<int>(parse_int(t.substr(0, dots), what));
    const int hi = static_cast<int>(parse_int(t.substr(dots + 2), what));
    if (lo > hi) throw ParseError(what + ": empty range '" + text + "'");
    return {lo, hi};
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& source) {
    ConfigFile cfg;
    cfg.source_ = source;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    ConfigSection* section = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(where + ": unterminated section header");
            std::istringstream header(line.substr(1, line.size() - 2));
            ConfigSection s;
            header >> s.kind >> s.name;
            if (s.kind.empty() || s.name.empty()) throw ParseError(where + ": section needs a kind and a name");
            cfg.sections_.push_back(std::move(s));
            section = &cfg.sections_.back();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(where + ": empty key");
        auto& target = section ? section->values : cfg.values_;
        if (!target.emplace(key, value).second) throw ParseError(where + ": duplicate key '" + key + "'");
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    return parse(textio::read_file(path), path);
}

std::optional<std::string> ConfigFile::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
    const auto v = get(key);
    return v ? parse_int(*v, source_ + ": " + key) : fallback;
}

double ConfigFile::get_real(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? parse_real(*v, source_ + ": " + key) : fallback;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    return v ? parse_bool(*v, source_ + ": " + key) : fallback;
}

std::vector<std::string> ConfigFile::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    const auto v = get(key);
    return v ? split_list(*v) : fallback;
}

std::vector<int> ConfigFile::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::vector<int> out;
    for (const auto& item : split_list(*v)) out.push_back(static_cast<int>(parse_int(item, source_ + ": " + key)));
    return out;
}

std::pair<int, int> ConfigFile::get_range(const std::string& key, std::pair<int, int> fallback) const {
    const auto v = get(key);
    return v ? parse_range(*v, source_ + ": " + key) : fallback;
}

}  // namespace weldwatch
