#pragma once

// Declarative experiment configuration: `key = value` lines, `#` comments,
// and `[class NAME]` blocks holding per-class settings.

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace weldwatch {

struct ConfigSection {
    std::string kind;  // e.g. "class"
    std::string name;
    std::map<std::string, std::string> values;
};

class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& source = "<memory>");
    static ConfigFile load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    std::optional<std::string> get(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    // "a..b" inclusive integer range.
    std::pair<int, int> get_range(const std::string& key, std::pair<int, int> fallback) const;

    const std::vector<ConfigSection>& sections() const { return sections_; }
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::string source_;
    std::map<std::string, std::string> values_;
    std::vector<ConfigSection> sections_;
};

// Value parsers shared with the CLI; throw ParseError naming `what`.
long long parse_int(const std::string& text, const std::string& what);
double parse_real(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);
std::vector<std::string> split_list(const std::string& text);
std::pair<int, int> parse_range(const std::string& text, const std::string& what);

}  // namespace weldwatch
