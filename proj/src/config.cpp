#include "gazevit/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gazevit/errors.hpp"

namespace gazevit {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

RunConfig::RunConfig(std::map<std::string, std::string> defaults) : values_(std::move(defaults)) {
    for (const auto& [key, value] : values_)
        if (key.find('.') == std::string::npos || key.front() == '.' || key.back() == '.')
            throw ConfigError("config key '" + key + "' must have the form section.key");
}

void RunConfig::merge_text(std::string_view text, std::string_view origin) {
    std::istringstream in{std::string(text)};
    std::string line, section;
    int lineno = 0;
    auto where = [&] { return std::string(origin) + ":" + std::to_string(lineno) + ": "; };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        std::string s = trim(hash == std::string::npos ? line : std::string_view(line).substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']' || s.size() < 3) throw ConfigError(where() + "malformed section header '" + s + "'");
            section = trim(std::string_view(s).substr(1, s.size() - 2));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value', got '" + s + "'");
        const std::string key = trim(std::string_view(s).substr(0, eq));
        const std::string value = trim(std::string_view(s).substr(eq + 1));
        if (key.empty()) throw ConfigError(where() + "empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (!values_.contains(full)) throw ConfigError(where() + "unknown key '" + full + "'");
        values_[full] = value;
    }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    merge_text(ss.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) throw ConfigError("unknown key '" + key + "'");
    values_[key] = value;
}

const std::string& RunConfig::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
}

std::string RunConfig::get_string(const std::string& key) const { return raw(key); }

int RunConfig::get_int(const std::string& key) const {
    const std::string& v = raw(key);
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& v = raw(key);
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
    return out;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = raw(key);
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string RunConfig::resolved() const {
    std::ostringstream out;
    std::string current;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string section = key.substr(0, dot);
        const std::string name = key.substr(dot + 1);
        if (section != current) {
            if (!current.empty()) out << '\n';
            out << '[' << section << "]\n";
            current = section;
        }
        out << name << " = " << value << '\n';
    }
    return out.str();
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out || !(out << resolved())) throw IoError("cannot write " + path.string());
}

}  // namespace gazevit
