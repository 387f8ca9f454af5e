#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace gazevit {

/// Flat `key = value` settings grouped under `[section]` headers. Keys are
/// addressed as "section.key"; only keys present in the defaults are accepted.
class RunConfig {
public:
    explicit RunConfig(std::map<std::string, std::string> defaults);

    void merge_text(std::string_view text, std::string_view origin = "<text>");
    void merge_file(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);

    bool contains(const std::string& key) const { return values_.contains(key); }
    std::string get_string(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Every key with its effective value, in the input format.
    std::string resolved() const;
    void write_resolved(const std::filesystem::path& path) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    const std::string& raw(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

}  // namespace gazevit
