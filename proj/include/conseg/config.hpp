#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "conseg/errors.hpp"

namespace conseg {

// Flat key=value configuration. '#' starts a comment; blank lines are
// ignored. Lookups with defaults; unknown keys are rejected against a schema
// so typos never pass silently.
class Config {
  public:
    static Config load_file(const std::string& path);
    static Config parse(const std::string& text, const std::string& origin = "<string>");

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    int64_t get_int64(const std::string& key, int64_t fallback) const;
    uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

    // ConfigError naming the first key not present in `allowed`.
    void require_known(const std::vector<std::string>& allowed) const;

    // Deterministic snapshot: sorted key=value lines.
    std::string to_string() const;
    const std::map<std::string, std::string>& entries() const { return kv_; }

    static uint64_t hash_text(const std::string& text);

  private:
    std::map<std::string, std::string> kv_;
    std::string origin_ = "<empty>";
};

}  // namespace conseg
