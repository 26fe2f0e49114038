#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfvqa {

// Plain `key = value` text, one entry per line, `#` starts a comment.
// Sectioned keys are just dotted names (`train.lr = 0.001`).
class KeyValueConfig {
  public:
    static KeyValueConfig parse(std::string_view text, std::string_view source = "<config>");
    static KeyValueConfig load(const std::string &path);

    void set(const std::string &key, const std::string &value) { entries_[key] = value; }
    bool contains(const std::string &key) const { return entries_.count(key) != 0; }
    std::optional<std::string> get(const std::string &key) const;

    std::string get_string(const std::string &key, const std::string &fallback) const;
    double get_double(const std::string &key, double fallback) const;
    long long get_int(const std::string &key, long long fallback) const;
    bool get_bool(const std::string &key, bool fallback) const;
    std::vector<std::string> get_list(const std::string &key) const;

    // Throws ValidationError naming every key not in `allowed`.
    void require_known(const std::vector<std::string> &allowed) const;

    const std::map<std::string, std::string> &entries() const { return entries_; }
    std::string to_text() const;

  private:
    std::map<std::string, std::string> entries_;
};

}  // namespace cfvqa
