#include "cfvqa/config.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/io.hpp"

#include <algorithm>
#include <sstream>

namespace cfvqa {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view source) {
    KeyValueConfig config;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string content = trim(line);
        if (content.empty()) {
            continue;
        }
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(std::string(source) + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(std::string_view(content).substr(0, eq));
        if (key.empty()) {
            throw ValidationError(std::string(source) + ":" + std::to_string(line_no) + ": empty key");
        }
        config.entries_[key] = trim(std::string_view(content).substr(eq + 1));
    }
    return config;
}

KeyValueConfig KeyValueConfig::load(const std::string &path) { return parse(io::read_file(path), path); }

std::optional<std::string> KeyValueConfig::get(const std::string &key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string &key, const std::string &fallback) const {
    return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string &key, double fallback) const {
    const auto v = get(key);
    if (!v) {
        return fallback;
    }
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size()) {
            throw std::invalid_argument(*v);
        }
        return d;
    } catch (const std::exception &) {
        throw ValidationError("config key " + key + " expects a number, got '" + *v + "'");
    }
}

long long KeyValueConfig::get_int(const std::string &key, long long fallback) const {
    const auto v = get(key);
    if (!v) {
        return fallback;
    }
    try {
        std::size_t used = 0;
        const long long n = std::stoll(*v, &used);
        if (used != v->size()) {
            throw std::invalid_argument(*v);
        }
        return n;
    } catch (const std::exception &) {
        throw ValidationError("config key " + key + " expects an integer, got '" + *v + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string &key, bool fallback) const {
    const auto v = get(key);
    if (!v) {
        return fallback;
    }
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
        return true;
    }
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
        return false;
    }
    throw ValidationError("config key " + key + " expects a boolean, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string &key) const {
    std::vector<std::string> out;
    const auto v = get(key);
    if (!v) {
        return out;
    }
    std::istringstream in(*v);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void KeyValueConfig::require_known(const std::vector<std::string> &allowed) const {
    std::string unknown;
    for (const auto &[key, value] : entries_) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            unknown += (unknown.empty() ? "" : ", ") + key;
        }
    }
    if (!unknown.empty()) {
        throw ValidationError("unknown config keys: " + unknown);
    }
}

std::string KeyValueConfig::to_text() const {
    std::string out;
    for (const auto &[key, value] : entries_) {
        out += key + " = " + value + "\n";
    }
    return out;
}

}  // namespace cfvqa
