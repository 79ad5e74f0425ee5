#pragma once

// Flat `section.key = value` configuration files. Lines starting with '#'
// are comments. Keys are checked against a schema so typos fail loudly.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "freqsp/error.hpp"

namespace freqsp::config {

class FlatConfig {
public:
    FlatConfig() = default;

    static FlatConfig parse(std::istream& in, const std::string& source = "<config>") {
        FlatConfig c;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            c.values_[key] = trim(line.substr(eq + 1));
        }
        return c;
    }

    static FlatConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path);
        return parse(in, path);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    // Throws on any key not in `known`.
    void check_keys(const std::set<std::string>& known) const {
        for (const auto& [k, _] : values_)
            if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    long get_long(const std::string& key, long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const double d = to_double(key, it->second);
        if (d != static_cast<double>(static_cast<long>(d))) throw ConfigError("'" + key + "' must be an integer");
        return static_cast<long>(d);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError("'" + key + "' must be true or false");
    }

    // Comma-separated list of numbers.
    std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        std::istringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(to_double(key, item));
        }
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static double to_double(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

} // namespace freqsp::config
