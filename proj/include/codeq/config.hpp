#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "codeq/common.hpp"

namespace codeq {

// Flat key = value configuration: values come from an optional file, then
// command-line overrides (last writer wins), then per-key defaults at the
// access site. Drivers declare their key set up front and anything outside
// it is rejected before any compute starts.
class Config {
public:
    Config() = default;

    void load_file(const std::string& path) {
        std::ifstream is(path);
        CODEQ_REQUIRE(is.is_open(), "Config: cannot open '", path, "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.resize(hash);
            }
            std::string trimmed = trim(line);
            if (trimmed.empty()) {
                continue;
            }
            auto eq = trimmed.find('=');
            CODEQ_REQUIRE(eq != std::string::npos, "Config: '", path, "' line ",
                          lineno, " is not key = value");
            set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
        }
    }

    // "key=value" form used by CLI overrides.
    void set_pair(const std::string& pair) {
        auto eq = pair.find('=');
        CODEQ_REQUIRE(eq != std::string::npos, "Config: override '", pair,
                      "' is not key=value");
        set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
    }

    void set(const std::string& key, const std::string& value) {
        CODEQ_REQUIRE(!key.empty(), "Config: empty key");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& def) const {
        auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    std::string require_str(const std::string& key) const {
        auto it = values_.find(key);
        CODEQ_REQUIRE(it != values_.end(), "Config: missing required key '", key, "'");
        return it->second;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return def;
        }
        return parse_u64(key, it->second);
    }

    double get_f64(const std::string& key, double def) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return def;
        }
        try {
            std::size_t used = 0;
            double v = std::stod(it->second, &used);
            CODEQ_REQUIRE(used == it->second.size(), "bad float");
            return v;
        } catch (...) {
            fail("Config: key '", key, "' has non-numeric value '", it->second, "'");
        }
    }

    bool get_bool(const std::string& key, bool def) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return def;
        }
        if (it->second == "1" || it->second == "true" || it->second == "on") {
            return true;
        }
        if (it->second == "0" || it->second == "false" || it->second == "off") {
            return false;
        }
        fail("Config: key '", key, "' has non-boolean value '", it->second, "'");
    }

    std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                            std::vector<std::uint64_t> def) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return def;
        }
        std::vector<std::uint64_t> out;
        for (const std::string& item : split(it->second)) {
            out.push_back(parse_u64(key, item));
        }
        return out;
    }

    std::vector<double> get_f64_list(const std::string& key,
                                     std::vector<double> def) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return def;
        }
        std::vector<double> out;
        for (const std::string& item : split(it->second)) {
            try {
                out.push_back(std::stod(item));
            } catch (...) {
                fail("Config: key '", key, "' has non-numeric list item '", item, "'");
            }
        }
        return out;
    }

    std::vector<std::string> get_str_list(const std::string& key,
                                          std::vector<std::string> def) const {
        auto it = values_.find(key);
        return it == values_.end() ? def : split(it->second);
    }

    // Rejects any key outside the declared schema.
    void require_known(const std::set<std::string>& known) const {
        for (const auto& [key, value] : values_) {
            CODEQ_REQUIRE(known.count(key), "Config: unknown key '", key, "'");
        }
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    }

    static std::vector<std::string> split(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(trim(item));
        }
        return out;
    }

    static std::uint64_t parse_u64(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            // scientific-notation counts (1e5) are accepted for grid keys
            double d = std::stod(v, &used);
            CODEQ_REQUIRE(used == v.size() && d >= 0 && d == static_cast<double>(static_cast<std::uint64_t>(d)),
                          "bad count");
            return static_cast<std::uint64_t>(d);
        } catch (...) {
            fail("Config: key '", key, "' has non-integer value '", v, "'");
        }
    }

    std::map<std::string, std::string> values_;
};

} // namespace codeq
