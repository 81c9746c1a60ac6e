#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "resdens/errors.hpp"
#include "resdens/rng.hpp"

namespace resdens {

// Key-value config file, the grammar shared by network presets and run
// configs:
//
//   # comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key". Values keep their raw text; typed
// getters parse on demand. Unknown keys are preserved so presets can carry
// annotations.
class KeyValueFile {
public:
    KeyValueFile() = default;

    static KeyValueFile parse(std::istream& in, const std::string& origin = "<stream>") {
        KeyValueFile f;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                if (section.empty())
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
                continue;
            }
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            std::string full = section.empty() ? key : section + "." + key;
            f.set(full, value);
        }
        return f;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in, path);
    }

    void set(const std::string& key, const std::string& value) {
        if (values_.find(key) == values_.end()) order_.push_back(key);
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    const std::string& get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key: " + key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }

    long long get_int(const std::string& key) const { return parse_int(key, get_string(key)); }
    long long get_int(const std::string& key, long long dflt) const {
        return has(key) ? get_int(key) : dflt;
    }

    double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
    double get_double(const std::string& key, double dflt) const {
        return has(key) ? get_double(key) : dflt;
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get_string(key);
        if (v == "true" || v == "on" || v == "1") return true;
        if (v == "false" || v == "off" || v == "0") return false;
        throw ConfigError("config key " + key + ": expected boolean, got '" + v + "'");
    }
    bool get_bool(const std::string& key, bool dflt) const { return has(key) ? get_bool(key) : dflt; }

    std::vector<long long> get_int_list(const std::string& key) const {
        std::vector<long long> out;
        std::stringstream ss(get_string(key));
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(parse_int(key, trim(item)));
        return out;
    }

    // Canonical text: keys sorted, one per line, no sections. Used for
    // hashing so formatting differences do not change identity.
    std::string canonical_text() const {
        std::vector<std::string> keys = order_;
        std::sort(keys.begin(), keys.end());
        std::ostringstream os;
        for (const auto& k : keys) os << k << "=" << values_.at(k) << "\n";
        return os.str();
    }

    std::uint64_t hash() const { return Rng::fnv1a(canonical_text()); }

    const std::vector<std::string>& keys() const { return order_; }

    static std::string trim(const std::string& s) {
        std::size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        std::size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    static long long parse_int(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            long long x = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected integer, got '" + v + "'");
        }
    }

    static double parse_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected number, got '" + v + "'");
        }
    }

    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

} // namespace resdens
