#pragma once

#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "asep/error.hpp"

namespace asep {

inline constexpr const char* kVersion = "asep 1.0.0";

/// Ordered key=value records. Used for metadata sidecars and plan files.
class KeyValue {
public:
    void set(const std::string& key, std::string value) {
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = std::move(value);
                return;
            }
        entries_.emplace_back(key, std::move(value));
    }

    void set(const std::string& key, const char* value) { set(key, std::string(value)); }

    void set(const std::string& key, double value) {
        std::ostringstream os;
        os << std::setprecision(std::numeric_limits<double>::max_digits10) << value;
        set(key, os.str());
    }

    template <class Int>
        requires std::is_integral_v<Int>
    void set(const std::string& key, Int value) {
        set(key, std::to_string(value));
    }

    bool contains(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return true;
        return false;
    }

    const std::string& require(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        throw ConfigError("missing config key: " + key);
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        return contains(key) ? require(key) : fallback;
    }

    double require_double(const std::string& key) const { return parse_double(key, require(key)); }
    double get_double(const std::string& key, double fallback) const {
        return contains(key) ? require_double(key) : fallback;
    }

    long long require_int(const std::string& key) const { return parse_int(key, require(key)); }
    long long get_int(const std::string& key, long long fallback) const {
        return contains(key) ? require_int(key) : fallback;
    }

    /// Comma-separated list of doubles.
    std::vector<double> require_list(const std::string& key) const {
        std::vector<double> out;
        std::istringstream is(require(key));
        std::string tok;
        while (std::getline(is, tok, ',')) out.push_back(parse_double(key, tok));
        if (out.empty()) throw ConfigError("config key " + key + " has an empty list");
        return out;
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

    void write(std::ostream& os) const {
        for (const auto& [k, v] : entries_) os << k << '=' << v << '\n';
    }

    void write_file(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw ConfigError("cannot write " + path);
        write(f);
    }

    static KeyValue parse(std::istream& is) {
        KeyValue kv;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
            kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return kv;
    }

    static KeyValue parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file " + path);
        return parse(f);
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

private:
    static double parse_double(const std::string& key, const std::string& text) {
        const std::string t = trim(text);
        double v = 0.0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size())
            throw ConfigError("config key " + key + ": '" + text + "' is not a number");
        return v;
    }

    static long long parse_int(const std::string& key, const std::string& text) {
        const std::string t = trim(text);
        long long v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size())
            throw ConfigError("config key " + key + ": '" + text + "' is not an integer");
        return v;
    }

    std::vector<std::pair<std::string, std::string>> entries_;
};

} // namespace asep
