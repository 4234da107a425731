#pragma once

// Flat key-value configuration files (a TOML-compatible subset):
//
//     # comment
//     kind = "gaussian"
//     n1 = 10
//     tau = [0.0, 1e-3, 1e-2]
//
// Keys are bare identifiers (dots allowed), values are integers, floats,
// booleans, strings (quoted or bare) or one-line arrays of those.

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowrank {

class KeyValueConfig
{
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text)
    {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = strip_comment(line);
            line = trim(line);
            if (line.empty() || line.front() == '[')  // blank or TOML table header
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& raw) { values_[key] = raw; }

    std::string get_string(const std::string& key) const { return unquote(raw(key)); }

    std::string get_string(const std::string& key, const std::string& fallback) const
    {
        return has(key) ? get_string(key) : fallback;
    }

    double get_double(const std::string& key) const { return to_double(key, raw(key)); }

    double get_double(const std::string& key, double fallback) const
    {
        return has(key) ? get_double(key) : fallback;
    }

    long long get_int(const std::string& key) const { return to_int(key, raw(key)); }

    long long get_int(const std::string& key, long long fallback) const
    {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const
    {
        if (!has(key))
            return fallback;
        try {
            return std::stoull(unquote(raw(key)));
        } catch (const std::exception&) {
            throw std::invalid_argument("config key '" + key + "': not an unsigned integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const std::string v = unquote(raw(key));
        if (v == "true" || v == "1")
            return true;
        if (v == "false" || v == "0")
            return false;
        throw std::invalid_argument("config key '" + key + "': not a boolean");
    }

    /// Scalars are accepted as one-element lists.
    std::vector<double> get_double_list(const std::string& key) const
    {
        std::vector<double> out;
        for (const auto& item : split_list(raw(key)))
            out.push_back(to_double(key, item));
        return out;
    }

    std::vector<long long> get_int_list(const std::string& key) const
    {
        std::vector<long long> out;
        for (const auto& item : split_list(raw(key)))
            out.push_back(to_int(key, item));
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    /// Canonical text: sorted keys, one "key = value" per line.
    std::string canonical() const
    {
        std::string out;
        for (const auto& [k, v] : values_)
            out += k + " = " + v + "\n";
        return out;
    }

private:
    const std::string& raw(const std::string& key) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            throw std::invalid_argument("config: missing key '" + key + "'");
        return it->second;
    }

    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos)
            return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static std::string strip_comment(const std::string& s)
    {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"')
                quoted = !quoted;
            else if (s[i] == '#' && !quoted)
                return s.substr(0, i);
        }
        return s;
    }

    static std::string unquote(const std::string& s)
    {
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
            return s.substr(1, s.size() - 2);
        return s;
    }

    static std::vector<std::string> split_list(const std::string& s)
    {
        std::string body = trim(s);
        if (body.empty() || body.front() != '[')
            return {body};
        if (body.back() != ']')
            throw std::invalid_argument("config: unterminated list '" + s + "'");
        body = body.substr(1, body.size() - 2);
        std::vector<std::string> items;
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty())
                items.push_back(item);
        }
        return items;
    }

    static double to_double(const std::string& key, const std::string& v)
    {
        try {
            std::size_t used = 0;
            const double d = std::stod(unquote(v), &used);
            if (used != unquote(v).size())
                throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw std::invalid_argument("config key '" + key + "': not a number: " + v);
        }
    }

    static long long to_int(const std::string& key, const std::string& v)
    {
        try {
            std::size_t used = 0;
            const long long i = std::stoll(unquote(v), &used);
            if (used != unquote(v).size())
                throw std::invalid_argument(v);
            return i;
        } catch (const std::exception&) {
            throw std::invalid_argument("config key '" + key + "': not an integer: " + v);
        }
    }

    std::map<std::string, std::string> values_;
};

/// FNV-1a, used to fingerprint configs in CSV headers.
inline std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace lowrank
