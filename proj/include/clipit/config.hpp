#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clipit/data.hpp"
#include "clipit/errors.hpp"

namespace clipit {

// Flat TOML subset: `key = value` pairs, # comments, quoted strings,
// numbers, booleans, and arrays of quoted strings. Section headers are
// accepted and ignored (keys are global). This covers the whole
// configuration surface; values set on the command line win over the file.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse_file(const std::string& path) {
        ConfigFile cfg;
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            cfg.parse_line(line, path, lineno);
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw ConfigInvalidError("config key '" + key + "' is not a number");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return static_cast<std::uint64_t>(std::stoull(it->second));
        } catch (...) {
            throw ConfigInvalidError("config key '" + key + "' is not an integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw ConfigInvalidError("config key '" + key + "' is not a boolean");
    }

    std::vector<std::string> get_string_array(const std::string& key,
                                              std::vector<std::string> fallback) const {
        auto it = arrays_.find(key);
        return it == arrays_.end() ? std::move(fallback) : it->second;
    }

    bool has_array(const std::string& key) const { return arrays_.count(key) > 0; }

private:
    void parse_line(const std::string& raw, const std::string& path, std::size_t lineno) {
        std::string line = raw;
        // strip comments outside quotes
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            else if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim_copy(line);
        if (line.empty()) return;
        if (line.front() == '[' && line.back() == ']') return;  // section header
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw MalformedLineError(path + ": line " + std::to_string(lineno));
        const std::string key = trim_copy(line.substr(0, eq));
        std::string value = trim_copy(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw MalformedLineError(path + ": line " + std::to_string(lineno));
        if (value.front() == '[') {
            if (value.back() != ']')
                throw MalformedLineError(path + ": line " + std::to_string(lineno));
            arrays_[key] = parse_array(value, path, lineno);
            return;
        }
        if (value.front() == '"') {
            if (value.size() < 2 || value.back() != '"')
                throw MalformedLineError(path + ": line " + std::to_string(lineno));
            value = value.substr(1, value.size() - 2);
        }
        values_[key] = value;
    }

    static std::vector<std::string> parse_array(const std::string& value,
                                                const std::string& path,
                                                std::size_t lineno) {
        std::vector<std::string> out;
        std::string body = value.substr(1, value.size() - 2);
        std::size_t pos = 0;
        while (pos < body.size()) {
            while (pos < body.size() && (body[pos] == ' ' || body[pos] == ',')) ++pos;
            if (pos >= body.size()) break;
            if (body[pos] != '"')
                throw MalformedLineError(path + ": line " + std::to_string(lineno) +
                                         ": arrays hold quoted strings");
            const std::size_t close = body.find('"', pos + 1);
            if (close == std::string::npos)
                throw MalformedLineError(path + ": line " + std::to_string(lineno));
            out.push_back(body.substr(pos + 1, close - pos - 1));
            pos = close + 1;
        }
        return out;
    }

    std::map<std::string, std::string> values_;
    std::map<std::string, std::vector<std::string>> arrays_;
};

}  // namespace clipit
