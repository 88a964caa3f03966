#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsd/errors.hpp"

namespace fsd {

/// Line-oriented "key value value ..." text file. '#' starts a comment,
/// blank lines are skipped, keys may repeat.
class KeyValueFile {
  public:
    using Entry = std::pair<std::string, std::vector<std::string>>;

    static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>") {
        KeyValueFile kv;
        kv.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
            std::istringstream ls(line);
            std::string key;
            if (!(ls >> key)) continue;
            std::vector<std::string> values;
            std::string tok;
            while (ls >> tok) values.push_back(tok);
            kv.entries_.push_back({key, std::move(values)});
        }
        return kv;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    bool has(const std::string& key) const {
        for (const auto& e : entries_)
            if (e.first == key) return true;
        return false;
    }

    /// All value lists recorded under `key`, in file order.
    std::vector<std::vector<std::string>> all(const std::string& key) const {
        std::vector<std::vector<std::string>> out;
        for (const auto& e : entries_)
            if (e.first == key) out.push_back(e.second);
        return out;
    }

    const std::vector<std::string>& values(const std::string& key) const {
        for (const auto& e : entries_)
            if (e.first == key) return e.second;
        throw ConfigError(origin_ + ": missing key '" + key + "'");
    }

    std::string get_string(const std::string& key) const {
        const auto& v = values(key);
        if (v.size() != 1)
            throw ConfigError(origin_ + ": key '" + key + "' expects 1 value, got " +
                              std::to_string(v.size()));
        return v[0];
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }

    long get_long(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            size_t used = 0;
            long v = std::stol(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not an integer: '" + s + "'");
        }
    }

    std::vector<double> get_doubles(const std::string& key, size_t expected) const {
        const auto& v = values(key);
        if (v.size() != expected)
            throw ConfigError(origin_ + ": key '" + key + "' expects " +
                              std::to_string(expected) + " values, got " +
                              std::to_string(v.size()));
        std::vector<double> out;
        out.reserve(v.size());
        for (const auto& s : v) out.push_back(to_double(key, s));
        return out;
    }

    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    long get_long_or(const std::string& key, long fallback) const {
        return has(key) ? get_long(key) : fallback;
    }
    std::string get_string_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    const std::string& origin() const { return origin_; }

    double to_double(const std::string& key, const std::string& s) const {
        try {
            size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" + s + "'");
        }
    }

  private:
    std::string origin_;
    std::vector<Entry> entries_;
};

}  // namespace fsd
