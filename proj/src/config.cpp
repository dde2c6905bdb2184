#include "crtlab/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace crtlab {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::from_text(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
        c.kv_[key] = value;
    }
    if (c.has("version") && c.integer("version", kVersion) != kVersion)
        throw ValidationError("config: unsupported version " + c.require("version"));
    c.kv_.erase("version");
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
}

void Config::apply_override(const std::string& key_eq_value) {
    const size_t eq = key_eq_value.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("override must be key=value, got: " + key_eq_value);
    kv_[trim(key_eq_value.substr(0, eq))] = trim(key_eq_value.substr(eq + 1));
}

void Config::merge_from(const Config& other) {
    for (const auto& [k, v] : other.kv_) kv_[k] = v;
}

std::string Config::str(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

std::string Config::require(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ValidationError("config: missing required key " + key);
    return it->second;
}

int64_t Config::integer(const std::string& key, int64_t def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    int64_t v = 0;
    const auto& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ValidationError("config: key " + key + " is not an integer: " + s);
    return v;
}

double Config::real(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ValidationError("config: key " + key + " is not a number: " + it->second);
    }
}

bool Config::boolean(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const auto& s = it->second;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ValidationError("config: key " + key + " is not a boolean: " + s);
}

std::vector<int> Config::int_list(const std::string& key, const std::vector<int>& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<int> out;
    std::istringstream is(it->second);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        int v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size())
            throw ValidationError("config: key " + key + " has a bad list element: " + tok);
        out.push_back(v);
    }
    return out;
}

std::string Config::render() const {
    std::ostringstream os;
    os << "version = " << kVersion << "\n";
    for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
    return os.str();
}

void Config::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw RuntimeFailure("config: cannot write " + path);
    os << render();
}

}  // namespace crtlab
