#pragma once

#include <map>
#include <string>
#include <vector>

#include "crtlab/common.hpp"

namespace crtlab {

// Flat dotted-key configuration: a versioned plain-text document of
// `key = value` lines plus `--set key=value` overrides. Rendering is
// canonical (sorted keys), so the hash identifies a resolved run exactly.
class Config {
  public:
    Config() = default;

    static Config from_file(const std::string& path);
    static Config from_text(const std::string& text);

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void apply_override(const std::string& key_eq_value);
    void merge_from(const Config& other);  // other wins

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    std::string str(const std::string& key, const std::string& def) const;
    std::string require(const std::string& key) const;
    int64_t integer(const std::string& key, int64_t def) const;
    double real(const std::string& key, double def) const;
    bool boolean(const std::string& key, bool def) const;
    std::vector<int> int_list(const std::string& key, const std::vector<int>& def) const;

    std::string render() const;
    uint64_t hash() const { return fnv1a(render().data(), render().size()); }
    std::string hash_hex() const { return hex64(hash()); }
    void save(const std::string& path) const;

    const std::map<std::string, std::string>& items() const { return kv_; }

    static constexpr int kVersion = 1;

  private:
    std::map<std::string, std::string> kv_;
};

}  // namespace crtlab
