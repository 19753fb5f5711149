#pragma once

// key=value configuration files. '#' starts a comment; blank lines are
// ignored; keys must come from the schema below.

#include <lsk/error.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lsk {

struct ConfigKey {
  std::string_view name;
  std::string_view fallback;  // empty: unset unless given
  std::string_view help;
};

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = {
      {"model", "S-SRCNN", "model name, e.g. SRCNN, S-SRCNN, ESPCN, S-ESPCN, VDSR-B2, S-VDSR-B2"},
      {"models", "SRCNN,S-SRCNN,ESPCN,S-ESPCN,VDSR-B1,S-VDSR-B1,VDSR-B2,S-VDSR-B2,VDSR-B3,S-VDSR-B3",
       "analyze: comma-separated list, read as (normal, separable) pairs"},
      {"scale", "2", "super-resolution factor"},
      {"widths", "full", "channel widths: full (64/32), toy (16/8) or N1/N2"},
      {"epochs", "", "training epochs (default: reference preset for the model family)"},
      {"batch_size", "", "mini-batch size (default: reference preset)"},
      {"optimizer", "", "sgd or adam (default: reference preset)"},
      {"lr_schedule", "", "learning rates as epoch:lr pairs, e.g. 0:1e-2,30:1e-3 (default: reference preset)"},
      {"clip", "", "global gradient-norm clip, 0 disables (default: 0.4 for VDSR, else 0)"},
      {"loss", "mse", "mse or l1"},
      {"seed", "1", "seed for initialization and shuffling"},
      {"patch", "33", "training patch size on the network input grid"},
      {"stride", "14", "training patch stride"},
      {"max_patches", "0", "cap on training patches, 0 keeps all"},
      {"count_extra_bias", "true", "analyze: count c_e biases of the extra layer"},
      {"height", "512", "analyze: output height"},
      {"width", "512", "analyze: output width"},
      {"grid", "feature", "analyze: feature (all convolutions at output size) or native"},
      {"hr_dir", "", "degrade/synth: directory of HR PNGs"},
      {"data_dir", "", "train/eval: degraded dataset directory (with manifest.csv)"},
      {"val_dir", "", "train: validation dataset directory (default: data_dir)"},
      {"out_dir", "", "output directory"},
      {"report", "", "write the CSV table to this file as well"},
      {"checkpoint", "", "eval/convert/dump-features: input checkpoint"},
      {"output", "", "convert: output checkpoint"},
      {"mode", "merge", "convert: merge or decompose"},
      {"c_e", "0", "convert decompose: extra-layer channels, 0 uses each layer's full rank (exact)"},
      {"image", "", "dump-features: input PNG"},
      {"layer", "-1", "dump-features: layer index, -1 for the last hidden layer"},
      {"count", "16", "synth: number of images"},
      {"size", "64", "synth: image side length"},
  };
  return keys;
}

class Config {
 public:
  /// Parses text; `origin` names the source in error messages.
  static Config parse(std::string_view text, const std::string& origin = "config") {
    Config c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const std::string where = origin + ":" + std::to_string(number);
      const std::size_t eq = t.find('=');
      require(eq != std::string::npos, Errc::invalid_argument, where + ": expected key=value");
      c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)), where);
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), Errc::io_error, "cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    require(find(key) != nullptr, Errc::invalid_argument, where + ": unknown key '" + key + "'");
    values_[key] = value;
  }

  /// "key=value"
  void apply_override(const std::string& kv) {
    const std::size_t eq = kv.find('=');
    require(eq != std::string::npos, Errc::invalid_argument, "override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), "--set " + kv);
  }

  bool has(const std::string& key) const {
    const auto it = values_.find(key);
    if (it != values_.end()) return !it->second.empty();
    return !schema_entry(key).fallback.empty();
  }

  std::string get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    return std::string(schema_entry(key).fallback);
  }

  std::string require_value(const std::string& key) const {
    require(has(key), Errc::invalid_argument, "missing required setting '" + key + "'");
    return get(key);
  }

  std::int64_t get_int(const std::string& key) const {
    const std::string v = require_value(key);
    try {
      std::size_t used = 0;
      const long long n = std::stoll(v, &used);
      if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    fail(Errc::invalid_argument, "setting '" + key + "' expects an integer, got '" + v + "'");
  }

  std::size_t get_size(const std::string& key) const {
    const std::int64_t n = get_int(key);
    require(n >= 0, Errc::invalid_argument, "setting '" + key + "' must be non-negative");
    return static_cast<std::size_t>(n);
  }

  double get_double(const std::string& key) const {
    const std::string v = require_value(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    fail(Errc::invalid_argument, "setting '" + key + "' expects a number, got '" + v + "'");
  }

  bool get_bool(const std::string& key) const {
    const std::string v = require_value(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(Errc::invalid_argument, "setting '" + key + "' expects true/false, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(get(key));
    while (std::getline(in, item, ','))
      if (!trim(item).empty()) out.push_back(trim(item));
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static const ConfigKey* find(const std::string& key) {
    for (const ConfigKey& k : config_schema())
      if (k.name == key) return &k;
    return nullptr;
  }

  static const ConfigKey& schema_entry(const std::string& key) {
    const ConfigKey* k = find(key);
    require(k != nullptr, Errc::invalid_argument, "unknown key '" + key + "'");
    return *k;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace lsk
