#pragma once

// Flat key = value training configuration. Every key is optional; omitted
// keys take the published defaults so ablations are a matter of config only.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seldist/core/types.hpp"

namespace seldist {

enum class DistillMode { direct, selective };
enum class ProxyMode { file, synthetic };

inline std::string to_string(DistillMode m) { return m == DistillMode::direct ? "direct" : "selective"; }
inline std::string to_string(ProxyMode m) { return m == ProxyMode::file ? "file" : "synthetic"; }

struct TrainConfig {
  LossWeights weights{};
  double lr = 1e-4;
  int epochs = 50;
  std::vector<int> lr_halve_epochs{20, 35, 45};
  int batch_size = 8;
  int image_height = 256;
  int image_width = 512;
  std::uint64_t seed = 0;
  std::string dataset_root = "data";
  ProxyMode proxy_mode = ProxyMode::file;
  DistillMode distill_mode = DistillMode::selective;
  int scales = 4;
  int base_channels = 32;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;
  int mask_warmup_epochs = 0;
  double mask_bias_init = 1.0;
  double disparity_max_fraction = 0.3;
  bool augment = true;
  int threads = 0;  // 0: hardware concurrency

  bool ts_enabled() const { return weights.lambda_ts > 0.0; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "not a number: '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "not an integer: '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "not a boolean: '" + v + "'");
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

/// Parses config text. Unknown keys and out-of-range values raise ConfigError naming the key.
inline TrainConfig parse_config(const std::string& text) {
  using namespace detail;
  TrainConfig cfg;
  bool batch_given = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "line " + std::to_string(lineno) + " is not of the form key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    auto nonneg = [&](double v) {
      if (!(v >= 0.0)) throw ConfigError(key, "must be >= 0, got " + val);
      return v;
    };
    auto positive_int = [&](long long v) {
      if (v < 1) throw ConfigError(key, "must be >= 1, got " + val);
      return static_cast<int>(v);
    };

    if (key == "alpha") {
      const double a = parse_double(key, val);
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(key, "must lie in [0,1], got " + val);
      cfg.weights.alpha = a;
    } else if (key == "lambda_mask") {
      cfg.weights.lambda_mask = nonneg(parse_double(key, val));
    } else if (key == "lambda_ts") {
      cfg.weights.lambda_ts = nonneg(parse_double(key, val));
    } else if (key == "lambda_cd") {
      cfg.weights.lambda_cd = nonneg(parse_double(key, val));
    } else if (key == "lambda_sd") {
      cfg.weights.lambda_sd = nonneg(parse_double(key, val));
    } else if (key == "lr") {
      const double lr = parse_double(key, val);
      if (!(lr > 0.0)) throw ConfigError(key, "must be > 0, got " + val);
      cfg.lr = lr;
    } else if (key == "epochs") {
      cfg.epochs = positive_int(parse_int(key, val));
    } else if (key == "lr_halve_epochs") {
      cfg.lr_halve_epochs.clear();
      std::stringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const long long e = parse_int(key, item);
        if (e < 0) throw ConfigError(key, "epochs must be >= 0, got " + item);
        cfg.lr_halve_epochs.push_back(static_cast<int>(e));
      }
    } else if (key == "batch_size") {
      cfg.batch_size = positive_int(parse_int(key, val));
      batch_given = true;
    } else if (key == "image_height" || key == "image_width") {
      const int v = positive_int(parse_int(key, val));
      if (v % 16 != 0) throw ConfigError(key, "must be divisible by 16, got " + val);
      (key == "image_height" ? cfg.image_height : cfg.image_width) = v;
    } else if (key == "seed") {
      const long long s = parse_int(key, val);
      if (s < 0) throw ConfigError(key, "must be >= 0, got " + val);
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "dataset_root") {
      cfg.dataset_root = val;
    } else if (key == "proxy_mode") {
      if (val == "file") cfg.proxy_mode = ProxyMode::file;
      else if (val == "synthetic") cfg.proxy_mode = ProxyMode::synthetic;
      else throw ConfigError(key, "expected file|synthetic, got " + val);
    } else if (key == "distill_mode") {
      if (val == "direct") cfg.distill_mode = DistillMode::direct;
      else if (val == "selective") cfg.distill_mode = DistillMode::selective;
      else throw ConfigError(key, "expected direct|selective, got " + val);
    } else if (key == "scales") {
      const int s = positive_int(parse_int(key, val));
      if (s != 4) throw ConfigError(key, "only 4 decoder scales are supported, got " + val);
      cfg.scales = s;
    } else if (key == "base_channels") {
      cfg.base_channels = positive_int(parse_int(key, val));
    } else if (key == "adam_beta1" || key == "adam_beta2") {
      const double b = parse_double(key, val);
      if (!(b >= 0.0 && b < 1.0)) throw ConfigError(key, "must lie in [0,1), got " + val);
      (key == "adam_beta1" ? cfg.adam_beta1 : cfg.adam_beta2) = b;
    } else if (key == "adam_eps") {
      const double e = parse_double(key, val);
      if (!(e > 0.0)) throw ConfigError(key, "must be > 0, got " + val);
      cfg.adam_eps = e;
    } else if (key == "grad_clip") {
      cfg.grad_clip = nonneg(parse_double(key, val));
    } else if (key == "mask_warmup_epochs") {
      const long long m = parse_int(key, val);
      if (m < 0) throw ConfigError(key, "must be >= 0, got " + val);
      cfg.mask_warmup_epochs = static_cast<int>(m);
    } else if (key == "mask_bias_init") {
      cfg.mask_bias_init = parse_double(key, val);
    } else if (key == "disparity_max_fraction") {
      const double f = parse_double(key, val);
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError(key, "must lie in (0,1], got " + val);
      cfg.disparity_max_fraction = f;
    } else if (key == "augment") {
      cfg.augment = parse_bool(key, val);
    } else if (key == "threads") {
      const long long t = parse_int(key, val);
      if (t < 0) throw ConfigError(key, "must be >= 0, got " + val);
      cfg.threads = static_cast<int>(t);
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  if (!batch_given) cfg.batch_size = cfg.ts_enabled() ? 8 : 12;
  return cfg;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Writes every key; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const TrainConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "alpha = " << format_double(c.weights.alpha) << "\n";
  o << "lambda_mask = " << format_double(c.weights.lambda_mask) << "\n";
  o << "lambda_ts = " << format_double(c.weights.lambda_ts) << "\n";
  o << "lambda_cd = " << format_double(c.weights.lambda_cd) << "\n";
  o << "lambda_sd = " << format_double(c.weights.lambda_sd) << "\n";
  o << "lr = " << format_double(c.lr) << "\n";
  o << "epochs = " << c.epochs << "\n";
  o << "lr_halve_epochs = ";
  for (std::size_t i = 0; i < c.lr_halve_epochs.size(); ++i) o << (i ? "," : "") << c.lr_halve_epochs[i];
  o << "\n";
  o << "batch_size = " << c.batch_size << "\n";
  o << "image_height = " << c.image_height << "\n";
  o << "image_width = " << c.image_width << "\n";
  o << "seed = " << c.seed << "\n";
  o << "dataset_root = " << c.dataset_root << "\n";
  o << "proxy_mode = " << to_string(c.proxy_mode) << "\n";
  o << "distill_mode = " << to_string(c.distill_mode) << "\n";
  o << "scales = " << c.scales << "\n";
  o << "base_channels = " << c.base_channels << "\n";
  o << "adam_beta1 = " << format_double(c.adam_beta1) << "\n";
  o << "adam_beta2 = " << format_double(c.adam_beta2) << "\n";
  o << "adam_eps = " << format_double(c.adam_eps) << "\n";
  o << "grad_clip = " << format_double(c.grad_clip) << "\n";
  o << "mask_warmup_epochs = " << c.mask_warmup_epochs << "\n";
  o << "mask_bias_init = " << format_double(c.mask_bias_init) << "\n";
  o << "disparity_max_fraction = " << format_double(c.disparity_max_fraction) << "\n";
  o << "augment = " << (c.augment ? "true" : "false") << "\n";
  o << "threads = " << c.threads << "\n";
  return o.str();
}

}  // namespace seldist
