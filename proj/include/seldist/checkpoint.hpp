#pragma once

// Checkpoint archive: an 8-byte magic, a length-prefixed JSON header (config
// snapshot, counters, parameter table), then the raw little-endian doubles of
// the parameters followed by the Adam moments.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "seldist/core/config.hpp"
#include "seldist/networks.hpp"
#include "seldist/optim.hpp"

namespace seldist {

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'L', 'D', 'C', 'K', 'P', '1'};

struct Checkpoint {
  TrainConfig config;
  int epoch = 0;           // completed epochs
  int step_in_epoch = 0;   // batches already consumed within `epoch`
  std::int64_t global_step = 0;
  std::uint64_t teacher_hash = 0;
  std::vector<std::string> names;
  std::vector<Tensor> params;
  AdamState adam;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  nlohmann::json h;
  h["config"] = serialize_config(c.config);
  h["epoch"] = c.epoch;
  h["step_in_epoch"] = c.step_in_epoch;
  h["global_step"] = c.global_step;
  h["teacher_hash"] = c.teacher_hash;
  h["adam_t"] = c.adam.t;
  h["has_adam"] = !c.adam.m.empty();
  h["params"] = nlohmann::json::array();
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const Shape s = c.params[i].shape();
    h["params"].push_back({{"name", c.names[i]}, {"shape", {s.c, s.h, s.w}}});
  }
  const std::string header = h.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
    f.write(kCheckpointMagic, 8);
    const std::uint64_t n = header.size();
    f.write(reinterpret_cast<const char*>(&n), sizeof n);
    f.write(header.data(), static_cast<std::streamsize>(n));
    auto blob = [&](const std::vector<Tensor>& ts) {
      for (const auto& t : ts) f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    };
    blob(c.params);
    if (!c.adam.m.empty()) {
      blob(c.adam.m);
      blob(c.adam.v);
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!f || n > (1u << 26)) throw std::runtime_error("corrupt checkpoint header: " + path.string());
  std::string header(n, '\0');
  f.read(header.data(), static_cast<std::streamsize>(n));
  const auto h = nlohmann::json::parse(header, nullptr, false);
  if (!f || h.is_discarded()) throw std::runtime_error("corrupt checkpoint header: " + path.string());

  Checkpoint c;
  c.config = parse_config(h.at("config").get<std::string>());
  c.epoch = h.at("epoch");
  c.step_in_epoch = h.at("step_in_epoch");
  c.global_step = h.at("global_step");
  c.teacher_hash = h.at("teacher_hash");
  c.adam.t = h.at("adam_t");
  std::vector<Shape> shapes;
  for (const auto& p : h.at("params")) {
    c.names.push_back(p.at("name"));
    shapes.push_back(Shape{p.at("shape").at(0), p.at("shape").at(1), p.at("shape").at(2)});
  }
  auto blob = [&](std::vector<Tensor>& ts) {
    for (const auto& s : shapes) {
      Tensor t(s);
      f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!f) throw std::runtime_error("truncated checkpoint: " + path.string());
      ts.push_back(std::move(t));
    }
  };
  blob(c.params);
  if (h.at("has_adam").get<bool>()) {
    blob(c.adam.m);
    blob(c.adam.v);
  }
  return c;
}

/// Copies checkpoint parameters into the network; names and shapes must match.
inline void restore_parameters(ParameterStore& store, const Checkpoint& c) {
  if (c.names.size() != store.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(c.names.size()) + " parameters, network has " +
                             std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (c.names[i] != store.name(i)) throw std::runtime_error("checkpoint parameter mismatch at " + c.names[i]);
    require_same_shape(c.params[i].shape(), store.value(i).shape(), c.names[i].c_str());
    store.value(i) = c.params[i];
  }
}

/// Network built from the checkpoint's own config with its parameters loaded.
inline MonoNet network_from_checkpoint(const Checkpoint& c) {
  MonoNet net(MonoNetConfig::from(c.config));
  restore_parameters(net.parameters(), c);
  return net;
}

}  // namespace seldist
