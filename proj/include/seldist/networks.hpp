#pragma once

// Desk-scale MonoNet (encoder, teacher-student convolutions, depth and mask
// decoders) and the frozen proxy teachers.
//
// Encoder: VGG-style pairs of 3x3 convolutions with max pooling between
// levels; level i has base * 2^i channels at (H / 2^i, W / 2^i), i = 0..4.
// T-S module: S_0 = lrelu(conv3(E_0)); for i >= 1
//   S_i = lrelu(conv3(lrelu(conv1(E_i + lrelu(conv3_stride2(S_{i-1}))))))
// Decoders: from level 3 down to 0, nearest-upsample + conv, concatenate
// with (E_i, S_i), conv, and emit one head per scale.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "seldist/autodiff/ops.hpp"
#include "seldist/core/config.hpp"
#include "seldist/core/rng.hpp"
#include "seldist/core/sample.hpp"
#include "seldist/distill_ts.hpp"

namespace seldist {

/// Named parameter tensors in a fixed insertion order.
class ParameterStore {
 public:
  int add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    return static_cast<int>(names_.size()) - 1;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }
  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  /// FNV-1a over the raw parameter bytes.
  std::uint64_t hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& v : values_) {
      const auto* p = reinterpret_cast<const unsigned char*>(v.data());
      for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
      }
    }
    return h;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, int> index_;
};

/// Leaf Vars for one forward pass. Trainable bindings accumulate gradients that
/// can be collected after backward().
class ParameterBinding {
 public:
  ParameterBinding(const ParameterStore& store, bool trainable) {
    vars_.reserve(store.size());
    for (const auto& v : store.values()) vars_.push_back(trainable ? ad::parameter(v) : ad::constant(v));
  }
  const ad::Var& operator[](int i) const { return vars_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return vars_.size(); }

  std::vector<Tensor> gradients() const {
    std::vector<Tensor> g;
    g.reserve(vars_.size());
    for (const auto& v : vars_) g.push_back(v.grad());
    return g;
  }

 private:
  std::vector<ad::Var> vars_;
};

struct ConvLayer {
  int weight = -1;
  int bias = -1;
  int stride = 1;

  ad::Var operator()(const ParameterBinding& p, const ad::Var& x) const {
    return ad::conv2d(x, p[weight], p[bias], stride);
  }
};

namespace detail {
inline ConvLayer make_conv(ParameterStore& store, std::uint64_t seed, const std::string& name, int in, int out, int k,
                           int stride = 1, double bias_init = 0.0, double gain = 2.0) {
  auto rng = make_stream(seed, "init", hash_string(name));
  Tensor w(Shape{out, in, k * k});
  const double std = std::sqrt(gain / (static_cast<double>(in) * k * k));
  for (auto& v : w.values()) v = std * normal01(rng);
  ConvLayer layer;
  layer.weight = store.add(name + ".weight", std::move(w));
  layer.bias = store.add(name + ".bias", Tensor(Shape{out, 1, 1}, bias_init));
  layer.stride = stride;
  return layer;
}
}  // namespace detail

struct MonoNetConfig {
  int height = 64;
  int width = 128;
  int base_channels = 8;
  double disparity_max_fraction = 0.3;
  double mask_bias_init = 1.0;
  // Head bias logit(0.1): initial disparities start near a tenth of d_max instead of d_max / 2.
  double disparity_bias_init = -2.1972245773362196;
  std::uint64_t seed = 0;

  static MonoNetConfig from(const TrainConfig& c) {
    return MonoNetConfig{c.image_height,         c.image_width,    c.base_channels, c.disparity_max_fraction,
                         c.mask_bias_init,       -2.1972245773362196, c.seed};
  }
};

inline constexpr int kEncoderLevels = 5;
inline constexpr int kDecoderScales = 4;

struct MonoNetOutputs {
  /// Disparity per decoder scale s = 0..3 at (H/2^s, W/2^s), in pixels of that scale.
  std::array<ad::Var, kDecoderScales> disparity;
  /// Two logit channels per scale: channel 0 = rc mask, channel 1 = sm mask.
  std::array<ad::Var, kDecoderScales> mask_logits;
  /// Encoder features E_0..E_4.
  VarPyramid encoder;
  /// Student features S_1..S_4 (the distilled scales).
  VarPyramid student;
};

class MonoNet {
 public:
  explicit MonoNet(const MonoNetConfig& cfg) : cfg_(cfg) {
    if (cfg.height % 16 != 0 || cfg.width % 16 != 0) {
      throw std::invalid_argument("MonoNet: input extent must be divisible by 16");
    }
    const int B = cfg.base_channels;
    const auto s = cfg.seed;
    for (int i = 0; i < kEncoderLevels; ++i) {
      const int in = i == 0 ? 3 : B << (i - 1);
      const int out = B << i;
      const std::string n = "encoder.l" + std::to_string(i);
      enc_[i][0] = detail::make_conv(store_, s, n + ".conv0", in, out, 3);
      enc_[i][1] = detail::make_conv(store_, s, n + ".conv1", out, out, 3);
    }
    ts_first_ = detail::make_conv(store_, s, "ts.l0.conv", B, B, 3, 1, 0.0, 1.0);
    for (int i = 1; i < kEncoderLevels; ++i) {
      const int c = B << i;
      const std::string n = "ts.l" + std::to_string(i);
      ts_[i].down = detail::make_conv(store_, s, n + ".down", c / 2, c, 3, 2, 0.0, 1.0);
      ts_[i].mix = detail::make_conv(store_, s, n + ".mix", c, c, 1, 1, 0.0, 1.0);
      ts_[i].refine = detail::make_conv(store_, s, n + ".refine", c, c, 3, 1, 0.0, 1.0);
    }
    build_decoder(depth_, "depth", 1, cfg.disparity_bias_init);
    build_decoder(mask_, "mask", 2, cfg.mask_bias_init);
  }

  const MonoNetConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  int decoder_channels(int level) const { return std::max(2, (cfg_.base_channels << level) / 2); }

  /// Expected student shapes S_1..S_4.
  std::vector<Shape> student_shapes() const {
    std::vector<Shape> s;
    for (int i = 1; i < kEncoderLevels; ++i) {
      s.push_back(Shape{cfg_.base_channels << i, cfg_.height >> i, cfg_.width >> i});
    }
    return s;
  }

  MonoNetOutputs forward(const ParameterBinding& p, const Tensor& left) const {
    if (left.channels() != 3 || left.height() != cfg_.height || left.width() != cfg_.width) {
      throw std::invalid_argument("MonoNet: expected input (3," + std::to_string(cfg_.height) + "," +
                                  std::to_string(cfg_.width) + "), got " + to_string(left.shape()));
    }
    MonoNetOutputs out;
    ad::Var x = ad::constant(left);
    for (int i = 0; i < kEncoderLevels; ++i) {
      if (i > 0) x = ad::maxpool2(x);
      x = ad::relu(enc_[i][0](p, x));
      x = ad::relu(enc_[i][1](p, x));
      out.encoder.push_back(x);
    }

    VarPyramid student_all;
    ad::Var s = ad::leaky_relu(ts_first_(p, out.encoder[0]));
    student_all.push_back(s);
    for (int i = 1; i < kEncoderLevels; ++i) {
      ad::Var down = ad::leaky_relu(ts_[i].down(p, s));
      ad::Var mixed = ad::leaky_relu(ts_[i].mix(p, ad::add(out.encoder[static_cast<std::size_t>(i)], down)));
      s = ad::leaky_relu(ts_[i].refine(p, mixed));
      student_all.push_back(s);
      out.student.push_back(s);
    }

    auto run = [&](const Decoder& dec, bool is_depth) {
      std::array<ad::Var, kDecoderScales> heads;
      ad::Var prev = ad::concat_channels({out.encoder[4], student_all[4]});
      for (int level = kDecoderScales - 1; level >= 0; --level) {
        const auto& st = dec.stages[static_cast<std::size_t>(level)];
        ad::Var up = ad::relu(st.up(p, ad::upsample_nearest2(prev)));
        ad::Var merged = ad::concat_channels(
            {up, out.encoder[static_cast<std::size_t>(level)], student_all[static_cast<std::size_t>(level)]});
        ad::Var feat = ad::relu(st.fuse(p, merged));
        ad::Var head = st.head(p, feat);
        if (is_depth) {
          const double dmax = cfg_.disparity_max_fraction * (cfg_.width >> level);
          head = ad::scale(ad::sigmoid(head), dmax);
        }
        heads[static_cast<std::size_t>(level)] = head;
        prev = feat;
      }
      return heads;
    };
    out.disparity = run(depth_, true);
    out.mask_logits = run(mask_, false);
    return out;
  }

  /// Parameter-name prefixes of the two decoders, for gradient-routing checks.
  static constexpr const char* depth_prefix() { return "depth."; }
  static constexpr const char* mask_prefix() { return "mask."; }

 private:
  struct TsStage {
    ConvLayer down, mix, refine;
  };
  struct DecoderStage {
    ConvLayer up, fuse, head;
  };
  struct Decoder {
    std::array<DecoderStage, kDecoderScales> stages;
  };

  void build_decoder(Decoder& dec, const std::string& prefix, int out_channels, double head_bias) {
    const int B = cfg_.base_channels;
    for (int level = kDecoderScales - 1; level >= 0; --level) {
      const std::string n = prefix + ".l" + std::to_string(level);
      const int in_up = level == kDecoderScales - 1 ? 2 * (B << (level + 1)) : decoder_channels(level + 1);
      const int dc = decoder_channels(level);
      auto& st = dec.stages[static_cast<std::size_t>(level)];
      st.up = detail::make_conv(store_, cfg_.seed, n + ".up", in_up, dc, 3);
      st.fuse = detail::make_conv(store_, cfg_.seed, n + ".fuse", dc + 2 * (B << level), dc, 3);
      st.head = detail::make_conv(store_, cfg_.seed, n + ".head", dc, out_channels, 3, 1, head_bias, 0.1);
    }
  }

  MonoNetConfig cfg_;
  ParameterStore store_;
  std::array<std::array<ConvLayer, 2>, kEncoderLevels> enc_{};
  ConvLayer ts_first_{};
  std::array<TsStage, kEncoderLevels> ts_{};
  Decoder depth_{}, mask_{};
};

/// Convenience: single forward pass with frozen (non-trainable) parameters.
inline MonoNetOutputs mono_forward(const MonoNet& net, const Tensor& left) {
  ParameterBinding p(net.parameters(), false);
  ad::NoGradGuard no_grad;
  return net.forward(p, left);
}

// -------------------------------------------------------------- proxy teachers

/// Small frozen convolutional encoder over the concatenated stereo pair. Emits
/// four levels at strides 4..32 with 1.5x the student channel counts, so the
/// alignment path (projection + resize) is always exercised.
class TeacherEncoder {
 public:
  TeacherEncoder(int base_channels, std::uint64_t seed) {
    const int tb = std::max(2, base_channels * 3 / 2);
    stem_ = detail::make_conv(store_, seed, "teacher.stem", 6, tb, 3, 2, 0.0, 1.0);
    int in = tb;
    for (int i = 1; i < kEncoderLevels; ++i) {
      const int out = tb << i;
      levels_[static_cast<std::size_t>(i - 1)] =
          detail::make_conv(store_, seed, "teacher.l" + std::to_string(i), in, out, 3, 2, 0.0, 1.0);
      in = out;
    }
  }

  FeaturePyramid forward(const Tensor& left, const Tensor& right) const {
    require_same_shape(left.shape(), right.shape(), "TeacherEncoder");
    ParameterBinding p(store_, false);
    ad::NoGradGuard no_grad;
    ad::Var x = ad::leaky_relu(stem_(p, ad::concat_channels({ad::constant(left), ad::constant(right)})));
    FeaturePyramid out;
    out.origin = PyramidOrigin::teacher;
    for (const auto& layer : levels_) {
      x = ad::leaky_relu(layer(p, x));
      out.levels.push_back(x.value());
    }
    return out;
  }

  const ParameterStore& parameters() const { return store_; }

 private:
  ParameterStore store_;
  ConvLayer stem_{};
  std::array<ConvLayer, kEncoderLevels - 1> levels_{};
};

/// Frozen provider of proxy disparities and teacher features.
class ProxyTeacher {
 public:
  virtual ~ProxyTeacher() = default;
  virtual Tensor proxy_disparity(const StereoSample& sample) const = 0;
  /// Teacher pyramid aligned level-for-level to `student_shapes`.
  virtual FeaturePyramid teacher_features(const StereoSample& sample, const std::vector<Shape>& student_shapes) const = 0;
  /// Hash of all teacher state; constant over the teacher's lifetime.
  virtual std::uint64_t parameter_hash() const = 0;
};

/// Teacher features from a seeded frozen encoder; proxy taken from the sample itself.
class SyntheticTeacher : public ProxyTeacher {
 public:
  explicit SyntheticTeacher(int base_channels, std::uint64_t seed = 1234) : encoder_(base_channels, seed), seed_(seed) {}

  Tensor proxy_disparity(const StereoSample& sample) const override {
    if (sample.proxy_disparity.empty()) throw std::runtime_error("sample " + sample.id + " carries no proxy disparity");
    return sample.proxy_disparity;
  }

  FeaturePyramid teacher_features(const StereoSample& sample, const std::vector<Shape>& student_shapes) const override {
    if (sample.right.empty()) throw std::invalid_argument("teacher_features: sample " + sample.id + " has no right image");
    return resize_teacher(encoder_.forward(sample.left, sample.right), student_shapes, seed_);
  }

  std::uint64_t parameter_hash() const override { return encoder_.parameters().hash(); }

 private:
  TeacherEncoder encoder_;
  std::uint64_t seed_;
};

inline FeaturePyramid synthetic_teacher_features(const SyntheticTeacher& teacher, const StereoSample& sample,
                                                 const std::vector<Shape>& student_shapes) {
  return teacher.teacher_features(sample, student_shapes);
}

}  // namespace seldist
