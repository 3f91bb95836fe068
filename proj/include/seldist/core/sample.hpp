#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seldist/core/types.hpp"

namespace seldist {

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool operator==(const Rect&) const = default;
};

enum class CorruptionMode { zero, blur, offset };

inline std::string to_string(CorruptionMode m) {
  switch (m) {
    case CorruptionMode::zero: return "zero";
    case CorruptionMode::blur: return "blur";
    case CorruptionMode::offset: return "offset";
  }
  return "?";
}

inline CorruptionMode corruption_mode_from(const std::string& s) {
  if (s == "zero") return CorruptionMode::zero;
  if (s == "blur") return CorruptionMode::blur;
  if (s == "offset") return CorruptionMode::offset;
  throw std::invalid_argument("unknown corruption mode '" + s + "'");
}

/// Regions where the proxy was deliberately damaged.
struct CorruptionSpec {
  std::vector<Rect> regions;
  CorruptionMode mode = CorruptionMode::offset;
  double delta = 4.0;  // offset mode only
  std::uint64_t seed = 0;
  bool operator==(const CorruptionSpec&) const = default;
};

/// Rectified stereo pair with its proxy disparity (left reference).
struct StereoSample {
  std::string id;
  Tensor left;   // (3,H,W) in [0,1]
  Tensor right;  // (3,H,W) in [0,1]
  Tensor proxy_disparity;                  // (1,H,W); 0 marks an invalid proxy pixel
  std::optional<Tensor> gt_disparity;      // (1,H,W); 0 marks missing ground truth
  std::optional<Tensor> occlusion;         // (1,H,W) 1 = occluded in the right view; tests only
  std::optional<CorruptionSpec> corruption;  // benchmark metadata; never used by training
  CameraRig rig{};

  int height() const { return left.height(); }
  int width() const { return left.width(); }

  void validate() const {
    if (left.empty() || right.empty()) throw std::invalid_argument("StereoSample " + id + ": missing image");
    require_same_shape(left.shape(), right.shape(), "StereoSample left/right");
    const Shape plane{1, left.height(), left.width()};
    if (!proxy_disparity.empty()) require_same_shape(proxy_disparity.shape(), plane, "StereoSample proxy");
    if (gt_disparity) require_same_shape(gt_disparity->shape(), plane, "StereoSample gt");
  }
};

}  // namespace seldist
