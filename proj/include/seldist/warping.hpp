#pragma once

// Horizontal inverse warping by a disparity field and disparity/depth conversion.

#include <cmath>
#include <stdexcept>

#include "seldist/autodiff/ops.hpp"
#include "seldist/core/types.hpp"

namespace seldist {

enum class WarpDirection {
  left_ref,   // reconstruct the left view: sample the source at x - d
  right_ref,  // reconstruct the right view: sample the source at x + d
};

struct WarpResult {
  ad::Var image;
  /// (1,H,W); 0 where the sampling coordinate left [0, W-1].
  Tensor validity;
};

/// Bilinear horizontal warp of `source` (C,H,W) by `disparity` (1,H,W).
/// Differentiable w.r.t. both inputs; out-of-range samples are edge clamped,
/// flagged invalid and receive no disparity gradient.
inline WarpResult inverse_warp(const ad::Var& source, const ad::Var& disparity,
                               WarpDirection direction = WarpDirection::left_ref) {
  const Shape ss = source.shape();
  const Shape ds = disparity.shape();
  if (ds.c != 1 || ds.h != ss.h || ds.w != ss.w) {
    throw std::invalid_argument("inverse_warp: shape mismatch " + to_string(ss) + " vs " + to_string(ds));
  }
  if (!disparity.value().all_finite()) throw std::invalid_argument("inverse_warp: non-finite disparity");

  const int C = ss.c, H = ss.h, W = ss.w;
  const double sign = direction == WarpDirection::left_ref ? -1.0 : 1.0;
  Tensor out(ss);
  Tensor valid(Shape{1, H, W}, 1.0);
  // Per-pixel left tap and fraction; fraction < 0 marks a clamped sample.
  std::vector<int> tap(static_cast<std::size_t>(H) * W);
  std::vector<double> frac(tap.size());

  const Tensor& src = source.value();
  const Tensor& d = disparity.value();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      const double xs = x + sign * d[p];
      int x0;
      double f;
      if (xs < 0.0 || xs > W - 1) {
        valid[p] = 0.0;
        x0 = xs < 0.0 ? 0 : W - 1;
        f = -1.0;
      } else {
        x0 = std::min(static_cast<int>(std::floor(xs)), W - 1);
        f = xs - x0;
      }
      tap[p] = x0;
      frac[p] = f;
      const int x1 = std::min(x0 + 1, W - 1);
      for (int c = 0; c < C; ++c) {
        out(c, y, x) = f < 0.0 ? src(c, y, x0) : (1.0 - f) * src(c, y, x0) + f * src(c, y, x1);
      }
    }
  }

  auto sn = source.node(), dn = disparity.node();
  ad::Var image = ad::make_result(std::move(out), {&source, &disparity},
                                  [sn, dn, tap = std::move(tap), frac = std::move(frac), C, H, W, sign](ad::Node& self) {
                                    Tensor* gs = sn->requires_grad ? &sn->ensure_grad() : nullptr;
                                    Tensor* gd = dn->requires_grad ? &dn->ensure_grad() : nullptr;
                                    const Tensor& s = sn->value;
                                    for (int y = 0; y < H; ++y) {
                                      for (int x = 0; x < W; ++x) {
                                        const std::size_t p = static_cast<std::size_t>(y) * W + x;
                                        const int x0 = tap[p];
                                        const int x1 = std::min(x0 + 1, W - 1);
                                        const double f = frac[p];
                                        double dd = 0.0;
                                        for (int c = 0; c < C; ++c) {
                                          const double g = self.grad(c, y, x);
                                          if (f < 0.0) {
                                            if (gs) (*gs)(c, y, x0) += g;
                                          } else {
                                            if (gs) {
                                              (*gs)(c, y, x0) += g * (1.0 - f);
                                              (*gs)(c, y, x1) += g * f;
                                            }
                                            dd += g * (s(c, y, x1) - s(c, y, x0));
                                          }
                                        }
                                        if (gd && f >= 0.0) (*gd)[p] += sign * dd;
                                      }
                                    }
                                  });
  return WarpResult{std::move(image), std::move(valid)};
}

inline WarpResult inverse_warp(const ImageTensor& source, const DisparityMap& disparity,
                               WarpDirection direction = WarpDirection::left_ref) {
  return inverse_warp(ad::constant(source.data()), ad::constant(disparity.data()), direction);
}

struct DepthConversion {
  double min_disparity = 1e-6;
  double max_depth = 100.0;  // sentinel for degenerate disparities
};

/// depth = focal * baseline / d; d <= min_disparity maps to the sentinel depth.
inline Tensor disparity_to_depth(const Tensor& disparity, const CameraRig& rig, const DepthConversion& conv = {}) {
  rig.validate();
  Tensor depth(disparity.shape());
  const double fb = rig.focal_length_px * rig.baseline_m;
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    depth[i] = disparity[i] <= conv.min_disparity ? conv.max_depth : fb / disparity[i];
  }
  return depth;
}

inline Tensor disparity_to_depth(const DisparityMap& d, const CameraRig& rig, const DepthConversion& conv = {}) {
  return disparity_to_depth(d.data(), rig, conv);
}

/// Inverse of disparity_to_depth for positive depths; non-positive depth maps to 0 disparity.
inline Tensor depth_to_disparity(const Tensor& depth, const CameraRig& rig) {
  rig.validate();
  Tensor d(depth.shape());
  const double fb = rig.focal_length_px * rig.baseline_m;
  for (std::size_t i = 0; i < depth.size(); ++i) d[i] = depth[i] > 0.0 ? fb / depth[i] : 0.0;
  return d;
}

}  // namespace seldist
