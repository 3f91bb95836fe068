#pragma once

// Frozen proxy providers beyond the sample-carried one in networks.hpp.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "seldist/io/png.hpp"
#include "seldist/networks.hpp"

namespace seldist {

/// Reads {dir}/{id}.png (16-bit, value / 256 = pixels). Teacher features come
/// from the seeded synthetic encoder.
class FileProxy : public ProxyTeacher {
 public:
  FileProxy(std::filesystem::path dir, int base_channels, std::uint64_t teacher_seed = 1234)
      : dir_(std::move(dir)), features_(base_channels, teacher_seed) {}

  Tensor proxy_disparity(const StereoSample& sample) const override {
    const auto path = dir_ / (sample.id + ".png");
    if (!std::filesystem::exists(path)) throw std::runtime_error("missing proxy disparity: " + path.string());
    return io::read_disparity_png(path.string());
  }

  FeaturePyramid teacher_features(const StereoSample& sample, const std::vector<Shape>& shapes) const override {
    return features_.teacher_features(sample, shapes);
  }

  std::uint64_t parameter_hash() const override { return features_.parameter_hash(); }

 private:
  std::filesystem::path dir_;
  SyntheticTeacher features_;
};

inline std::unique_ptr<ProxyTeacher> file_proxy(const std::filesystem::path& dir, int base_channels) {
  return std::make_unique<FileProxy>(dir, base_channels);
}

/// Winner-take-all SAD block matching on luminance with parabolic sub-pixel
/// refinement and a left-right consistency check; failures are 0.
struct BlockMatchingParams {
  int radius = 2;
  double max_fraction = 0.3;
  double lr_tolerance = 1.0;
};

inline Tensor block_matching(const Tensor& left, const Tensor& right, const BlockMatchingParams& p = {}) {
  require_same_shape(left.shape(), right.shape(), "block_matching");
  const int H = left.height(), W = left.width();
  const int D = std::max(1, static_cast<int>(p.max_fraction * W));
  auto gray = [&](const Tensor& t) {
    Tensor g(Shape{1, H, W});
    for (int c = 0; c < t.channels(); ++c)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += t.channel(c)[i] / t.channels();
    return g;
  };
  const Tensor gl = gray(left), gr = gray(right);
  // cost(ref, other, sign): ref pixel x matches other pixel x + sign*d
  auto match = [&](const Tensor& ref, const Tensor& other, int sign) {
    Tensor disp(Shape{1, H, W});
    std::vector<double> cost(static_cast<std::size_t>(D + 1));
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        int best = -1;
        for (int d = 0; d <= D; ++d) {
          const int xo = x + sign * d;
          if (xo < 0 || xo >= W) {
            cost[static_cast<std::size_t>(d)] = std::numeric_limits<double>::infinity();
            continue;
          }
          double c = 0.0;
          for (int dy = -p.radius; dy <= p.radius; ++dy)
            for (int dx = -p.radius; dx <= p.radius; ++dx) {
              const int yy = std::clamp(y + dy, 0, H - 1);
              c += std::abs(ref(0, yy, std::clamp(x + dx, 0, W - 1)) - other(0, yy, std::clamp(xo + dx, 0, W - 1)));
            }
          cost[static_cast<std::size_t>(d)] = c;
          if (best < 0 || c < cost[static_cast<std::size_t>(best)]) best = d;
        }
        double sub = best < 0 ? 0.0 : best;
        if (best > 0 && best < D) {
          const double a = cost[static_cast<std::size_t>(best - 1)], b = cost[static_cast<std::size_t>(best)],
                       c = cost[static_cast<std::size_t>(best + 1)];
          const double den = a - 2 * b + c;
          if (std::isfinite(den) && den > 0) sub += 0.5 * (a - c) / den;
        }
        disp(0, y, x) = sub;
      }
    return disp;
  };
  const Tensor dl = match(gl, gr, -1);
  const Tensor dr = match(gr, gl, +1);
  Tensor out(Shape{1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double d = dl(0, y, x);
      const int xr = static_cast<int>(std::lround(x - d));
      if (d <= 0.0 || xr < 0 || xr >= W) continue;
      if (std::abs(dr(0, y, xr) - d) <= p.lr_tolerance) out(0, y, x) = std::min(d, static_cast<double>(W));
    }
  return out;
}

class BlockMatchingProxy : public ProxyTeacher {
 public:
  explicit BlockMatchingProxy(int base_channels, BlockMatchingParams params = {}, std::uint64_t teacher_seed = 1234)
      : params_(params), features_(base_channels, teacher_seed) {}

  Tensor proxy_disparity(const StereoSample& sample) const override {
    return block_matching(sample.left, sample.right, params_);
  }
  FeaturePyramid teacher_features(const StereoSample& sample, const std::vector<Shape>& shapes) const override {
    return features_.teacher_features(sample, shapes);
  }
  std::uint64_t parameter_hash() const override { return features_.parameter_hash(); }

 private:
  BlockMatchingParams params_;
  SyntheticTeacher features_;
};

}  // namespace seldist
