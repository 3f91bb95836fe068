#pragma once

// Self-supervised loss primitives: ZNCC-based reconstruction loss and
// edge-aware disparity smoothness.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "seldist/autodiff/ops.hpp"
#include "seldist/core/types.hpp"
#include "seldist/warping.hpp"

namespace seldist {

struct PhotometricConfig {
  double alpha = 0.85;
  int patch = 3;
  double eps = 1e-6;

  void validate() const {
    if (patch < 3 || patch % 2 == 0) throw std::invalid_argument("PhotometricConfig: patch must be odd and >= 3");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("PhotometricConfig: alpha must lie in [0,1]");
    if (!(eps > 0.0)) throw std::invalid_argument("PhotometricConfig: eps must be positive");
  }
};

namespace detail {
/// Mirror index without edge repetition: -1 -> 1, n -> n-2.
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}
}  // namespace detail

/// Per-pixel ZNCC over a patch x patch window, computed per channel and averaged
/// over channels. Output (1,H,W) in [-1,1]; zero-variance windows give 0.
inline ad::Var zncc_map(const ad::Var& a, const ad::Var& b, const PhotometricConfig& cfg = {}) {
  cfg.validate();
  require_same_shape(a.shape(), b.shape(), "zncc_map");
  const Shape s = a.shape();
  const int C = s.c, H = s.h, W = s.w, r = cfg.patch / 2, n = cfg.patch * cfg.patch;
  const double eps = cfg.eps;

  // Flattened patch offsets per pixel, shared by all channels.
  std::vector<int> idx(static_cast<std::size_t>(H) * W * n);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      int* p = idx.data() + (static_cast<std::size_t>(y) * W + x) * n;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          *p++ = detail::reflect(y + dy, H) * W + detail::reflect(x + dx, W);
        }
      }
    }
  }

  const std::size_t plane = s.plane();
  // cov, sqrt(Sa), sqrt(Sb) per (channel, pixel)
  std::vector<double> stats(3 * plane * C);
  Tensor out(Shape{1, H, W});
  for (int c = 0; c < C; ++c) {
    const double* av = a.value().channel(c);
    const double* bv = b.value().channel(c);
    for (std::size_t p = 0; p < plane; ++p) {
      const int* k = idx.data() + p * n;
      double ma = 0.0, mb = 0.0;
      for (int j = 0; j < n; ++j) {
        ma += av[k[j]];
        mb += bv[k[j]];
      }
      ma /= n;
      mb /= n;
      double cov = 0.0, sa = 0.0, sb = 0.0;
      for (int j = 0; j < n; ++j) {
        const double da = av[k[j]] - ma, db = bv[k[j]] - mb;
        cov += da * db;
        sa += da * da;
        sb += db * db;
      }
      const double ra = std::sqrt(sa), rb = std::sqrt(sb);
      double* st = stats.data() + 3 * (c * plane + p);
      st[0] = cov;
      st[1] = ra;
      st[2] = rb;
      out[p] += cov / (ra * rb + eps) / C;
    }
  }

  auto an = a.node(), bn = b.node();
  return ad::make_result(std::move(out), {&a, &b},
                         [an, bn, idx = std::move(idx), stats = std::move(stats), C, n, plane, eps](ad::Node& self) {
                           Tensor* ga = an->requires_grad ? &an->ensure_grad() : nullptr;
                           Tensor* gb = bn->requires_grad ? &bn->ensure_grad() : nullptr;
                           std::vector<double> da(static_cast<std::size_t>(n)), db(static_cast<std::size_t>(n));
                           for (int c = 0; c < C; ++c) {
                             const double* av = an->value.channel(c);
                             const double* bv = bn->value.channel(c);
                             double* gac = ga ? ga->channel(c) : nullptr;
                             double* gbc = gb ? gb->channel(c) : nullptr;
                             for (std::size_t p = 0; p < plane; ++p) {
                               const double g = self.grad[p] / C;
                               if (g == 0.0) continue;
                               const int* k = idx.data() + p * n;
                               const double* st = stats.data() + 3 * (c * plane + p);
                               const double cov = st[0], ra = st[1], rb = st[2];
                               const double den = ra * rb + eps;
                               double ma = 0.0, mb = 0.0;
                               for (int j = 0; j < n; ++j) {
                                 ma += av[k[j]];
                                 mb += bv[k[j]];
                               }
                               ma /= n;
                               mb /= n;
                               for (int j = 0; j < n; ++j) {
                                 da[static_cast<std::size_t>(j)] = av[k[j]] - ma;
                                 db[static_cast<std::size_t>(j)] = bv[k[j]] - mb;
                               }
                               const double inv = 1.0 / den;
                               const double q = cov * inv * inv;
                               for (int j = 0; j < n; ++j) {
                                 const double aj = da[static_cast<std::size_t>(j)], bj = db[static_cast<std::size_t>(j)];
                                 if (gac) {
                                   double d = bj * inv;
                                   if (ra > 0.0) d -= q * rb * aj / ra;
                                   gac[k[j]] += g * d;
                                 }
                                 if (gbc) {
                                   double d = aj * inv;
                                   if (rb > 0.0) d -= q * ra * bj / rb;
                                   gbc[k[j]] += g * d;
                                 }
                               }
                             }
                           }
                         });
}

inline Tensor zncc_map(const ImageTensor& a, const ImageTensor& b, const PhotometricConfig& cfg = {}) {
  return zncc_map(ad::constant(a.data()), ad::constant(b.data()), cfg).value();
}

/// Per-pixel reconstruction integrand alpha*(1-ZNCC)/2 + (1-alpha)*mean_c|ref-recon|, shape (1,H,W).
inline ad::Var photometric_integrand(const ad::Var& ref, const ad::Var& recon, const PhotometricConfig& cfg = {}) {
  require_same_shape(ref.shape(), recon.shape(), "photometric_integrand");
  const double a = cfg.alpha;
  ad::Var z = zncc_map(ref, recon, cfg);
  ad::Var structural = ad::add_scalar(ad::scale(z, -0.5 * a), 0.5 * a);
  ad::Var l1 = ad::scale(ad::channel_mean(ad::abs(ad::sub(ref, recon))), 1.0 - a);
  return ad::add(structural, l1);
}

/// Mean of the reconstruction integrand over valid pixels. Throws when none are valid.
inline ad::Var reconstruction_loss(const ad::Var& ref, const ad::Var& recon, const Tensor& valid,
                                   const PhotometricConfig& cfg = {}) {
  bool any = false;
  for (double v : valid.values()) any = any || v != 0.0;
  if (!any) throw std::runtime_error("reconstruction_loss: no valid pixels");
  return ad::masked_mean(photometric_integrand(ref, recon, cfg), valid);
}

inline ad::Var reconstruction_loss(const ad::Var& ref, const WarpResult& recon, const PhotometricConfig& cfg = {}) {
  return reconstruction_loss(ref, recon.image, recon.validity, cfg);
}

inline double reconstruction_loss(const ImageTensor& ref, const WarpResult& recon, const PhotometricConfig& cfg = {}) {
  return reconstruction_loss(ad::constant(ref.data()), recon, cfg).item();
}

/// Edge weights exp(-mean_c|dI|) along x and y, each (1,H,W). Last column / row weights
/// are irrelevant (their disparity differences are zero) and set to 1.
struct EdgeWeights {
  Tensor wx;
  Tensor wy;
};

inline EdgeWeights edge_weights(const Tensor& image) {
  const Shape s = image.shape();
  EdgeWeights e{Tensor(Shape{1, s.h, s.w}, 1.0), Tensor(Shape{1, s.h, s.w}, 1.0)};
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int c = 0; c < s.c; ++c) {
        if (x + 1 < s.w) gx += std::abs(image(c, y, x + 1) - image(c, y, x));
        if (y + 1 < s.h) gy += std::abs(image(c, y + 1, x) - image(c, y, x));
      }
      e.wx(0, y, x) = std::exp(-gx / s.c);
      e.wy(0, y, x) = std::exp(-gy / s.c);
    }
  }
  return e;
}

/// Per-pixel edge-aware smoothness integrand of `d` guided by `image`, shape (1,H,W).
inline ad::Var smoothness_integrand(const Tensor& image, const ad::Var& d) {
  const Shape is = image.shape();
  if (d.shape() != Shape{1, is.h, is.w}) {
    throw std::invalid_argument("smoothness: shape mismatch " + to_string(is) + " vs " + to_string(d.shape()));
  }
  const EdgeWeights e = edge_weights(image);
  return ad::add(ad::mul_const(ad::abs(ad::diff_x(d)), e.wx), ad::mul_const(ad::abs(ad::diff_y(d)), e.wy));
}

inline ad::Var smoothness_loss(const Tensor& image, const ad::Var& d) { return ad::mean(smoothness_integrand(image, d)); }

inline double smoothness_loss(const ImageTensor& ref, const DisparityMap& d) {
  return smoothness_loss(ref.data(), ad::constant(d.data())).item();
}

}  // namespace seldist
