#pragma once

// Selective distillation of proxy disparities.
//
// Two binary masks pick, per pixel, between the frozen proxy disparity and the
// current monocular estimate. The resulting virtual disparity maps are scored
// by the self-supervised losses (mask objective), and the masks then gate which
// proxy terms supervise the monocular estimate (depth objective).
//
// Binarisation uses a straight-through estimator: the forward pass uses the
// hard selection 1[sigmoid(logit) >= 0.5], the backward pass the gradient of the
// soft blend sigmoid(logit)*d_ster + (1 - sigmoid(logit))*d_mon.

#include <stdexcept>
#include <utility>

#include "seldist/autodiff/ops.hpp"
#include "seldist/core/types.hpp"
#include "seldist/photometric.hpp"
#include "seldist/warping.hpp"

namespace seldist {

struct VirtualDisparity {
  ad::Var map;     // hard selection, differentiable through the soft blend
  Tensor soft_map;  // sigmoid(logits) blend
  MaskRole role = MaskRole::rc;
};

inline Tensor hard_from_logits(const Tensor& logits) {
  Tensor hard(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) hard[i] = logits[i] >= 0.0 ? 1.0 : 0.0;
  return hard;
}

/// Straight-through selection between a constant proxy and the monocular estimate.
inline VirtualDisparity form_virtual_disparity(const ad::Var& logits, const Tensor& d_ster, const ad::Var& d_mon,
                                               MaskRole role = MaskRole::rc) {
  require_same_shape(logits.shape(), d_ster.shape(), "form_virtual_disparity");
  require_same_shape(logits.shape(), d_mon.shape(), "form_virtual_disparity");
  const Tensor& l = logits.value();
  const Tensor& mon = d_mon.value();
  Tensor hard_map(l.shape());
  Tensor soft_map(l.shape());
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double s = ad::sigmoid_scalar(l[i]);
    hard_map[i] = l[i] >= 0.0 ? d_ster[i] : mon[i];
    soft_map[i] = s * d_ster[i] + (1.0 - s) * mon[i];
  }
  auto ln = logits.node(), mn = d_mon.node();
  ad::Var map = ad::make_result(std::move(hard_map), {&logits, &d_mon}, [ln, mn, d_ster](ad::Node& self) {
    Tensor* gl = ln->requires_grad ? &ln->ensure_grad() : nullptr;
    Tensor* gm = mn->requires_grad ? &mn->ensure_grad() : nullptr;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = ad::sigmoid_scalar(ln->value[i]);
      if (gl) (*gl)[i] += self.grad[i] * s * (1.0 - s) * (d_ster[i] - mn->value[i]);
      if (gm) (*gm)[i] += self.grad[i] * (1.0 - s);
    }
  });
  return VirtualDisparity{std::move(map), std::move(soft_map), role};
}

inline VirtualDisparity form_virtual_disparity(const SelectionMask& mask, const DisparityMap& d_ster,
                                               const DisparityMap& d_mon) {
  return form_virtual_disparity(ad::constant(mask.logits), d_ster.data(), ad::constant(d_mon.data()), mask.role);
}

/// Inputs shared by the mask and depth objectives for one view pair at one resolution.
struct StereoViews {
  const Tensor& left;
  const Tensor& right;
};

/// L_rc(I^l, I^r(d_rc)) + L_sm(I^l, d_sm). The monocular estimate is detached, so only
/// the mask logits receive gradient.
inline ad::Var mask_loss(const StereoViews& views, const ad::Var& logits_rc, const ad::Var& logits_sm,
                         const Tensor& d_ster, const ad::Var& d_mon, const PhotometricConfig& cfg = {}) {
  const ad::Var mon = ad::detach(d_mon);
  const VirtualDisparity d_rc = form_virtual_disparity(logits_rc, d_ster, mon, MaskRole::rc);
  const VirtualDisparity d_sm = form_virtual_disparity(logits_sm, d_ster, mon, MaskRole::sm);
  const ad::Var left = ad::constant(views.left);
  const WarpResult rc = inverse_warp(ad::constant(views.right), d_rc.map);
  return ad::add(reconstruction_loss(left, rc, cfg), smoothness_loss(views.left, d_sm.map));
}

inline double mask_loss(const ImageTensor& left, const ImageTensor& right, const SelectionMask& m_rc,
                        const SelectionMask& m_sm, const DisparityMap& d_ster, const DisparityMap& d_mon,
                        const PhotometricConfig& cfg = {}) {
  return mask_loss(StereoViews{left.data(), right.data()}, ad::constant(m_rc.logits), ad::constant(m_sm.logits),
                   d_ster.data(), ad::constant(d_mon.data()), cfg)
      .item();
}

struct DepthLossTerms {
  ad::Var total;
  ad::Var rc;         // L_rc(I^l, I^r(d_mon))
  ad::Var rc_proxy;   // m_rc-gated L_rc(I^r(d_ster), I^r(d_mon))
  ad::Var sm;         // L_sm(I^l, d_mon)
  ad::Var sm_proxy;   // m_sm-gated L_sm(I^r(d_ster), d_mon)
  ad::Var l1_proxy;   // (m_rc * m_sm)-gated |d_ster - d_mon|
};

/// Depth objective with hard masks treated as constants. Each gated term is the
/// mean over its own gate (0 when the gate is empty). The proxy-reconstruction
/// term is restricted to pixels where both warps sampled inside the image.
inline DepthLossTerms depth_loss_terms(const StereoViews& views, const Tensor& m_rc, const Tensor& m_sm,
                                       const Tensor& d_ster, const ad::Var& d_mon, const PhotometricConfig& cfg = {}) {
  require_same_shape(m_rc.shape(), d_mon.shape(), "depth_loss");
  require_same_shape(m_sm.shape(), d_mon.shape(), "depth_loss");
  require_same_shape(d_ster.shape(), d_mon.shape(), "depth_loss");
  const ad::Var left = ad::constant(views.left);
  const ad::Var right = ad::constant(views.right);

  DepthLossTerms t;
  const WarpResult wm = inverse_warp(right, d_mon);
  t.rc = reconstruction_loss(left, wm, cfg);
  t.sm = smoothness_loss(views.left, d_mon);

  WarpResult ws;
  {
    ad::NoGradGuard no_grad;
    ws = inverse_warp(right, ad::constant(d_ster));
  }
  Tensor gate_rc(m_rc.shape());
  Tensor gate_both(m_rc.shape());
  for (std::size_t i = 0; i < gate_rc.size(); ++i) {
    gate_rc[i] = (m_rc[i] != 0.0 && ws.validity[i] != 0.0 && wm.validity[i] != 0.0) ? 1.0 : 0.0;
    gate_both[i] = (m_rc[i] != 0.0 && m_sm[i] != 0.0) ? 1.0 : 0.0;
  }
  t.rc_proxy = ad::masked_mean(photometric_integrand(ad::constant(ws.image.value()), wm.image, cfg), gate_rc);
  t.sm_proxy = ad::masked_mean(smoothness_integrand(ws.image.value(), d_mon), m_sm);
  t.l1_proxy = ad::masked_mean(ad::abs(ad::sub(ad::constant(d_ster), d_mon)), gate_both);
  t.total = ad::add(ad::add(ad::add(ad::add(t.rc, t.rc_proxy), t.sm), t.sm_proxy), t.l1_proxy);
  return t;
}

inline ad::Var depth_loss(const StereoViews& views, const Tensor& m_rc, const Tensor& m_sm, const Tensor& d_ster,
                          const ad::Var& d_mon, const PhotometricConfig& cfg = {}) {
  return depth_loss_terms(views, m_rc, m_sm, d_ster, d_mon, cfg).total;
}

inline double depth_loss(const ImageTensor& left, const ImageTensor& right, const SelectionMask& m_rc,
                         const SelectionMask& m_sm, const DisparityMap& d_ster, const DisparityMap& d_mon,
                         const PhotometricConfig& cfg = {}) {
  return depth_loss(StereoViews{left.data(), right.data()}, m_rc.hard, m_sm.hard, d_ster.data(),
                    ad::constant(d_mon.data()), cfg)
      .item();
}

/// Plain self-supervised objective L_rc(I^l, I^r(d)) + L_sm(I^l, d).
inline ad::Var self_supervised_loss(const StereoViews& views, const ad::Var& d, const PhotometricConfig& cfg = {}) {
  const WarpResult w = inverse_warp(ad::constant(views.right), d);
  return ad::add(reconstruction_loss(ad::constant(views.left), w, cfg), smoothness_loss(views.left, d));
}

/// Baseline that distils the proxy everywhere: L_rc + L_sm + mean |d_ster - d_mon| over
/// pixels with a valid (non-zero) proxy.
inline ad::Var direct_distillation_loss(const StereoViews& views, const Tensor& d_ster, const ad::Var& d_mon,
                                        const PhotometricConfig& cfg = {}) {
  Tensor proxy_valid(d_ster.shape());
  for (std::size_t i = 0; i < d_ster.size(); ++i) proxy_valid[i] = d_ster[i] > 0.0 ? 1.0 : 0.0;
  return ad::add(self_supervised_loss(views, d_mon, cfg),
                 ad::masked_mean(ad::abs(ad::sub(ad::constant(d_ster), d_mon)), proxy_valid));
}

namespace detail {
/// Reconstruction integrand at pixel (y,x) of the reference where the recon centre
/// sample is replaced by `centre` (per channel). Patch offsets use mirror padding.
inline double integrand_with_centre(const Tensor& ref, const Tensor& recon, int y, int x, const double* centre,
                                    const PhotometricConfig& cfg) {
  const int C = ref.channels(), H = ref.height(), W = ref.width(), r = cfg.patch / 2;
  const int n = cfg.patch * cfg.patch;
  double z = 0.0, l1 = 0.0;
  std::vector<double> av(static_cast<std::size_t>(n)), bv(static_cast<std::size_t>(n));
  for (int c = 0; c < C; ++c) {
    int j = 0;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx, ++j) {
        const int yy = reflect(y + dy, H), xx = reflect(x + dx, W);
        av[static_cast<std::size_t>(j)] = ref(c, yy, xx);
        bv[static_cast<std::size_t>(j)] = (yy == y && xx == x) ? centre[c] : recon(c, yy, xx);
      }
    }
    double ma = 0.0, mb = 0.0;
    for (int k = 0; k < n; ++k) {
      ma += av[static_cast<std::size_t>(k)];
      mb += bv[static_cast<std::size_t>(k)];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, sa = 0.0, sb = 0.0;
    for (int k = 0; k < n; ++k) {
      const double da = av[static_cast<std::size_t>(k)] - ma, db = bv[static_cast<std::size_t>(k)] - mb;
      cov += da * db;
      sa += da * da;
      sb += db * db;
    }
    z += cov / (std::sqrt(sa) * std::sqrt(sb) + cfg.eps);
    l1 += std::abs(ref(c, y, x) - centre[c]);
  }
  return cfg.alpha * (1.0 - z / C) / 2.0 + (1.0 - cfg.alpha) * l1 / C;
}
}  // namespace detail

/// Greedy per-pixel reference mask: 1 where substituting the proxy disparity at that
/// pixel alone (neighbours keep d_mon) does not increase the reconstruction integrand.
/// Ties select the proxy.
inline SelectionMask oracle_mask(const Tensor& left, const Tensor& right, const Tensor& d_ster, const Tensor& d_mon,
                                 const PhotometricConfig& cfg = {}) {
  require_same_shape(d_ster.shape(), d_mon.shape(), "oracle_mask");
  ad::NoGradGuard no_grad;
  const WarpResult wm = inverse_warp(ad::constant(right), ad::constant(d_mon));
  const WarpResult ws = inverse_warp(ad::constant(right), ad::constant(d_ster));
  const Tensor& recon = wm.image.value();
  const Tensor& alt = ws.image.value();
  const int C = left.channels(), H = left.height(), W = left.width();
  Tensor hard(Shape{1, H, W});
  std::vector<double> centre(static_cast<std::size_t>(C));
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      if (d_ster[p] == d_mon[p]) {
        hard[p] = 1.0;
        continue;
      }
      const bool vs = ws.validity[p] != 0.0, vm = wm.validity[p] != 0.0;
      if (vs != vm) {
        hard[p] = vs ? 1.0 : 0.0;
        continue;
      }
      for (int c = 0; c < C; ++c) centre[static_cast<std::size_t>(c)] = recon(c, y, x);
      const double keep = detail::integrand_with_centre(left, recon, y, x, centre.data(), cfg);
      for (int c = 0; c < C; ++c) centre[static_cast<std::size_t>(c)] = alt(c, y, x);
      const double swap = detail::integrand_with_centre(left, recon, y, x, centre.data(), cfg);
      hard[p] = swap <= keep ? 1.0 : 0.0;
    }
  }
  return SelectionMask::from_hard(hard, MaskRole::rc);
}

inline SelectionMask oracle_mask(const ImageTensor& left, const ImageTensor& right, const DisparityMap& d_ster,
                                 const DisparityMap& d_mon, const PhotometricConfig& cfg = {}) {
  return oracle_mask(left.data(), right.data(), d_ster.data(), d_mon.data(), cfg);
}

}  // namespace seldist
