#pragma once

// Depth metrics, the single-image evaluation protocol and mask diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seldist/distill_select.hpp"
#include "seldist/networks.hpp"
#include "seldist/warping.hpp"

namespace seldist {

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  std::size_t n_pixels = 0;
};

/// Pixel-count-weighted sums; merging is associative.
struct MetricSums {
  double abs_rel = 0, sq_rel = 0, sq = 0, log_sq = 0;
  double d1 = 0, d2 = 0, d3 = 0;
  std::size_t n = 0;

  MetricSums& operator+=(const MetricSums& o) {
    abs_rel += o.abs_rel, sq_rel += o.sq_rel, sq += o.sq, log_sq += o.log_sq;
    d1 += o.d1, d2 += o.d2, d3 += o.d3, n += o.n;
    return *this;
  }

  DepthMetrics finish() const {
    if (n == 0) throw std::invalid_argument("depth metrics: no valid ground-truth pixels");
    const double k = 1.0 / static_cast<double>(n);
    return DepthMetrics{abs_rel * k, sq_rel * k, std::sqrt(sq * k), std::sqrt(log_sq * k), d1 * k, d2 * k, d3 * k, n};
  }
};

struct MetricOptions {
  double cap = 80.0;
  double min_depth = 1e-3;
};

inline MetricSums metric_sums(const Tensor& pred, const Tensor& gt, const MetricOptions& o = {}) {
  require_same_shape(pred.shape(), gt.shape(), "depth_metrics");
  MetricSums s;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i];
    if (!(g > 0.0) || g > o.cap) continue;
    const double d = std::clamp(pred[i], o.min_depth, o.cap);
    const double e = d - g;
    s.abs_rel += std::abs(e) / g;
    s.sq_rel += e * e / g;
    s.sq += e * e;
    const double le = std::log(d) - std::log(g);
    s.log_sq += le * le;
    const double r = std::max(d / g, g / d);
    s.d1 += r < 1.25 ? 1.0 : 0.0;
    s.d2 += r < 1.25 * 1.25 ? 1.0 : 0.0;
    s.d3 += r < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
    ++s.n;
  }
  return s;
}

inline DepthMetrics depth_metrics(const Tensor& pred_depth, const Tensor& gt_depth, double cap = 80.0) {
  return metric_sums(pred_depth, gt_depth, MetricOptions{cap}).finish();
}

struct EvalReport {
  DepthMetrics overall;
  std::vector<std::string> ids;
  std::vector<DepthMetrics> per_sample;
};

/// Anything that maps a left image to a full-resolution disparity map.
class DisparityPredictor {
 public:
  virtual ~DisparityPredictor() = default;
  virtual Tensor predict(const Tensor& left) const = 0;
};

class NetworkPredictor : public DisparityPredictor {
 public:
  explicit NetworkPredictor(const MonoNet& net) : net_(net) {}
  Tensor predict(const Tensor& left) const override {
    const auto& c = net_.config();
    if (left.height() != c.height || left.width() != c.width) {
      const double sx = static_cast<double>(left.width()) / c.width;
      Tensor d = mono_forward(net_, ad::resize_bilinear(left, c.height, c.width)).disparity[0].value();
      d = ad::resize_bilinear(d, left.height(), left.width());
      d *= sx;
      return d;
    }
    return mono_forward(net_, left).disparity[0].value();
  }

 private:
  const MonoNet& net_;
};

/// Ground-truth depth from a disparity map: 0 (invalid) where the disparity is 0.
inline Tensor gt_depth_from_disparity(const Tensor& gt, const CameraRig& rig) {
  Tensor depth = disparity_to_depth(gt, rig);
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!(gt[i] > 0.0)) depth[i] = 0.0;
  return depth;
}

/// Evaluates on the left image only. The predictor never sees the sample object.
inline EvalReport evaluate(const DisparityPredictor& predictor, const std::vector<StereoSample>& samples,
                           const MetricOptions& opt = {}) {
  EvalReport rep;
  MetricSums all;
  for (const auto& s : samples) {
    if (!s.gt_disparity) throw std::runtime_error("evaluate: sample " + s.id + " has no ground truth");
    Tensor d = predictor.predict(s.left);
    if (d.height() != s.height() || d.width() != s.width()) {
      const double sx = static_cast<double>(s.width()) / d.width();
      d = ad::resize_bilinear(d, s.height(), s.width());
      d *= sx;
    }
    const MetricSums m = metric_sums(disparity_to_depth(d, s.rig), gt_depth_from_disparity(*s.gt_disparity, s.rig), opt);
    rep.ids.push_back(s.id);
    rep.per_sample.push_back(m.finish());
    all += m;
  }
  rep.overall = all.finish();
  return rep;
}

inline EvalReport evaluate(const MonoNet& net, const std::vector<StereoSample>& samples, const MetricOptions& opt = {}) {
  return evaluate(NetworkPredictor(net), samples, opt);
}

inline const char* report_csv_header() { return "id,abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3,n_pixels"; }

inline std::string format_report_row(const std::string& id, const DepthMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu", id.c_str(), m.abs_rel, m.sq_rel, m.rmse,
                m.rmse_log, m.delta1, m.delta2, m.delta3, m.n_pixels);
  return buf;
}

// --------------------------------------------------------------- masks

/// Pixels whose 3x3 neighbourhood (channel-averaged) has variance above `threshold`.
inline Tensor textured_pixels(const Tensor& image, double threshold = 1e-4) {
  const int C = image.channels(), H = image.height(), W = image.width();
  Tensor out(Shape{1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double var = 0.0;
      for (int c = 0; c < C; ++c) {
        double s = 0.0, ss = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const double v = image(c, detail::reflect(y + dy, H), detail::reflect(x + dx, W));
            s += v;
            ss += v * v;
          }
        var += ss / 9.0 - (s / 9.0) * (s / 9.0);
      }
      out(0, y, x) = var / C > threshold ? 1.0 : 0.0;
    }
  return out;
}

inline Tensor corruption_mask(const CorruptionSpec& spec, int H, int W) {
  Tensor m(Shape{1, H, W});
  for (const auto& r : spec.regions)
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) m(0, y, x) = 1.0;
  return m;
}

struct MaskStats {
  double corrupted_rejected = 0;  // fraction of corrupted pixels with m_rc = 0
  double oracle_agreement = 0;    // agreement with oracle_mask on textured non-occluded pixels
  double fill_rc = 0, fill_sm = 0;
  std::size_t n_corrupted = 0, n_compared = 0, n_pixels = 0;

  MaskStats& operator+=(const MaskStats& o) {
    // Stored as counts while accumulating; see finish_mask_stats.
    corrupted_rejected += o.corrupted_rejected, oracle_agreement += o.oracle_agreement;
    fill_rc += o.fill_rc, fill_sm += o.fill_sm;
    n_corrupted += o.n_corrupted, n_compared += o.n_compared, n_pixels += o.n_pixels;
    return *this;
  }
};

struct MaskDiagnosticOptions {
  bool textured_only_for_corruption = false;
  double texture_threshold = 1e-4;
};

/// Raw counts for one sample; m_rc/m_sm are hard masks, d_mon the monocular estimate.
inline MaskStats mask_counts(const StereoSample& s, const Tensor& m_rc, const Tensor& m_sm, const Tensor& d_mon,
                             const MaskDiagnosticOptions& o = {}) {
  if (!s.corruption) throw std::runtime_error("mask diagnostics: sample " + s.id + " has no corruption metadata");
  const Tensor bad = corruption_mask(*s.corruption, s.height(), s.width());
  const Tensor tex = textured_pixels(s.left, o.texture_threshold);
  const Tensor oracle = oracle_mask(s.left, s.right, s.proxy_disparity, d_mon).hard;
  MaskStats st;
  for (std::size_t i = 0; i < m_rc.size(); ++i) {
    const bool occluded = s.occlusion && (*s.occlusion)[i] != 0.0;
    if (bad[i] != 0.0 && (!o.textured_only_for_corruption || tex[i] != 0.0)) {
      ++st.n_corrupted;
      st.corrupted_rejected += m_rc[i] == 0.0 ? 1.0 : 0.0;
    }
    if (tex[i] != 0.0 && !occluded) {
      ++st.n_compared;
      st.oracle_agreement += m_rc[i] == oracle[i] ? 1.0 : 0.0;
    }
    st.fill_rc += m_rc[i];
    st.fill_sm += m_sm[i];
    ++st.n_pixels;
  }
  return st;
}

inline MaskStats finish_mask_stats(MaskStats c) {
  auto div = [](double a, std::size_t n) { return n ? a / static_cast<double>(n) : 0.0; };
  c.corrupted_rejected = div(c.corrupted_rejected, c.n_corrupted);
  c.oracle_agreement = div(c.oracle_agreement, c.n_compared);
  c.fill_rc = div(c.fill_rc, c.n_pixels);
  c.fill_sm = div(c.fill_sm, c.n_pixels);
  return c;
}

/// Finest-scale learned masks of the network against the corruption metadata.
inline MaskStats mask_diagnostics(const MonoNet& net, const std::vector<StereoSample>& samples,
                                  const MaskDiagnosticOptions& o = {}) {
  MaskStats total;
  for (const auto& s : samples) {
    const MonoNetOutputs out = mono_forward(net, s.left);
    const Tensor& logits = out.mask_logits[0].value();
    Tensor l_rc(Shape{1, s.height(), s.width()}), l_sm(l_rc.shape());
    std::copy(logits.channel(0), logits.channel(0) + l_rc.size(), l_rc.data());
    std::copy(logits.channel(1), logits.channel(1) + l_sm.size(), l_sm.data());
    Tensor m_rc = hard_from_logits(l_rc), m_sm = hard_from_logits(l_sm);
    for (std::size_t i = 0; i < m_rc.size(); ++i)
      if (!(s.proxy_disparity[i] > 0.0)) m_rc[i] = m_sm[i] = 0.0;
    total += mask_counts(s, m_rc, m_sm, out.disparity[0].value(), o);
  }
  return finish_mask_stats(total);
}

}  // namespace seldist
