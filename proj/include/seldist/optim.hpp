#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "seldist/core/tensor.hpp"

namespace seldist {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline double global_norm(const std::vector<Tensor>& grads) {
  double ss = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) ss += v * v;
  return std::sqrt(ss);
}

/// Rescales grads in place so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  const double n = global_norm(grads);
  if (max_norm > 0.0 && n > max_norm) {
    const double s = max_norm / n;
    for (auto& g : grads) g *= s;
  }
  return n;
}

inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& st, double lr,
                      const AdamParams& p = {}) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient count mismatch");
  if (st.m.empty()) {
    for (const auto& x : params) {
      st.m.emplace_back(x.shape());
      st.v.emplace_back(x.shape());
    }
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].shape(), grads[i].shape(), "adam_step");
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = p.beta1 * m[j] + (1.0 - p.beta1) * g;
      v[j] = p.beta2 * v[j] + (1.0 - p.beta2) * g * g;
      params[i][j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + p.eps);
    }
  }
}

}  // namespace seldist
