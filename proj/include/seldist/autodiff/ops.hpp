#pragma once

// Differentiable tensor primitives used by the networks and the losses.

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "seldist/autodiff/var.hpp"

namespace seldist::ad {

namespace detail {
using NodePtr = std::shared_ptr<Node>;

inline Tensor* grad_of(const NodePtr& n) { return n->requires_grad ? &n->ensure_grad() : nullptr; }
}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.value();
  out += b.value();
  auto an = a.node(), bn = b.node();
  return make_result(std::move(out), {&a, &b}, [an, bn](Node& self) {
    if (auto* g = detail::grad_of(an)) *g += self.grad;
    if (auto* g = detail::grad_of(bn)) *g += self.grad;
  });
}

inline Var sub(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_result(std::move(out), {&a, &b}, [an, bn](Node& self) {
    if (auto* g = detail::grad_of(an)) *g += self.grad;
    if (auto* g = detail::grad_of(bn)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_result(std::move(out), {&a, &b}, [an, bn](Node& self) {
    if (auto* g = detail::grad_of(an)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bn->value[i];
    }
    if (auto* g = detail::grad_of(bn)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * an->value[i];
    }
  });
}

/// Multiplies by a constant tensor of the same shape (no gradient to the constant).
inline Var mul_const(const Var& a, const Tensor& k) {
  require_same_shape(a.shape(), k.shape(), "mul_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= k[i];
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, k](Node& self) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * k[i];
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, s](Node& self) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

inline Var add_scalar(const Var& a, double k) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += k;
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an](Node& self) { an->ensure_grad() += self.grad; });
}

/// Forward difference along x: out(x) = a(x+1) - a(x), zero on the last column.
inline Var diff_x(const Var& a) {
  const Shape s = a.shape();
  Tensor out(s);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x + 1 < s.w; ++x) out(c, y, x) = a.value()(c, y, x + 1) - a.value()(c, y, x);
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, s](Node& self) {
    auto& g = an->ensure_grad();
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x + 1 < s.w; ++x) {
          g(c, y, x + 1) += self.grad(c, y, x);
          g(c, y, x) -= self.grad(c, y, x);
        }
  });
}

/// Forward difference along y, zero on the last row.
inline Var diff_y(const Var& a) {
  const Shape s = a.shape();
  Tensor out(s);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y + 1 < s.h; ++y)
      for (int x = 0; x < s.w; ++x) out(c, y, x) = a.value()(c, y + 1, x) - a.value()(c, y, x);
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, s](Node& self) {
    auto& g = an->ensure_grad();
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y + 1 < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          g(c, y + 1, x) += self.grad(c, y, x);
          g(c, y, x) -= self.grad(c, y, x);
        }
  });
}

namespace detail {
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = f(v);
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, df](Node& self) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(an->value[i], self.value[i]);
  });
}
}  // namespace detail

inline Var abs(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var square(const Var& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& a, double slope = 0.1) {
  return detail::unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

// ----------------------------------------------------------------- reductions

inline Var sum(const Var& a) {
  auto an = a.node();
  return make_result(Tensor::scalar(a.value().sum()), {&a}, [an](Node& self) {
    auto& g = an->ensure_grad();
    const double s = self.grad[0];
    for (auto& v : g.values()) v += s;
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Mean over the positions where `mask` is non-zero. The mask is (1,H,W) and
/// broadcasts over channels, or matches `a` exactly. Empty mask yields 0.
inline Var masked_mean(const Var& a, const Tensor& mask) {
  const Shape& s = a.shape();
  const bool broadcast = mask.shape() == Shape{1, s.h, s.w} && s.c != 1;
  if (!broadcast) require_same_shape(s, mask.shape(), "masked_mean");
  const std::size_t plane = s.plane();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double m = broadcast ? mask[i % plane] : mask[i];
    if (m != 0.0) {
      total += a.value()[i];
      ++count;
    }
  }
  if (count == 0) return make_result(Tensor::scalar(0.0), {}, nullptr);
  const double inv = 1.0 / static_cast<double>(count);
  auto an = a.node();
  return make_result(Tensor::scalar(total * inv), {&a}, [an, mask, broadcast, plane, inv](Node& self) {
    auto& g = an->ensure_grad();
    const double s = self.grad[0] * inv;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double m = broadcast ? mask[i % plane] : mask[i];
      if (m != 0.0) g[i] += s;
    }
  });
}

/// (C,H,W) -> (1,H,W), averaging over channels.
inline Var channel_mean(const Var& a) {
  const Shape s = a.shape();
  Tensor out(Shape{1, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int c = 0; c < s.c; ++c) {
    const double* src = a.value().channel(c);
    for (std::size_t i = 0; i < plane; ++i) out[i] += src[i];
  }
  out *= 1.0 / s.c;
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, s, plane](Node& self) {
    auto& g = an->ensure_grad();
    const double inv = 1.0 / s.c;
    for (int c = 0; c < s.c; ++c) {
      double* dst = g.channel(c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += self.grad[i] * inv;
    }
  });
}

/// (C,H,W) -> (C,1,1), averaging each channel over its spatial extent.
inline Var spatial_mean(const Var& a) {
  const Shape s = a.shape();
  Tensor out(Shape{s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (int c = 0; c < s.c; ++c) {
    const double* src = a.value().channel(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out[static_cast<std::size_t>(c)] = acc / static_cast<double>(plane);
  }
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, s, plane](Node& self) {
    auto& g = an->ensure_grad();
    for (int c = 0; c < s.c; ++c) {
      const double v = self.grad[static_cast<std::size_t>(c)] / static_cast<double>(plane);
      double* dst = g.channel(c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
    }
  });
}

/// Frobenius norm of the whole tensor. Gradient at the origin is taken as 0.
inline Var frobenius(const Var& a) {
  double ss = 0.0;
  for (double v : a.value().values()) ss += v * v;
  const double norm = std::sqrt(ss);
  auto an = a.node();
  return make_result(Tensor::scalar(norm), {&a}, [an, norm](Node& self) {
    if (norm == 0.0) return;
    auto& g = an->ensure_grad();
    const double s = self.grad[0] / norm;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * an->value[i];
  });
}

// ------------------------------------------------------------ channel layout

inline Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const int h = parts.front().shape().h, w = parts.front().shape().w;
  int c = 0;
  for (const auto& p : parts) {
    if (p.shape().h != h || p.shape().w != w) {
      throw std::invalid_argument("concat_channels: spatial mismatch " + to_string(p.shape()));
    }
    c += p.shape().c;
  }
  Tensor out(Shape{c, h, w});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
    off += p.value().size();
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  std::vector<std::shared_ptr<Node>> inputs;
  for (const auto& p : parts) inputs.push_back(p.node());
  if (grad_enabled()) {
    for (const auto& p : inputs) {
      if (p->requires_grad) node->parents.push_back(p);
    }
  }
  if (!node->parents.empty()) {
    node->requires_grad = true;
    node->backward = [inputs](Node& self) {
      std::size_t o = 0;
      for (const auto& p : inputs) {
        const std::size_t n = p->value.size();
        if (p->requires_grad) {
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[o + i];
        }
        o += n;
      }
    };
  }
  return Var(std::move(node));
}

inline Var slice_channels(const Var& a, int first, int count) {
  const Shape s = a.shape();
  if (first < 0 || count <= 0 || first + count > s.c) throw std::out_of_range("slice_channels: bad range");
  Tensor out(Shape{count, s.h, s.w});
  std::copy(a.value().channel(first), a.value().channel(first) + out.size(), out.data());
  auto an = a.node();
  return make_result(std::move(out), {&a}, [an, first](Node& self) {
    auto& g = an->ensure_grad();
    double* dst = g.channel(first);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

// -------------------------------------------------------------- convolutions


namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  int ci, H, W, k, stride, pad, Ho, Wo;
  int rows() const { return ci * k * k; }
  int cols() const { return Ho * Wo; }
};

// Rows are (ci, ky, kx), columns output pixels; zero padding.
inline RowMatrix im2col(const Tensor& x, const ConvGeometry& g) {
  RowMatrix col = RowMatrix::Zero(g.rows(), g.cols());
  for (int ci = 0; ci < g.ci; ++ci) {
    const double* in = x.channel(ci);
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col.row((ci * g.k + ky) * g.k + kx).data();
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.H) continue;
          const double* irow = in + static_cast<std::size_t>(iy) * g.W;
          double* orow = row + static_cast<std::size_t>(oy) * g.Wo;
          for (int ox = 0; ox < g.Wo; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.W) orow[ox] = irow[ix];
          }
        }
      }
  }
  return col;
}

inline void col2im_add(const RowMatrix& col, const ConvGeometry& g, Tensor& gx) {
  for (int ci = 0; ci < g.ci; ++ci) {
    double* out = gx.channel(ci);
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = col.row((ci * g.k + ky) * g.k + kx).data();
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.H) continue;
          double* grow = out + static_cast<std::size_t>(iy) * g.W;
          const double* crow = row + static_cast<std::size_t>(oy) * g.Wo;
          for (int ox = 0; ox < g.Wo; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.W) grow[ix] += crow[ox];
          }
        }
      }
  }
}

}  // namespace detail

/// Same-padded k x k convolution; weight is (Cout, Cin, k*k), bias (Cout, 1, 1).
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride = 1) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ws.w))));
  if (k * k != ws.w || ws.h != xs.c) {
    throw std::invalid_argument("conv2d: weight " + to_string(ws) + " incompatible with input " + to_string(xs));
  }
  if (bias.shape() != Shape{ws.c, 1, 1}) throw std::invalid_argument("conv2d: bias shape");
  const int pad = k / 2;
  const detail::ConvGeometry geo{xs.c, xs.h, xs.w, k, stride, pad, (xs.h + 2 * pad - k) / stride + 1,
                                 (xs.w + 2 * pad - k) / stride + 1};
  const int co_n = ws.c;
  using CMap = Eigen::Map<const detail::RowMatrix>;
  using Map = Eigen::Map<detail::RowMatrix>;

  Tensor out(Shape{co_n, geo.Ho, geo.Wo});
  {
    const detail::RowMatrix col = detail::im2col(x.value(), geo);
    Map o(out.data(), co_n, geo.cols());
    o.noalias() = CMap(weight.value().data(), co_n, geo.rows()) * col;
    for (int co = 0; co < co_n; ++co) o.row(co).array() += bias.value()[static_cast<std::size_t>(co)];
  }

  auto xn = x.node(), wn = weight.node(), bn = bias.node();
  return make_result(std::move(out), {&x, &weight, &bias}, [=](Node& self) {
    const CMap g(self.grad.data(), co_n, geo.cols());
    if (Tensor* gb = detail::grad_of(bn))
      for (int co = 0; co < co_n; ++co) {
        // plain loop: Eigen's vectorised sum depends on pointer alignment
        double acc = 0.0;
        for (int i = 0; i < geo.cols(); ++i) acc += g(co, i);
        (*gb)[static_cast<std::size_t>(co)] += acc;
      }
    Tensor* gw = detail::grad_of(wn);
    Tensor* gx = detail::grad_of(xn);
    if (gw) {
      // recomputed rather than kept alive across the whole graph
      const detail::RowMatrix col = detail::im2col(xn->value, geo);
      Map(gw->data(), co_n, geo.rows()).noalias() += g * col.transpose();
    }
    if (gx) {
      const detail::RowMatrix gcol = CMap(wn->value.data(), co_n, geo.rows()).transpose() * g;
      detail::col2im_add(gcol, geo, *gx);
    }
  });
}

/// 2x2 max pooling with stride 2 (H and W must be even).
inline Var maxpool2(const Var& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw std::invalid_argument("maxpool2: odd extent " + to_string(s));
  const int Ho = s.h / 2, Wo = s.w / 2;
  Tensor out(Shape{s.c, Ho, Wo});
  std::vector<std::size_t> arg(out.size());
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < Ho; ++y) {
      for (int xo = 0; xo < Wo; ++xo) {
        std::size_t best = 0;
        double bv = -std::numeric_limits<double>::infinity();
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (static_cast<std::size_t>(c) * s.h + 2 * y + dy) * s.w + 2 * xo + dx;
            if (x.value()[idx] > bv) {
              bv = x.value()[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(c) * Ho + y) * Wo + xo;
        out[o] = bv;
        arg[o] = best;
      }
    }
  }
  auto xn = x.node();
  return make_result(std::move(out), {&x}, [xn, arg = std::move(arg)](Node& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

inline Var upsample_nearest2(const Var& x) {
  const Shape s = x.shape();
  Tensor out(Shape{s.c, 2 * s.h, 2 * s.w});
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < 2 * s.h; ++y) {
      for (int xo = 0; xo < 2 * s.w; ++xo) out(c, y, xo) = x.value()(c, y / 2, xo / 2);
    }
  }
  auto xn = x.node();
  return make_result(std::move(out), {&x}, [xn, s](Node& self) {
    auto& g = xn->ensure_grad();
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < 2 * s.h; ++y) {
        for (int xo = 0; xo < 2 * s.w; ++xo) g(c, y / 2, xo / 2) += self.grad(c, y, xo);
      }
    }
  });
}

namespace detail {
/// Half-pixel-centre bilinear taps along one axis.
struct Tap {
  int i0, i1;
  double w0, w1;
};

inline std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    const double f = src - i0;
    taps[static_cast<std::size_t>(o)] = Tap{i0, i1, 1.0 - f, f};
  }
  return taps;
}
}  // namespace detail

/// Bilinear resize (half-pixel centres, edge clamped) to (oh, ow).
inline Var resize_bilinear(const Var& x, int oh, int ow) {
  const Shape s = x.shape();
  if (oh == s.h && ow == s.w) return x;
  const auto ty = detail::bilinear_taps(s.h, oh);
  const auto tx = detail::bilinear_taps(s.w, ow);
  Tensor out(Shape{s.c, oh, ow});
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < oh; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      for (int xo = 0; xo < ow; ++xo) {
        const auto& b = tx[static_cast<std::size_t>(xo)];
        const Tensor& v = x.value();
        out(c, y, xo) = a.w0 * (b.w0 * v(c, a.i0, b.i0) + b.w1 * v(c, a.i0, b.i1)) +
                        a.w1 * (b.w0 * v(c, a.i1, b.i0) + b.w1 * v(c, a.i1, b.i1));
      }
    }
  }
  auto xn = x.node();
  return make_result(std::move(out), {&x}, [xn, s, ty, tx, oh, ow](Node& self) {
    auto& g = xn->ensure_grad();
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int xo = 0; xo < ow; ++xo) {
          const auto& b = tx[static_cast<std::size_t>(xo)];
          const double gv = self.grad(c, y, xo);
          g(c, a.i0, b.i0) += gv * a.w0 * b.w0;
          g(c, a.i0, b.i1) += gv * a.w0 * b.w1;
          g(c, a.i1, b.i0) += gv * a.w1 * b.w0;
          g(c, a.i1, b.i1) += gv * a.w1 * b.w1;
        }
      }
    }
  });
}

/// Tensor-level resize without gradient bookkeeping.
inline Tensor resize_bilinear(const Tensor& t, int oh, int ow) {
  NoGradGuard guard;
  return resize_bilinear(constant(t), oh, ow).value();
}

}  // namespace seldist::ad
