#pragma once

// Teacher-student feature distillation losses.
//
//   L_FD = sum_i 0.5^(i-1) * mean_{c,h,w} |F_T^i - F_S^i|
//   L_CD = sum_i mean_c |wt_T^c - wt_S^c|,  wt^c = spatial mean of channel c
//   L_SD = sum_i ||Z~_T^i - Z~_S^i||_F / C_i^2,  Z = Q Q^T with rows unit-normalised
//
// Teacher pyramids are constants; only student features receive gradients.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "seldist/autodiff/ops.hpp"
#include "seldist/core/rng.hpp"
#include "seldist/core/types.hpp"

namespace seldist {

using VarPyramid = std::vector<ad::Var>;

inline VarPyramid as_constants(const FeaturePyramid& p) {
  VarPyramid out;
  for (const auto& l : p.levels) out.push_back(ad::constant(l));
  return out;
}

inline FeaturePyramid values_of(const VarPyramid& p, PyramidOrigin origin) {
  FeaturePyramid out;
  out.origin = origin;
  for (const auto& l : p) out.levels.push_back(l.value());
  return out;
}

/// Frozen random 1x1 projection mapping `in` teacher channels to `out` student channels.
inline Tensor channel_projection(int in, int out, std::uint64_t seed, int level) {
  auto rng = make_stream(seed, "teacher-projection", static_cast<std::uint64_t>(level),
                         static_cast<std::uint64_t>(in) * 100003ULL + static_cast<std::uint64_t>(out));
  Tensor w(Shape{1, out, in});
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : w.values()) v = s * normal01(rng);
  return w;
}

/// Aligns a teacher pyramid to the student shapes: channel projection (only when the
/// counts differ) followed by bilinear spatial resizing.
inline FeaturePyramid resize_teacher(const FeaturePyramid& teacher, const std::vector<Shape>& student_shapes,
                                     std::uint64_t projection_seed = 0) {
  if (teacher.levels.size() != student_shapes.size()) {
    throw std::invalid_argument("resize_teacher: level count mismatch (" + std::to_string(teacher.levels.size()) +
                                " vs " + std::to_string(student_shapes.size()) + ")");
  }
  FeaturePyramid out;
  out.origin = PyramidOrigin::teacher;
  for (std::size_t i = 0; i < teacher.levels.size(); ++i) {
    const Tensor& t = teacher.levels[i];
    const Shape target = student_shapes[i];
    Tensor projected = t;
    if (t.channels() != target.c) {
      const Tensor w = channel_projection(t.channels(), target.c, projection_seed, static_cast<int>(i));
      projected = Tensor(Shape{target.c, t.height(), t.width()});
      const std::size_t plane = t.shape().plane();
      for (int o = 0; o < target.c; ++o) {
        double* dst = projected.channel(o);
        for (int c = 0; c < t.channels(); ++c) {
          const double k = w(0, o, c);
          const double* src = t.channel(c);
          for (std::size_t p = 0; p < plane; ++p) dst[p] += k * src[p];
        }
      }
    }
    out.levels.push_back(ad::resize_bilinear(projected, target.h, target.w));
  }
  return out;
}

namespace detail {
inline void require_matching(const VarPyramid& t, const VarPyramid& s, const char* what) {
  if (t.size() != s.size() || t.empty()) throw std::invalid_argument(std::string(what) + ": level count mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) require_same_shape(t[i].shape(), s[i].shape(), what);
}
}  // namespace detail

inline ad::Var fd_loss(const VarPyramid& teacher, const VarPyramid& student) {
  detail::require_matching(teacher, student, "fd_loss");
  ad::Var total = ad::constant(Tensor::scalar(0.0));
  double w = 1.0;
  for (std::size_t i = 0; i < student.size(); ++i, w *= 0.5) {
    total = ad::add(total, ad::scale(ad::mean(ad::abs(ad::sub(ad::detach(teacher[i]), student[i]))), w));
  }
  return total;
}

inline ad::Var cd_loss(const VarPyramid& teacher, const VarPyramid& student) {
  detail::require_matching(teacher, student, "cd_loss");
  ad::Var total = ad::constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < student.size(); ++i) {
    const ad::Var wt_t = ad::spatial_mean(ad::detach(teacher[i]));
    const ad::Var wt_s = ad::spatial_mean(student[i]);
    total = ad::add(total, ad::mean(ad::abs(ad::sub(wt_t, wt_s))));
  }
  return total;
}

/// Row-normalised Gram matrix of the flattened feature volume, shape (1,C,C).
/// Zero rows stay zero.
inline ad::Var normalized_gram(const ad::Var& f) {
  const Shape s = f.shape();
  const int C = s.c;
  const std::size_t N = s.plane();
  const Tensor& q = f.value();
  Tensor z(Shape{1, C, C});
  for (int i = 0; i < C; ++i) {
    for (int j = i; j < C; ++j) {
      const double* a = q.channel(i);
      const double* b = q.channel(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < N; ++p) acc += a[p] * b[p];
      z(0, i, j) = acc;
      z(0, j, i) = acc;
    }
  }
  std::vector<double> norms(static_cast<std::size_t>(C));
  Tensor zn(z.shape());
  for (int i = 0; i < C; ++i) {
    double ss = 0.0;
    for (int j = 0; j < C; ++j) ss += z(0, i, j) * z(0, i, j);
    norms[static_cast<std::size_t>(i)] = std::sqrt(ss);
    for (int j = 0; j < C; ++j) zn(0, i, j) = ss > 0.0 ? z(0, i, j) / norms[static_cast<std::size_t>(i)] : 0.0;
  }
  auto fn = f.node();
  return ad::make_result(zn, {&f}, [fn, zn, norms, C, N](ad::Node& self) {
    // d/dZ of row normalisation, then dQ = (dZ + dZ^T) Q.
    Tensor dz(Shape{1, C, C});
    for (int i = 0; i < C; ++i) {
      const double r = norms[static_cast<std::size_t>(i)];
      if (r == 0.0) continue;
      double dot = 0.0;
      for (int j = 0; j < C; ++j) dot += self.grad(0, i, j) * zn(0, i, j);
      for (int j = 0; j < C; ++j) dz(0, i, j) = (self.grad(0, i, j) - dot * zn(0, i, j)) / r;
    }
    auto& g = fn->ensure_grad();
    const Tensor& q = fn->value;
    for (int i = 0; i < C; ++i) {
      double* gi = g.channel(i);
      for (int j = 0; j < C; ++j) {
        const double k = dz(0, i, j) + dz(0, j, i);
        if (k == 0.0) continue;
        const double* qj = q.channel(j);
        for (std::size_t p = 0; p < N; ++p) gi[p] += k * qj[p];
      }
    }
  });
}

inline ad::Var sd_loss(const VarPyramid& teacher, const VarPyramid& student) {
  detail::require_matching(teacher, student, "sd_loss");
  ad::Var total = ad::constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double c = student[i].shape().c;
    ad::Var zt = normalized_gram(ad::detach(teacher[i]));
    ad::Var zs = normalized_gram(student[i]);
    total = ad::add(total, ad::scale(ad::frobenius(ad::sub(zt, zs)), 1.0 / (c * c)));
  }
  return total;
}

struct TsLossTerms {
  ad::Var total;
  ad::Var fd;
  ad::Var cd;
  ad::Var sd;
};

inline TsLossTerms ts_loss_terms(const VarPyramid& teacher, const VarPyramid& student, const LossWeights& w) {
  TsLossTerms t;
  t.fd = fd_loss(teacher, student);
  t.cd = cd_loss(teacher, student);
  t.sd = sd_loss(teacher, student);
  t.total = ad::add(ad::add(t.fd, ad::scale(t.cd, w.lambda_cd)), ad::scale(t.sd, w.lambda_sd));
  return t;
}

inline ad::Var ts_loss(const VarPyramid& teacher, const VarPyramid& student, const LossWeights& w) {
  return ts_loss_terms(teacher, student, w).total;
}

inline double fd_loss(const FeaturePyramid& t, const FeaturePyramid& s) {
  return fd_loss(as_constants(t), as_constants(s)).item();
}
inline double cd_loss(const FeaturePyramid& t, const FeaturePyramid& s) {
  return cd_loss(as_constants(t), as_constants(s)).item();
}
inline double sd_loss(const FeaturePyramid& t, const FeaturePyramid& s) {
  return sd_loss(as_constants(t), as_constants(s)).item();
}
inline double ts_loss(const FeaturePyramid& t, const FeaturePyramid& s, const LossWeights& w) {
  return ts_loss(as_constants(t), as_constants(s), w).item();
}

}  // namespace seldist
