#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "seldist/core/tensor.hpp"

namespace seldist {

/// H x W x C image in [0,1], stored channel-major.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Tensor data) : data_(std::move(data)) { validate(); }

  const Tensor& data() const { return data_; }
  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  int channels() const { return data_.channels(); }

 private:
  void validate() const {
    for (double v : data_.values()) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw std::invalid_argument("ImageTensor: value outside [0,1]");
      }
    }
  }
  Tensor data_;
};

enum class DisparityRole { mono, proxy, virtual_rc, virtual_sm, ground_truth };

/// Per-pixel horizontal disparity in pixels of its own resolution, shape (1,H,W).
class DisparityMap {
 public:
  DisparityMap() = default;
  DisparityMap(Tensor data, DisparityRole role) : data_(std::move(data)), role_(role) { validate(); }

  const Tensor& data() const { return data_; }
  DisparityRole role() const { return role_; }
  int height() const { return data_.height(); }
  int width() const { return data_.width(); }

 private:
  void validate() const {
    if (data_.channels() != 1) throw std::invalid_argument("DisparityMap: expected a single channel");
    const double limit = static_cast<double>(data_.width());
    for (double v : data_.values()) {
      if (!std::isfinite(v) || v < 0.0 || v > limit) {
        throw std::invalid_argument("DisparityMap: value outside [0, W]");
      }
    }
  }
  Tensor data_;
  DisparityRole role_ = DisparityRole::mono;
};

enum class MaskRole { rc, sm };

/// Binary selector with the logits it was thresholded from: hard = 1[sigmoid(logit) >= 0.5].
struct SelectionMask {
  Tensor logits;
  Tensor hard;
  MaskRole role = MaskRole::rc;

  static SelectionMask from_logits(Tensor logits, MaskRole role) {
    Tensor hard(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) hard[i] = logits[i] >= 0.0 ? 1.0 : 0.0;
    return SelectionMask{std::move(logits), std::move(hard), role};
  }

  /// Hard mask with saturated logits (+/-big), handy for tests and oracles.
  static SelectionMask from_hard(const Tensor& hard, MaskRole role, double magnitude = 30.0) {
    Tensor logits(hard.shape());
    for (std::size_t i = 0; i < hard.size(); ++i) logits[i] = hard[i] != 0.0 ? magnitude : -magnitude;
    return from_logits(std::move(logits), role);
  }
};

enum class PyramidOrigin { teacher, student };

/// Multi-scale feature volumes, finest first.
struct FeaturePyramid {
  std::vector<Tensor> levels;
  PyramidOrigin origin = PyramidOrigin::student;

  std::vector<Shape> shapes() const {
    std::vector<Shape> s;
    s.reserve(levels.size());
    for (const auto& l : levels) s.push_back(l.shape());
    return s;
  }
};

struct CameraRig {
  double focal_length_px = 72.0;
  double baseline_m = 0.54;

  void validate() const {
    if (!(focal_length_px > 0.0) || !(baseline_m > 0.0)) {
      throw std::invalid_argument("CameraRig: focal length and baseline must be positive");
    }
  }
};

struct LossWeights {
  double alpha = 0.85;
  double lambda_mask = 1.0;
  double lambda_ts = 1e-4;
  double lambda_cd = 1.0;
  double lambda_sd = 1e5;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

}  // namespace seldist
