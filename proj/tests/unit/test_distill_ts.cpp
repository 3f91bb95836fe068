#include <gtest/gtest.h>

#include "../oracles/oracles.hpp"
#include "../support/gradcheck.hpp"
#include "seldist/distill_ts.hpp"

using namespace seldist;
using testing_support::random_tensor;

namespace {

std::vector<Tensor> random_pyramid(std::mt19937_64& rng, int levels = 4, int c0 = 2, int h0 = 8, int w0 = 12) {
  std::vector<Tensor> p;
  for (int i = 0; i < levels; ++i) p.push_back(random_tensor(Shape{std::min(4, c0 << i), std::max(1, h0 >> i), std::max(1, w0 >> i)}, rng, -1, 1));
  return p;
}

FeaturePyramid fp(std::vector<Tensor> levels) { return FeaturePyramid{std::move(levels), PyramidOrigin::student}; }

}  // namespace

TEST(ResizeTeacher, Contracts) {
  auto rng = make_stream(1, "resize-teacher");
  const auto t = random_pyramid(rng);
  const FeaturePyramid same = resize_teacher(fp(t), fp(t).shapes());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(max_abs_diff(same.levels[i], t[i]), 0.0);

  const FeaturePyramid c = resize_teacher(fp({Tensor(Shape{2, 8, 8}, 0.7)}), {Shape{2, 4, 4}});
  for (double v : c.levels[0].values()) EXPECT_NEAR(v, 0.7, 1e-15);

  Tensor ramp(Shape{1, 8, 16});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) ramp(0, y, x) = 0.1 * x + 0.05 * y;
  const Tensor down = resize_teacher(fp({ramp}), {Shape{1, 4, 8}}).levels[0];
  const Tensor up = resize_teacher(fp({down}), {Shape{1, 8, 16}}).levels[0];
  EXPECT_LT(max_abs_diff(up, oracle::resize(oracle::resize(ramp, 4, 8), 8, 16)), 1e-5);

  EXPECT_THROW(resize_teacher(fp(t), {Shape{1, 1, 1}}), std::invalid_argument);
  const FeaturePyramid proj = resize_teacher(fp({random_tensor(Shape{6, 4, 4}, rng)}), {Shape{3, 2, 2}});
  EXPECT_EQ(proj.levels[0].shape(), (Shape{3, 2, 2}));
}

TEST(FeatureDistillation, ExamplesAndOracle) {
  auto rng = make_stream(2, "fd");
  const auto t = random_pyramid(rng);
  EXPECT_EQ(fd_loss(fp(t), fp(t)), 0.0);

  for (std::size_t level : {0u, 2u}) {
    auto s = t;
    s[level][5] += 0.25;
    const double V = static_cast<double>(t[level].size());
    EXPECT_NEAR(fd_loss(fp(t), fp(s)), std::pow(0.5, static_cast<double>(level)) * 0.25 / V, 1e-15);
  }
  for (int k = 0; k < 10; ++k) {
    const auto a = random_pyramid(rng), b = random_pyramid(rng);
    EXPECT_NEAR(fd_loss(fp(a), fp(b)), oracle::fd(a, b), 1e-12);
  }
}

TEST(ChannelDistillation, ExamplesAndOracle) {
  auto rng = make_stream(3, "cd");
  const auto t = random_pyramid(rng);
  EXPECT_EQ(cd_loss(fp(t), fp(t)), 0.0);

  auto shifted = t;
  for (auto& l : shifted)
    for (auto& v : l.values()) v += 0.125;
  EXPECT_NEAR(cd_loss(fp(t), fp(shifted)), 4 * 0.125, 1e-12);

  // spatial permutation (reverse) leaves channel means unchanged
  auto perm = t;
  for (auto& l : perm)
    for (int c = 0; c < l.channels(); ++c) std::reverse(l.channel(c), l.channel(c) + l.shape().plane());
  EXPECT_NEAR(cd_loss(fp(t), fp(perm)), 0.0, 1e-15);

  for (int k = 0; k < 10; ++k) {
    const auto a = random_pyramid(rng), b = random_pyramid(rng);
    EXPECT_NEAR(cd_loss(fp(a), fp(b)), oracle::cd(a, b), 1e-12);
  }
}

TEST(StructureDistillation, ExamplesAndOracle) {
  auto rng = make_stream(4, "sd");
  const auto t = random_pyramid(rng);
  EXPECT_EQ(sd_loss(fp(t), fp(t)), 0.0);
  auto scaled = t;
  for (auto& l : scaled) l *= 3.7;
  EXPECT_NEAR(sd_loss(fp(t), fp(scaled)), 0.0, 1e-12);

  // channel permutation of non-symmetric features
  auto perm = t;
  for (auto& l : perm) {
    if (l.channels() < 2) continue;
    std::swap_ranges(l.channel(0), l.channel(0) + l.shape().plane(), l.channel(1));
  }
  const double v = sd_loss(fp(t), fp(perm));
  EXPECT_GT(v, 0.0);
  EXPECT_NEAR(v, oracle::sd(t, perm), 1e-6);

  for (int k = 0; k < 10; ++k) {
    const auto a = random_pyramid(rng), b = random_pyramid(rng);
    EXPECT_NEAR(sd_loss(fp(a), fp(b)), oracle::sd(a, b), 1e-12);
  }
}

TEST(TsLoss, Composition) {
  auto rng = make_stream(5, "ts");
  const auto a = random_pyramid(rng), b = random_pyramid(rng);
  EXPECT_EQ(ts_loss(fp(a), fp(a), LossWeights{}), 0.0);
  LossWeights w;
  w.lambda_cd = w.lambda_sd = 0.0;
  EXPECT_EQ(ts_loss(fp(a), fp(b), w), fd_loss(fp(a), fp(b)));
  EXPECT_NEAR(ts_loss(fp(a), fp(b), LossWeights{}), oracle::fd(a, b) + oracle::cd(a, b) + 1e5 * oracle::sd(a, b), 1e-6);
  EXPECT_THROW(fd_loss(fp(a), fp({a[0]})), std::invalid_argument);
}

TEST(TsLoss, StudentGradientsTeacherNone) {
  auto rng = make_stream(6, "ts-grad");
  const auto t = random_pyramid(rng, 2), s = random_pyramid(rng, 2);
  std::vector<Tensor> inputs = {t[0], t[1], s[0], s[1]};
  auto f = [](const std::vector<ad::Var>& v) {
    LossWeights w;
    w.lambda_sd = 10.0;
    return ts_loss(VarPyramid{v[0], v[1]}, VarPyramid{v[2], v[3]}, w);
  };
  EXPECT_LT(testing_support::check_gradient(f, inputs, 2).rel_error, 1e-6);
  EXPECT_LT(testing_support::check_gradient(f, inputs, 3).rel_error, 1e-6);
  VarPyramid tv{ad::parameter(t[0]), ad::parameter(t[1])};
  ad::backward(f({tv[0], tv[1], ad::parameter(s[0]), ad::parameter(s[1])}));
  EXPECT_FALSE(tv[0].has_grad());
  EXPECT_FALSE(tv[1].has_grad());
}
