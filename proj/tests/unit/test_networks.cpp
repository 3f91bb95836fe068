#include <gtest/gtest.h>

#include "seldist/data.hpp"
#include "seldist/networks.hpp"

using namespace seldist;

namespace {

Tensor test_image(int H, int W, std::uint64_t seed) {
  auto rng = make_stream(seed, "net-image");
  Tensor t(Shape{3, H, W});
  for (auto& v : t.values()) v = uniform01(rng);
  return t;
}

bool same(const MonoNetOutputs& a, const MonoNetOutputs& b) {
  for (int s = 0; s < kDecoderScales; ++s) {
    if (max_abs_diff(a.disparity[s].value(), b.disparity[s].value()) != 0.0) return false;
    if (max_abs_diff(a.mask_logits[s].value(), b.mask_logits[s].value()) != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST(MonoNet, DeskShapeContract) {
  MonoNet net(MonoNetConfig{});
  const MonoNetOutputs o = mono_forward(net, test_image(64, 128, 1));
  ASSERT_EQ(o.encoder.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(o.encoder[i].shape(), (Shape{8 << i, 64 >> i, 128 >> i})) << i;
  ASSERT_EQ(o.student.size(), 4u);
  const auto ss = net.student_shapes();
  for (int i = 0; i < 4; ++i) EXPECT_EQ(o.student[i].shape(), ss[i]);
  for (int s = 0; s < kDecoderScales; ++s) {
    EXPECT_EQ(o.disparity[s].shape(), (Shape{1, 64 >> s, 128 >> s}));
    EXPECT_EQ(o.mask_logits[s].shape(), (Shape{2, 64 >> s, 128 >> s}));
    EXPECT_GE(o.disparity[s].value().min(), 0.0);
    EXPECT_LE(o.disparity[s].value().max(), 0.3 * (128 >> s));
  }
  // mask head starts out selecting the proxy
  EXPECT_GT(o.mask_logits[0].value().mean(), 0.0);
}

TEST(MonoNet, FullGeometryEncoderContract) {
  MonoNetConfig c;
  c.height = 256;
  c.width = 512;
  c.base_channels = 32;
  MonoNet net(c);
  const Shape expected[] = {{32, 256, 512}, {64, 128, 256}, {128, 64, 128}, {256, 32, 64}, {512, 16, 32}};
  const auto ss = net.student_shapes();
  for (int i = 1; i < 5; ++i) EXPECT_EQ(ss[static_cast<std::size_t>(i - 1)], expected[i]);
  // Encoder alone is cheap enough to run at this size.
  ParameterBinding p(net.parameters(), false);
  ad::NoGradGuard g;
  const auto o = net.forward(p, test_image(256, 512, 2));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(o.encoder[i].shape(), expected[i]);
}

TEST(MonoNet, DeterministicAndSeeded) {
  const Tensor img = test_image(64, 128, 3);
  MonoNet a(MonoNetConfig{}), b(MonoNetConfig{});
  EXPECT_TRUE(same(mono_forward(a, img), mono_forward(a, img)));
  EXPECT_EQ(a.parameters().hash(), b.parameters().hash());
  MonoNetConfig c1;
  c1.seed = 1;
  MonoNet c(c1);
  EXPECT_NE(a.parameters().hash(), c.parameters().hash());
  EXPECT_FALSE(same(mono_forward(a, img), mono_forward(c, img)));
}

TEST(MonoNet, ParameterCountRegression) { EXPECT_EQ(MonoNet(MonoNetConfig{}).parameters().scalar_count(), 895696u); }

TEST(MonoNet, RejectsWrongInput) {
  MonoNet net(MonoNetConfig{});
  EXPECT_THROW(mono_forward(net, test_image(32, 128, 4)), std::invalid_argument);
  MonoNetConfig c;
  c.height = 60;
  EXPECT_THROW(MonoNet{c}, std::invalid_argument);
}

TEST(MonoNet, DecoderGradientRouting) {
  MonoNet net(MonoNetConfig{});
  const ParameterStore& store = net.parameters();
  const Tensor img = test_image(64, 128, 5);
  auto grads_for = [&](bool depth_head) {
    ParameterBinding p(store, true);
    const auto o = net.forward(p, img);
    ad::backward(ad::sum(depth_head ? o.disparity[0] : o.mask_logits[0]));
    return p.gradients();
  };
  const auto gd = grads_for(true), gm = grads_for(false);
  double depth_into_mask = 0, mask_into_depth = 0, depth_into_depth = 0, mask_into_mask = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& n = store.name(i);
    const double a = std::abs(gd[i].sum()) + gd[i].max() - gd[i].min();
    const double b = std::abs(gm[i].sum()) + gm[i].max() - gm[i].min();
    if (n.rfind(MonoNet::mask_prefix(), 0) == 0) depth_into_mask += a, mask_into_mask += b;
    if (n.rfind(MonoNet::depth_prefix(), 0) == 0) mask_into_depth += b, depth_into_depth += a;
  }
  EXPECT_EQ(depth_into_mask, 0.0);
  EXPECT_EQ(mask_into_depth, 0.0);
  EXPECT_GT(depth_into_depth, 0.0);
  EXPECT_GT(mask_into_mask, 0.0);
}

TEST(Teacher, FrozenAndOrderSensitive) {
  SyntheticTeacher t(8);
  const StereoSample s = generate_scene(7, 64, 128);
  MonoNet net(MonoNetConfig{});
  const auto shapes = net.student_shapes();
  const auto a = t.teacher_features(s, shapes), b = t.teacher_features(s, shapes);
  ASSERT_EQ(a.levels.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.levels[i].shape(), shapes[i]);
    EXPECT_EQ(max_abs_diff(a.levels[i], b.levels[i]), 0.0);
  }
  StereoSample swapped = s;
  std::swap(swapped.left, swapped.right);
  const auto c = t.teacher_features(swapped, shapes);
  EXPECT_GT(max_abs_diff(a.levels[0], c.levels[0]), 0.0);
  const auto h = t.parameter_hash();
  (void)t.teacher_features(s, shapes);
  EXPECT_EQ(h, t.parameter_hash());
}
