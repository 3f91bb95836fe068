#include <gtest/gtest.h>

#include <filesystem>

#include "seldist/data.hpp"
#include "seldist/photometric.hpp"

using namespace seldist;
namespace fs = std::filesystem;

namespace {

/// Pixels whose whole 3x3 patch is visible in the right view and samples inside it.
Tensor patch_visible(const StereoSample& s, const Tensor& validity) {
  const int H = s.height(), W = s.width();
  Tensor v(Shape{1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool ok = validity(0, y, x) != 0;
      for (int dy = -1; dy <= 1 && ok; ++dy)
        for (int dx = -1; dx <= 1 && ok; ++dx) {
          const int yy = std::clamp(y + dy, 0, H - 1), xx = std::clamp(x + dx, 0, W - 1);
          ok = (*s.occlusion)(0, yy, xx) == 0;
        }
      v(0, y, x) = ok;
    }
  return v;
}

double warp_identity_loss(const StereoSample& s) {
  const WarpResult w = inverse_warp(ad::constant(s.right), ad::constant(*s.gt_disparity));
  return reconstruction_loss(ad::constant(s.left), w.image, patch_visible(s, w.validity)).item();
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seldist_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Generator, BackgroundOnlyScene) {
  SceneParams p;
  p.min_boxes = p.max_boxes = 0;
  const StereoSample s = generate_scene(3, 32, 64, p);
  const double k = (*s.gt_disparity)[0];
  for (double v : s.gt_disparity->values()) EXPECT_EQ(v, k);
  const WarpResult w = inverse_warp(ad::constant(s.right), ad::constant(*s.gt_disparity));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x)
      if (w.validity(0, y, x) != 0)
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(w.image.value()(c, y, x), s.left(c, y, x), 1e-9);
}

TEST(Generator, TwoLayerOcclusionBand) {
  SceneParams p;
  p.min_boxes = p.max_boxes = 1;
  const SceneLayout layout = generate_layout(5, 64, 128, p);
  const StereoSample s = render_scene(layout);
  const SceneLayer& bg = layout.layers[0];
  const SceneLayer& box = layout.layers[1];
  const int band = static_cast<int>(std::lround(box.disparity - bg.disparity));
  const int y = box.rect.y + box.rect.h / 2;
  // Background pixels just left of the near box are hidden in the right view.
  for (int x = box.rect.x - band; x < box.rect.x; ++x) EXPECT_EQ((*s.occlusion)(0, y, x), 1.0) << x;
  EXPECT_EQ((*s.occlusion)(0, y, box.rect.x - band - 1), 0.0);
  EXPECT_EQ((*s.occlusion)(0, y, box.rect.x), 0.0);
  EXPECT_EQ((*s.gt_disparity)(0, y, box.rect.x), box.disparity);
  EXPECT_EQ((*s.gt_disparity)(0, y, box.rect.x - 1), bg.disparity);
}

TEST(Generator, SeededAndSound) {
  const StereoSample a = generate_scene(9, 64, 128), b = generate_scene(9, 64, 128);
  EXPECT_EQ(max_abs_diff(a.left, b.left), 0.0);
  EXPECT_EQ(max_abs_diff(a.right, b.right), 0.0);
  EXPECT_EQ(max_abs_diff(*a.gt_disparity, *b.gt_disparity), 0.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(warp_identity_loss(generate_scene(seed, 64, 128)), 0.01);
  EXPECT_THROW(generate_scene(1, 60, 128), std::invalid_argument);
}

TEST(Corruption, Locality) {
  const StereoSample s = generate_scene(4, 32, 64);
  const Tensor& gt = *s.gt_disparity;
  EXPECT_EQ(max_abs_diff(corrupt_proxy(gt, CorruptionSpec{}), gt), 0.0);
  const Rect r{10, 5, 20, 12};
  const Tensor off = corrupt_proxy(gt, CorruptionSpec{{r}, CorruptionMode::offset, 4.0, 0});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x) EXPECT_EQ(off(0, y, x) - gt(0, y, x), r.contains(x, y) ? 4.0 : 0.0);
  const Tensor zero = corrupt_proxy(gt, CorruptionSpec{{r}, CorruptionMode::zero, 0.0, 0});
  EXPECT_EQ(zero(0, 6, 11), 0.0);
  EXPECT_THROW(corrupt_proxy(gt, CorruptionSpec{{Rect{60, 0, 10, 4}}, CorruptionMode::zero, 0.0, 0}), std::invalid_argument);
}

TEST(Corruption, BlurOnlyNearSteps) {
  Tensor gt(Shape{1, 16, 32}, 2.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 16; x < 32; ++x) gt(0, y, x) = 6.0;
  const Rect r{4, 2, 24, 12};
  const Tensor b = corrupt_proxy(gt, CorruptionSpec{{r}, CorruptionMode::blur, 0.0, 0});
  const int k = 5;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) {
      if (!r.contains(x, y)) {
        EXPECT_EQ(b(0, y, x), gt(0, y, x));
        continue;
      }
      // direct box-blur oracle
      double s = 0;
      int n = 0;
      for (int dy = -k / 2; dy <= k / 2; ++dy)
        for (int dx = -k / 2; dx <= k / 2; ++dx) {
          const int yy = std::clamp(y + dy, 0, 15), xx = std::clamp(x + dx, 0, 31);
          s += gt(0, yy, xx), ++n;
        }
      EXPECT_NEAR(b(0, y, x), s / n, 1e-12);
      const bool near_step = std::abs(x - 15.5) < k - 1;
      if (!near_step) EXPECT_EQ(b(0, y, x), gt(0, y, x)) << x;
    }
}

TEST(Benchmark, CorruptionMetadataMatchesProxy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const StereoSample s = benchmark_sample(seed, 64, 128);
    ASSERT_TRUE(s.corruption.has_value());
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 128; ++x) {
        bool inside = false;
        for (const auto& r : s.corruption->regions) inside = inside || r.contains(x, y);
        if (!inside) EXPECT_EQ(s.proxy_disparity(0, y, x), (*s.gt_disparity)(0, y, x));
      }
  }
}

TEST(Augment, IdentityAndDoubleFlip) {
  const StereoSample s = generate_scene(12, 32, 64);
  const StereoSample id = apply_augment(s, AugmentParams{});
  EXPECT_EQ(max_abs_diff(id.left, s.left), 0.0);
  EXPECT_EQ(max_abs_diff(id.proxy_disparity, s.proxy_disparity), 0.0);

  AugmentParams flip;
  flip.flip = true;
  const StereoSample once = apply_augment(s, flip);
  const StereoSample twice = apply_augment(once, flip);
  EXPECT_LT(max_abs_diff(twice.left, s.left), 1e-12);
  EXPECT_LT(max_abs_diff(twice.right, s.right), 1e-12);
  // Disparity is recovered on pixels visible in both views.
  for (std::size_t i = 0; i < s.proxy_disparity.size(); ++i)
    if ((*s.occlusion)[i] == 0) EXPECT_EQ(twice.proxy_disparity[i], s.proxy_disparity[i]);
}

TEST(Augment, FlippedSampleSatisfiesWarpIdentity) {
  AugmentParams flip;
  flip.flip = true;
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    const StereoSample f = apply_augment(generate_scene(seed, 64, 128), flip);
    EXPECT_LT(warp_identity_loss(f), 0.01) << seed;
  }
}

TEST(Augment, GainsApplyToBothViews) {
  const StereoSample s = generate_scene(13, 32, 64);
  AugmentParams a;
  a.gains = {0.9, 1.0, 1.1};
  const StereoSample g = apply_augment(s, a);
  EXPECT_NEAR(g.left(0, 3, 4), s.left(0, 3, 4) * 0.9, 1e-15);
  EXPECT_NEAR(g.right(0, 3, 4), s.right(0, 3, 4) * 0.9, 1e-15);
  EXPECT_EQ(g.left(1, 3, 4), s.left(1, 3, 4));
  const AugmentParams d1 = draw_augment(77), d2 = draw_augment(77);
  EXPECT_EQ(d1.flip, d2.flip);
  EXPECT_EQ(d1.gains, d2.gains);
}

TEST(Png, DisparityEncoding) {
  const fs::path dir = temp_dir("png");
  Tensor d(Shape{1, 2, 3}, std::vector<double>{2.0, 0.0, 10.0, 1.0 / 3.0, 100.0, 7.125});
  io::write_disparity_png((dir / "d.png").string(), d);
  const Tensor r = io::read_disparity_png((dir / "d.png").string());
  EXPECT_EQ(r[0], 2.0);   // stored as 512
  EXPECT_EQ(r[1], 0.0);
  EXPECT_EQ(r[2], 10.0);  // stored as 2560
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_LE(std::abs(r[i] - d[i]), 0.5 / 256.0 + 1e-12);
}

TEST(Dataset, RoundTripOrderAndErrors) {
  const fs::path root = temp_dir("dataset");
  EXPECT_TRUE(load_dataset(root, "train").empty());
  std::vector<StereoSample> samples;
  for (const char* id : {"b", "c", "a"}) {
    StereoSample s = benchmark_sample(std::hash<std::string>{}(id), 32, 64);
    s.id = id;
    samples.push_back(s);
  }
  write_dataset(root, "train", samples);
  const auto loaded = load_dataset(root, "train");
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_EQ(loaded[0].id, "a");
  EXPECT_EQ(loaded[1].id, "b");
  EXPECT_EQ(loaded[2].id, "c");
  const StereoSample& src = samples[2];
  EXPECT_LE(max_abs_diff(loaded[0].left, src.left), 0.5 / 255 + 1e-12);
  EXPECT_EQ(max_abs_diff(*loaded[0].gt_disparity, *src.gt_disparity), 0.0);  // integer disparities are exact
  EXPECT_EQ(loaded[0].corruption, src.corruption);
  const auto again = load_dataset(root, "train");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(max_abs_diff(again[i].left, loaded[i].left), 0.0);

  fs::remove(root / "train" / "proxy" / "b.png");
  try {
    load_dataset(root, "train", ProxyMode::file);
    FAIL() << "expected a layout error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("proxy"), std::string::npos);
  }
  EXPECT_EQ(load_dataset(root, "train", ProxyMode::synthetic).size(), 3u);
}
