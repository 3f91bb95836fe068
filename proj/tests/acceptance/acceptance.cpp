// Acceptance run: one PASS/FAIL line per criterion, exit 0 iff all pass.
//   seldist_acceptance --work DIR [--only N[,N...]]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../oracles/oracles.hpp"
#include "../support/gradcheck.hpp"
#include "seldist/seldist.hpp"

using namespace seldist;
using testing_support::check_gradient;
using testing_support::random_tensor;
using testing_support::safe_disparity;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

FeaturePyramid pyramid(std::vector<Tensor> levels, PyramidOrigin o = PyramidOrigin::student) {
  return FeaturePyramid{std::move(levels), o};
}

std::vector<Tensor> random_levels(std::mt19937_64& rng, int channels = 4) {
  return {random_tensor(Shape{channels, 4, 8}, rng, -1, 1), random_tensor(Shape{channels, 2, 4}, rng, -1, 1)};
}

// ------------------------------------------------------------------ 1

/// Smooth surrogate whose exact derivative is the straight-through gradient at l0:
/// hard(l0) + soft(l) - soft(l0).
ad::Var ste_surrogate(const ad::Var& l, const Tensor& l0, const Tensor& ster, const Tensor& mon) {
  Tensor diff(ster.shape());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ster[i] - mon[i];
  Tensor offset = oracle::select(l0, ster, mon);
  for (std::size_t i = 0; i < offset.size(); ++i) offset[i] -= ad::sigmoid_scalar(l0[i]) * diff[i];
  return ad::add(ad::mul_const(ad::sigmoid(l), diff), ad::constant(offset));
}

Outcome gradient_correctness() {
  auto rng = make_stream(101, "accept-grad");
  constexpr int kInstances = 20;
  const std::vector<std::string> names{"L_rc", "L_sm", "L_mask", "L_depth", "L_FD", "L_CD", "L_SD"};
  std::vector<double> worst(names.size(), 0.0);
  for (int t = 0; t < kInstances; ++t) {
    const int H = 4 + t % 5, W = 8 + 2 * (t % 5);  // up to 8 x 16
    const int C = 1 + t % 3;
    const Tensor left = random_tensor(Shape{C, H, W}, rng), right = random_tensor(Shape{C, H, W}, rng);
    const Tensor ster = safe_disparity(H, W, rng, 0, 3), mon = safe_disparity(H, W, rng, 0, 3);
    const Tensor l_rc = random_tensor(Shape{1, H, W}, rng, -2, 2), l_sm = random_tensor(Shape{1, H, W}, rng, -2, 2);
    const StereoViews views{left, right};
    auto upd = [&](std::size_t k, double e) { worst[k] = std::max(worst[k], e); };

    // L_rc through the warp, w.r.t. the disparity and w.r.t. the reference image.
    auto rc_d = [&](const std::vector<ad::Var>& v) {
      return reconstruction_loss(ad::constant(left), inverse_warp(ad::constant(right), v[0]));
    };
    upd(0, check_gradient(rc_d, {mon}, 0).rel_error);
    auto rc_img = [&](const std::vector<ad::Var>& v) { return reconstruction_loss(v[0], inverse_warp(v[1], ad::constant(mon))); };
    upd(0, check_gradient(rc_img, {left, right}, 0).rel_error);
    upd(0, check_gradient(rc_img, {left, right}, 1).rel_error);

    auto sm = [&](const std::vector<ad::Var>& v) { return smoothness_loss(left, v[0]); };
    upd(1, check_gradient(sm, {mon}, 0).rel_error);

    // Straight-through path of L_mask, per mask.
    for (int which = 0; which < 2; ++which) {
      const Tensor& l0 = which == 0 ? l_rc : l_sm;
      auto mask = [&](const std::vector<ad::Var>& v) {
        const ad::Var d = ste_surrogate(v[0], l0, ster, mon);
        if (which == 0) {
          return ad::add(reconstruction_loss(ad::constant(left), inverse_warp(ad::constant(right), d)),
                         smoothness_loss(left, ad::constant(oracle::select(l_sm, ster, mon))));
        }
        const ad::Var d_rc = ad::constant(oracle::select(l_rc, ster, mon));
        return ad::add(reconstruction_loss(ad::constant(left), inverse_warp(ad::constant(right), d_rc)),
                       smoothness_loss(left, d));
      };
      const testing_support::GradCheck fd = check_gradient(mask, {l0}, 0);
      // the library's STE gradient must equal the surrogate's exact gradient
      ad::Var lr = ad::parameter(l_rc), ls = ad::parameter(l_sm);
      ad::backward(mask_loss(views, lr, ls, ster, ad::constant(mon)));
      std::vector<ad::Var> sv{ad::parameter(l0)};
      ad::backward(mask(sv));
      const Tensor& lib = which == 0 ? lr.grad() : ls.grad();
      double diff = 0, na = 0;
      for (std::size_t i = 0; i < lib.size(); ++i) {
        diff += (lib[i] - sv[0].grad()[i]) * (lib[i] - sv[0].grad()[i]);
        na += lib[i] * lib[i];
      }
      upd(2, std::max(fd.rel_error, std::sqrt(diff) / std::max(std::sqrt(na), 1e-12)));
    }

    const Tensor m_rc = hard_from_logits(l_rc), m_sm = hard_from_logits(l_sm);
    auto depth = [&](const std::vector<ad::Var>& v) { return depth_loss(views, m_rc, m_sm, ster, v[0]); };
    upd(3, check_gradient(depth, {mon}, 0).rel_error);

    const auto T = random_levels(rng), S = random_levels(rng);
    const std::vector<Tensor> in{T[0], T[1], S[0], S[1]};
    auto ts = [&](auto loss) {
      return [loss](const std::vector<ad::Var>& v) { return loss(VarPyramid{v[0], v[1]}, VarPyramid{v[2], v[3]}); };
    };
    auto fdl = ts([](const VarPyramid& a, const VarPyramid& b) { return fd_loss(a, b); });
    auto cdl = ts([](const VarPyramid& a, const VarPyramid& b) { return cd_loss(a, b); });
    auto sdl = ts([](const VarPyramid& a, const VarPyramid& b) { return sd_loss(a, b); });
    for (std::size_t wrt : {2u, 3u}) {
      upd(4, check_gradient(fdl, in, wrt).rel_error);
      upd(5, check_gradient(cdl, in, wrt).rel_error);
      upd(6, check_gradient(sdl, in, wrt).rel_error);
    }
  }
  Outcome o{true, {}};
  for (std::size_t k = 0; k < names.size(); ++k) {
    o.pass = o.pass && worst[k] < 1e-4;
    o.detail += names[k] + "=" + fmt(worst[k], 2) + " ";
  }
  o.detail += "(max rel err over " + std::to_string(kInstances) + " instances)";
  return o;
}

// ------------------------------------------------------------------ 2

Outcome oracle_equivalence() {
  auto rng = make_stream(102, "accept-oracle");
  constexpr int kInstances = 50;
  double loss_err = 0, metric_err = 0;
  for (int t = 0; t < kInstances; ++t) {
    const int H = 4 + t % 5, W = 6 + t % 11, C = 1 + t % 4;
    const Tensor left = random_tensor(Shape{C, H, W}, rng), right = random_tensor(Shape{C, H, W}, rng);
    const Tensor ster = random_tensor(Shape{1, H, W}, rng, 0, 4), mon = random_tensor(Shape{1, H, W}, rng, 0, 4);
    const Tensor l_rc = random_tensor(Shape{1, H, W}, rng, -2, 2), l_sm = random_tensor(Shape{1, H, W}, rng, -2, 2);
    const Tensor valid = hard_from_logits(random_tensor(Shape{1, H, W}, rng, -1, 3));
    const StereoViews views{left, right};
    auto err = [&](double a, double b) { loss_err = std::max(loss_err, std::abs(a - b)); };

    err(reconstruction_loss(ad::constant(left), ad::constant(right), valid).item(), oracle::reconstruction(left, right, valid));
    err(smoothness_loss(left, ad::constant(mon)).item(), oracle::smoothness(left, mon));
    err(mask_loss(views, ad::constant(l_rc), ad::constant(l_sm), ster, ad::constant(mon)).item(),
        oracle::mask_loss(left, right, l_rc, l_sm, ster, mon));
    const Tensor m_rc = hard_from_logits(l_rc), m_sm = hard_from_logits(l_sm);
    err(depth_loss(views, m_rc, m_sm, ster, ad::constant(mon)).item(), oracle::depth_loss(left, right, m_rc, m_sm, ster, mon));

    const auto T = random_levels(rng, 1 + t % 4), S = random_levels(rng, 1 + t % 4);
    err(fd_loss(pyramid(T), pyramid(S)), oracle::fd(T, S));
    err(cd_loss(pyramid(T), pyramid(S)), oracle::cd(T, S));
    err(sd_loss(pyramid(T), pyramid(S)), oracle::sd(T, S));

    Tensor g = random_tensor(Shape{1, H, W}, rng, 0.5, 95);
    g[static_cast<std::size_t>(t) % g.size()] = 0.0;
    const Tensor d = random_tensor(g.shape(), rng, -1, 100);
    const DepthMetrics m = depth_metrics(d, g);
    const oracle::Metrics om = oracle::metrics(d, g);
    for (auto [a, b] : {std::pair{m.abs_rel, om.abs_rel}, {m.sq_rel, om.sq_rel}, {m.rmse, om.rmse}, {m.rmse_log, om.rmse_log},
                        {m.delta1, om.a1}, {m.delta2, om.a2}, {m.delta3, om.a3}})
      metric_err = std::max(metric_err, std::abs(a - b));
  }
  return {loss_err < 1e-6 && metric_err < 1e-9,
          "max |loss - oracle| = " + fmt(loss_err, 2) + ", max |metric - oracle| = " + fmt(metric_err, 2) + " over " +
              std::to_string(kInstances) + " instances"};
}

// ------------------------------------------------------------------ 3

/// Pixels that are non-occluded, warp-valid and whose whole 3x3 patch is too.
Tensor patch_visible(const Tensor& occlusion, const Tensor& valid) {
  const int H = occlusion.height(), W = occlusion.width();
  Tensor out(Shape{1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool ok = true;
      for (int dy = -1; dy <= 1 && ok; ++dy)
        for (int dx = -1; dx <= 1 && ok; ++dx) {
          const int yy = std::clamp(y + dy, 0, H - 1), xx = std::clamp(x + dx, 0, W - 1);
          ok = occlusion(0, yy, xx) == 0.0 && valid(0, yy, xx) != 0.0;
        }
      out(0, y, x) = ok ? 1.0 : 0.0;
    }
  return out;
}

Outcome warp_soundness() {
  auto rng = make_stream(103, "accept-warp");
  const Tensor img = random_tensor(Shape{3, 8, 16}, rng);
  const WarpResult id = inverse_warp(ad::constant(img), ad::constant(Tensor(Shape{1, 8, 16})));
  const double id_err = max_abs_diff(id.image.value(), img);
  const bool id_valid = id.validity.min() == 1.0;

  // Integer shift is exact; a fractional shift of a linear ramp is exact under bilinear sampling.
  double shift_err = 0.0;
  for (int k : {1, 3}) {
    const WarpResult w = inverse_warp(ad::constant(img), ad::constant(Tensor(Shape{1, 8, 16}, k)));
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = k; x < 16; ++x) shift_err = std::max(shift_err, std::abs(w.image.value()(c, y, x) - img(c, y, x - k)));
  }
  Tensor ramp(Shape{1, 8, 16});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) ramp(0, y, x) = 0.1 * x + 0.02 * y;
  const double frac = 2.375;
  const WarpResult wr = inverse_warp(ad::constant(ramp), ad::constant(Tensor(Shape{1, 8, 16}, frac)));
  double ramp_err = 0.0;
  for (int y = 0; y < 8; ++y)
    for (int x = 3; x < 16; ++x) ramp_err = std::max(ramp_err, std::abs(wr.image.value()(0, y, x) - (0.1 * (x - frac) + 0.02 * y)));

  double worst_scene = 0.0;
  for (int i = 0; i < 100; ++i) {
    const StereoSample s = generate_scene(derive_seed(103, "scene", static_cast<std::uint64_t>(i)), 64, 128);
    const WarpResult w = inverse_warp(ad::constant(s.right), ad::constant(*s.gt_disparity));
    const Tensor keep = patch_visible(*s.occlusion, w.validity);
    worst_scene = std::max(worst_scene, reconstruction_loss(ad::constant(s.left), w.image, keep).item());
  }
  return {id_err < 1e-6 && id_valid && shift_err < 1e-12 && ramp_err < 1e-9 && worst_scene < 0.01,
          "identity " + fmt(id_err, 2) + ", integer shift " + fmt(shift_err, 2) + ", fractional ramp " + fmt(ramp_err, 2) +
              ", worst generator warp-identity loss over 100 scenes " + fmt(worst_scene, 3)};
}

// ------------------------------------------------------------------ 4

Outcome mask_oracle_behaviour() {
  constexpr int H = 64, W = 128, kSteps = 500, kScenes = 10, kFactor = 4;
  const Rect box{40, 16, 64, 32};  // 25% of the image
  double corrupted = 0, rejected = 0, compared = 0, agreed = 0;
  for (int sc = 0; sc < kScenes; ++sc) {
    const StereoSample s = generate_scene(derive_seed(104, "scene", static_cast<std::uint64_t>(sc)), H, W);
    const Tensor& gt = *s.gt_disparity;
    const Tensor proxy = corrupt_proxy(gt, CorruptionSpec{{box}, CorruptionMode::offset, 4.0, 0});
    // Mask logits as a free field at quarter resolution, bilinearly upsampled.
    std::vector<Tensor> field(2, Tensor(Shape{1, H / kFactor, W / kFactor}, 1.0));
    AdamState adam;
    for (int it = 0; it < kSteps; ++it) {
      ad::Var f_rc = ad::parameter(field[0]), f_sm = ad::parameter(field[1]);
      const ad::Var loss = mask_loss(StereoViews{s.left, s.right}, ad::resize_bilinear(f_rc, H, W),
                                     ad::resize_bilinear(f_sm, H, W), proxy, ad::constant(gt));
      ad::backward(loss);
      adam_step(field, {f_rc.grad(), f_sm.grad()}, adam, 0.02);
    }
    const Tensor m_rc = hard_from_logits(ad::resize_bilinear(field[0], H, W));
    const Tensor orc = oracle_mask(s.left, s.right, proxy, gt).hard;
    const Tensor tex = textured_pixels(s.left);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (tex[i] == 0.0) continue;
        if (box.contains(x, y)) ++corrupted, rejected += m_rc[i] == 0.0;
        if ((*s.occlusion)[i] == 0.0) ++compared, agreed += m_rc[i] == orc[i];
      }
  }
  const double rej = rejected / corrupted, agree = agreed / compared;
  return {rej >= 0.90 && agree >= 0.85, "m_rc = 0 on " + fmt(rej) + " of corrupted textured pixels, oracle agreement " +
                                            fmt(agree) + " (" + std::to_string(kScenes) + " scenes, " +
                                            std::to_string(kSteps) + " steps)"};
}

// ------------------------------------------------------------------ 5

struct Budget {
  int train = 128, test = 16, epochs = 20;
};

TrainConfig desk_config(DistillMode mode, std::uint64_t seed, int epochs) {
  TrainConfig c;
  c.image_height = 64;
  c.image_width = 128;
  c.base_channels = 8;
  c.batch_size = 4;
  c.epochs = epochs;
  c.lr = 1e-3;
  c.lr_halve_epochs = {epochs * 6 / 10, epochs * 8 / 10};
  c.weights.lambda_ts = 0.0;
  c.distill_mode = mode;
  c.seed = seed;
  return c;
}

Outcome selective_beats_direct(const Budget& b) {
  std::vector<StereoSample> train_set, test_set;
  for (int i = 0; i < b.train; ++i) train_set.push_back(benchmark_sample(derive_seed(105, "train", static_cast<std::uint64_t>(i)), 64, 128));
  for (int i = 0; i < b.test; ++i) test_set.push_back(benchmark_sample(derive_seed(105, "test", static_cast<std::uint64_t>(i)), 64, 128));
  for (std::size_t i = 0; i < train_set.size(); ++i) train_set[i].id = scene_id(i);
  const SyntheticTeacher teacher(8);
  std::vector<double> gains;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    double abs_rel[2];
    for (int k = 0; k < 2; ++k) {
      const TrainConfig cfg = desk_config(k == 0 ? DistillMode::direct : DistillMode::selective, seed, b.epochs);
      MonoNet net(MonoNetConfig::from(cfg));
      train(net, teacher, train_set, cfg);
      abs_rel[k] = evaluate(net, test_set).overall.abs_rel;
    }
    gains.push_back((abs_rel[0] - abs_rel[1]) / abs_rel[0]);
    detail += "seed " + std::to_string(seed) + ": direct " + fmt(abs_rel[0]) + " selective " + fmt(abs_rel[1]) + "; ";
  }
  std::sort(gains.begin(), gains.end());
  return {gains[1] >= 0.03, detail + "median relative gain " + fmt(gains[1])};
}

// ------------------------------------------------------------------ 6

Outcome ts_properties() {
  auto rng = make_stream(106, "accept-ts");
  bool ok = true;
  std::string failed;
  auto check = [&](bool c, const std::string& what) {
    if (!c) ok = false, failed += what + " ";
  };
  for (int t = 0; t < 10; ++t) {
    const auto T = random_levels(rng), S = random_levels(rng);
    // SD under positive rescaling (powers of two keep the normalised Gram bit-exact)
    for (double c : {0.25, 2.0, 8.0}) {
      std::vector<Tensor> scaled = S;
      for (auto& l : scaled) l *= c;
      check(sd_loss(pyramid(S), pyramid(scaled)) == 0.0, "sd-scale");
      check(sd_loss(pyramid(T), pyramid(scaled)) == sd_loss(pyramid(T), pyramid(S)), "sd-scale-pair");
    }
    // zero when statistics match
    check(fd_loss(pyramid(T), pyramid(T)) == 0.0, "fd-zero");
    check(cd_loss(pyramid(T), pyramid(T)) == 0.0, "cd-zero");
    check(sd_loss(pyramid(T), pyramid(T)) == 0.0, "sd-zero");
    // CD only sees channel means: a spatial reversal keeps them
    std::vector<Tensor> rev = T;
    for (auto& l : rev) {
      Tensor r = l;
      for (int c = 0; c < l.channels(); ++c)
        for (int y = 0; y < l.height(); ++y)
          for (int x = 0; x < l.width(); ++x) r(c, y, x) = l(c, l.height() - 1 - y, l.width() - 1 - x);
      l = r;
    }
    check(cd_loss(pyramid(T), pyramid(rev)) < 1e-15, "cd-permutation");
    check(fd_loss(pyramid(T), pyramid(rev)) > 0.0, "fd-permutation");
    // and nonzero when they differ
    check(fd_loss(pyramid(T), pyramid(S)) > 0.0, "fd-nonzero");
    check(cd_loss(pyramid(T), pyramid(S)) > 0.0, "cd-nonzero");
    check(sd_loss(pyramid(T), pyramid(S)) > 0.0, "sd-nonzero");

    VarPyramid tv{ad::parameter(T[0]), ad::parameter(T[1])}, sv{ad::parameter(S[0]), ad::parameter(S[1])};
    ad::backward(ts_loss(tv, sv, LossWeights{}));
    check(!tv[0].has_grad() && !tv[1].has_grad(), "teacher-grad");
    check(sv[0].has_grad() && sv[0].grad().max() - sv[0].grad().min() > 0.0, "student-grad");
  }
  return {ok, ok ? "SD scale-invariant, FD/CD/SD zero exactly at matching statistics, teacher gradient absent"
                 : "failed: " + failed};
}

// ------------------------------------------------------------------ 7

Outcome schedule_and_determinism(const fs::path& work) {
  const TrainConfig defaults;
  bool lr_ok = true;
  for (auto [e, want] : {std::pair{0, 1e-4}, {20, 5e-5}, {35, 2.5e-5}, {45, 1.25e-5}}) lr_ok = lr_ok && lr_at(e, defaults) == want;

  TrainConfig c = desk_config(DistillMode::selective, 7, 3);
  c.image_height = 32;
  c.image_width = 64;
  c.batch_size = 2;
  c.weights.lambda_ts = 1e-4;
  std::vector<StereoSample> data;
  for (int i = 0; i < 8; ++i) {
    data.push_back(benchmark_sample(derive_seed(107, "det", static_cast<std::uint64_t>(i)), 32, 64));
    data.back().id = scene_id(static_cast<std::uint64_t>(i));
  }
  const SyntheticTeacher teacher(c.base_channels);
  auto same = [](const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    for (std::size_t k = 0; k < a.size(); ++k)
      if (!std::equal(a[k].data(), a[k].data() + a[k].size(), b[k].data())) return false;
    return a.size() == b.size();
  };

  TrainOptions ten;
  ten.max_steps = 10;
  MonoNet a(MonoNetConfig::from(c)), b(MonoNetConfig::from(c));
  train(a, teacher, data, c, ten);
  train(b, teacher, data, c, ten);
  const bool det = same(a.parameters().values(), b.parameters().values());

  MonoNet full(MonoNetConfig::from(c));
  train(full, teacher, data, c);
  const fs::path dir = work / "resume";
  fs::remove_all(dir);
  TrainOptions first;
  first.out_dir = dir;
  first.max_steps = 6;  // mid-epoch
  MonoNet part(MonoNetConfig::from(c));
  train(part, teacher, data, c, first);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.bin");
  MonoNet resumed = network_from_checkpoint(ck);
  TrainOptions second;
  second.resume = ck;
  train(resumed, teacher, data, c, second);
  const bool resume_ok = same(full.parameters().values(), resumed.parameters().values());
  return {lr_ok && det && resume_ok, std::string("lr_at ") + (lr_ok ? "ok" : "wrong") + ", 10-step replay " +
                                         (det ? "bitwise identical" : "differs") + ", resume at epoch " +
                                         std::to_string(ck.epoch) + " step " + std::to_string(ck.step_in_epoch) + " " +
                                         (resume_ok ? "matches" : "differs")};
}

// ------------------------------------------------------------------ 8

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SELDIST_CLI) + " " + args + " >> " + log.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome end_to_end(const fs::path& work, const fs::path& config) {
  const fs::path dir = work / "e2e", data = dir / "data", runs = dir / "run", log = dir / "log.txt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  if (run("gen-data --out " + data.string() + " --n 128 --n-test 16 --seed 8", log) != 0) return {false, "gen-data failed"};
  if (run("train --config " + config.string() + " --data " + data.string() + " --out " + runs.string() + " --epochs 5", log) != 0)
    return {false, "train failed, see " + log.string()};
  const fs::path report = dir / "eval.csv";
  if (run("eval --ckpt " + (runs / "checkpoint.bin").string() + " --data " + data.string() + " --out " + report.string(), log) != 0)
    return {false, "eval failed"};
  const CsvTable t = read_csv(report.string());
  const std::vector<double>& all = t.rows.back();
  bool finite = true;
  for (std::size_t k = 1; k < all.size(); ++k) finite = finite && std::isfinite(all[k]);
  const double final_abs_rel = all[static_cast<std::size_t>(t.column("abs_rel"))];

  // The untrained network is rebuilt from the same config and seed.
  const Checkpoint ck = load_checkpoint(runs / "checkpoint.bin");
  const MonoNet init(MonoNetConfig::from(ck.config));
  const double init_abs_rel = evaluate(init, load_dataset(data, "test", ProxyMode::synthetic)).overall.abs_rel;
  const double gain = (init_abs_rel - final_abs_rel) / init_abs_rel;
  return {finite && gain >= 0.5, "abs_rel " + fmt(init_abs_rel) + " -> " + fmt(final_abs_rel) + " (" + fmt(100 * gain, 3) +
                                     "% better), metrics finite: " + (finite ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work", config = SELDIST_DESK_CONFIG;
  std::vector<int> only, expect_fail;
  Budget budget;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--config", config, "desk config used by the end-to-end run");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--expect-fail", expect_fail, "known failures: still printed as FAIL, but do not fail the run")
      ->delimiter(',');
  app.add_option("--c5-train", budget.train, "criterion 5 training samples");
  app.add_option("--c5-epochs", budget.epochs, "criterion 5 epochs")->check(CLI::Range(1, 20));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  const std::set<int> chosen(only.begin(), only.end()), known(expect_fail.begin(), expect_fail.end());

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_correctness},
      {2, oracle_equivalence},
      {3, warp_soundness},
      {4, mask_oracle_behaviour},
      {5, [&] { return selective_beats_direct(budget); }},
      {6, ts_properties},
      {7, [&] { return schedule_and_determinism(work); }},
      {8, [&] { return end_to_end(work, config); }},
  };
  const double limits[] = {0, 120, 1e9, 1e9, 600, 3600, 60, 1e9, 1e9};
  bool ok = true;
  for (const auto& [id, fn] : criteria) {
    if (!chosen.empty() && !chosen.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limits[id]) {
      o.pass = false;
      o.detail += "; over the " + fmt(limits[id]) + " s limit";
    }
    // A listed failure that starts passing is flagged too, so the list cannot go stale.
    const bool expected = known.count(id) > 0;
    ok = ok && o.pass != expected;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << " [" << fmt(secs, 3)
              << " s]" << (expected ? (o.pass ? "  (listed as a known failure: update --expect-fail)" : "  (known failure)") : "")
              << std::endl;
  }
  return ok ? 0 : 1;
}
