#pragma once

// Synthetic layered stereo scenes with analytic ground truth, proxy corruption,
// augmentation, and on-disk dataset ingestion.
//
// A scene is a textured background plus fronto-parallel boxes. Every layer has
// a constant disparity; each layer's texture lives in its own left-view
// coordinates, so a point at left column u shows up in the right view at u - d.
// Both views are rendered analytically from the continuous textures.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "seldist/core/config.hpp"
#include "seldist/core/rng.hpp"
#include "seldist/core/sample.hpp"
#include "seldist/io/png.hpp"

namespace seldist {

struct SceneParams {
  int min_boxes = 1;
  int max_boxes = 3;
  // Disparity ranges as fractions of the image width.
  double background_min = 0.015, background_max = 0.04;
  double box_min = 0.05, box_max = 0.11;
  double texture_amplitude = 0.18;
  double flat_box_probability = 0.0;  // flat boxes exercise the zero-variance ZNCC path
  double texture_cell = 8.0;    // lattice spacing of the noise, px
  double texture_detail = 0.0;  // weight of an extra octave at half the cell size
  double disparity_quantum = 1.0;
};

struct SceneLayer {
  Rect rect;  // in left-view pixels; the background covers everything
  double disparity = 0.0;
  std::array<double, 3> base{};
  double amplitude = 0.0;
  double cell = 8.0, detail = 0.0;
  std::uint64_t texture_seed = 0;
  bool background = false;
};

struct SceneLayout {
  std::uint64_t seed = 0;
  int height = 0, width = 0;
  std::vector<SceneLayer> layers;  // background first, then boxes far to near
};

namespace detail {

inline double lattice_value(std::uint64_t seed, long long ix, long long iy, int c) {
  const std::uint64_t h = derive_seed(seed, "lattice", static_cast<std::uint64_t>(ix) * 4 + static_cast<std::uint64_t>(c),
                                      static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
}

inline double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

inline double value_noise(std::uint64_t seed, double u, double v, double cell, int c) {
  const double fu = u / cell, fv = v / cell;
  const double bu = std::floor(fu), bv = std::floor(fv);
  const auto ix = static_cast<long long>(bu), iy = static_cast<long long>(bv);
  const double tu = smooth(fu - bu), tv = smooth(fv - bv);
  const double a = lattice_value(seed, ix, iy, c), b = lattice_value(seed, ix + 1, iy, c);
  const double d = lattice_value(seed, ix, iy + 1, c), e = lattice_value(seed, ix + 1, iy + 1, c);
  return (a * (1 - tu) + b * tu) * (1 - tv) + (d * (1 - tu) + e * tu) * tv;
}

inline double layer_colour(const SceneLayer& l, double u, double v, int c) {
  double val = l.base[static_cast<std::size_t>(c)];
  if (l.amplitude > 0.0) {
    double n = value_noise(l.texture_seed, u, v, l.cell, c);
    if (l.detail > 0.0) n += l.detail * value_noise(l.texture_seed ^ 0x9E37ULL, u, v, l.cell / 2, c);
    val += l.amplitude * n / (1.0 + l.detail);
  }
  return std::clamp(val, 0.0, 1.0);
}

// Continuous horizontal coverage of a box: pixel centres x0..x0+w-1.
inline bool covers(const SceneLayer& l, double u, int y) {
  if (l.background) return true;
  return y >= l.rect.y && y < l.rect.y + l.rect.h && u >= l.rect.x - 0.5 && u < l.rect.x + l.rect.w - 0.5;
}

inline double quantize(double v, double q) { return q > 0.0 ? std::round(v / q) * q : v; }

}  // namespace detail

inline std::string scene_id(std::uint64_t seed) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << seed;
  return os.str();
}

inline SceneLayout generate_layout(std::uint64_t seed, int H, int W, const SceneParams& p = {}) {
  if (H <= 0 || W <= 0 || H % 16 != 0 || W % 16 != 0) {
    throw std::invalid_argument("generate_scene: H and W must be positive multiples of 16");
  }
  auto rng = make_stream(seed, "scene");
  SceneLayout s{seed, H, W, {}};
  const double dlo = p.background_min * W, dhi = p.box_max * W;
  auto colour_for = [&](double d) {
    // Near layers lean warm, far layers lean cool.
    const double t = std::clamp((d - dlo) / std::max(dhi - dlo, 1e-9), 0.0, 1.0);
    const std::array<double, 3> cool{0.25, 0.40, 0.70}, warm{0.80, 0.45, 0.20};
    std::array<double, 3> b{};
    for (int c = 0; c < 3; ++c) {
      b[static_cast<std::size_t>(c)] =
          cool[static_cast<std::size_t>(c)] * (1 - t) + warm[static_cast<std::size_t>(c)] * t + uniform(rng, -0.05, 0.05);
    }
    return b;
  };

  SceneLayer bg;
  bg.background = true;
  bg.rect = Rect{0, 0, W, H};
  bg.disparity = detail::quantize(uniform(rng, p.background_min * W, p.background_max * W), p.disparity_quantum);
  bg.base = colour_for(bg.disparity);
  bg.amplitude = p.texture_amplitude;
  bg.cell = p.texture_cell;
  bg.detail = p.texture_detail;
  bg.texture_seed = derive_seed(seed, "texture", 0);
  s.layers.push_back(bg);

  const int n = p.min_boxes + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(p.max_boxes - p.min_boxes + 1)));
  std::vector<SceneLayer> boxes;
  for (int k = 0; k < n; ++k) {
    SceneLayer b;
    b.disparity = detail::quantize(uniform(rng, p.box_min * W, p.box_max * W), p.disparity_quantum);
    const int bw = std::max(4, static_cast<int>(uniform(rng, W / 6.0, W / 3.0)));
    const int bh = std::max(4, static_cast<int>(uniform(rng, H / 4.0, H / 2.0)));
    // Keep boxes clear of the left border so their right-view footprint stays inside.
    const int xmin = static_cast<int>(std::ceil(b.disparity)) + 2;
    const int xmax = std::max(xmin, W - bw - 2);
    b.rect = Rect{xmin + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(xmax - xmin + 1))),
                  1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(std::max(1, H - bh - 2)))), bw, bh};
    b.base = colour_for(b.disparity);
    const bool flat = uniform01(rng) < p.flat_box_probability;
    b.amplitude = flat ? 0.0 : p.texture_amplitude;
    b.cell = p.texture_cell;
    b.detail = p.texture_detail;
    b.texture_seed = derive_seed(seed, "texture", static_cast<std::uint64_t>(k + 1));
    boxes.push_back(b);
  }
  std::stable_sort(boxes.begin(), boxes.end(), [](const SceneLayer& a, const SceneLayer& b) { return a.disparity < b.disparity; });
  for (auto& b : boxes) s.layers.push_back(b);
  return s;
}

/// Renders both views, the analytic left-view disparity and the occlusion flags
/// (1 where the left pixel is not visible in the right view).
inline StereoSample render_scene(const SceneLayout& s) {
  const int H = s.height, W = s.width;
  StereoSample out;
  out.id = scene_id(s.seed);
  out.left = Tensor(Shape{3, H, W});
  out.right = Tensor(Shape{3, H, W});
  Tensor gt(Shape{1, H, W});
  Tensor occ(Shape{1, H, W});
  // Layers are sorted far to near, so the last covering layer is in front.
  auto front = [&](double u, int y, bool right_view) -> const SceneLayer& {
    for (auto it = s.layers.rbegin(); it != s.layers.rend(); ++it) {
      const double ul = right_view ? u + it->disparity : u;
      if (detail::covers(*it, ul, y)) return *it;
    }
    return s.layers.front();
  };
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const SceneLayer& l = front(x, y, false);
      for (int c = 0; c < 3; ++c) out.left(c, y, x) = detail::layer_colour(l, x, y, c);
      gt(0, y, x) = l.disparity;
      const double xr = x - l.disparity;
      const SceneLayer& seen = front(xr, y, true);
      occ(0, y, x) = (xr < 0.0 || &seen != &l) ? 1.0 : 0.0;

      const SceneLayer& r = front(x, y, true);
      for (int c = 0; c < 3; ++c) out.right(c, y, x) = detail::layer_colour(r, x + r.disparity, y, c);
    }
  }
  out.gt_disparity = gt;
  out.proxy_disparity = gt;
  out.occlusion = occ;
  return out;
}

inline StereoSample generate_scene(std::uint64_t seed, int H, int W, const SceneParams& p = {}) {
  return render_scene(generate_layout(seed, H, W, p));
}

// ---------------------------------------------------------------- corruption

inline void validate_corruption(const CorruptionSpec& spec, int H, int W) {
  for (const auto& r : spec.regions) {
    if (r.w < 0 || r.h < 0 || r.x < 0 || r.y < 0 || r.x + r.w > W || r.y + r.h > H) {
      throw std::invalid_argument("corrupt_proxy: region (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                                  std::to_string(r.w) + "," + std::to_string(r.h) + ") out of bounds");
    }
  }
}

/// Box blur with edge clamping.
inline Tensor box_blur(const Tensor& d, int k) {
  const int H = d.height(), W = d.width(), r = k / 2;
  Tensor out(d.shape());
  for (int c = 0; c < d.channels(); ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            acc += d(c, std::clamp(y + dy, 0, H - 1), std::clamp(x + dx, 0, W - 1));
        out(c, y, x) = acc / (k * k);
      }
  return out;
}

inline Tensor corrupt_proxy(const Tensor& gt, const CorruptionSpec& spec) {
  validate_corruption(spec, gt.height(), gt.width());
  Tensor out = gt;
  const Tensor blurred = spec.mode == CorruptionMode::blur ? box_blur(gt, 5) : Tensor{};
  const double wmax = gt.width();
  for (const auto& r : spec.regions)
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) {
        double& v = out(0, y, x);
        switch (spec.mode) {
          case CorruptionMode::zero: v = 0.0; break;
          case CorruptionMode::blur: v = blurred(0, y, x); break;
          case CorruptionMode::offset: v = std::clamp(gt(0, y, x) + spec.delta, 0.0, wmax); break;
        }
      }
  return out;
}

struct BenchmarkParams {
  SceneParams scene{};
  CorruptionMode mode = CorruptionMode::offset;
  double delta = 4.0;
  double box_corruption_probability = 0.7;
};

/// Scene whose proxy is damaged on a random subset of its boxes, so the proxy
/// failures correlate with image content.
inline StereoSample benchmark_sample(std::uint64_t seed, int H, int W, const BenchmarkParams& p = {}) {
  const SceneLayout layout = generate_layout(seed, H, W, p.scene);
  StereoSample s = render_scene(layout);
  CorruptionSpec spec;
  spec.mode = p.mode;
  spec.delta = p.delta;
  spec.seed = seed;
  auto rng = make_stream(seed, "corruption");
  for (const auto& l : layout.layers) {
    if (l.background) continue;
    if (uniform01(rng) < p.box_corruption_probability) spec.regions.push_back(l.rect);
  }
  s.proxy_disparity = corrupt_proxy(*s.gt_disparity, spec);
  s.corruption = spec;
  return s;
}

// -------------------------------------------------------------- augmentation

struct AugmentParams {
  bool flip = false;
  std::array<double, 3> gains{1.0, 1.0, 1.0};
};

inline AugmentParams draw_augment(std::uint64_t seed) {
  auto rng = make_stream(seed, "augment");
  AugmentParams a;
  a.flip = uniform01(rng) < 0.5;
  for (auto& g : a.gains) g = uniform(rng, 0.9, 1.1);
  return a;
}

inline Tensor mirror(const Tensor& t) {
  Tensor out(t.shape());
  const int W = t.width();
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < W; ++x) out(c, y, x) = t(c, y, W - 1 - x);
  return out;
}

/// Re-expresses a left-view disparity in right-view pixels by forward splatting
/// (nearest pixel, larger disparity wins). Holes are disocclusions and take the
/// smaller of the nearest valid neighbours; `holes` marks them.
inline Tensor left_to_right_disparity(const Tensor& d, Tensor* holes = nullptr) {
  const int H = d.height(), W = d.width();
  Tensor out(d.shape(), -1.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double v = d(0, y, x);
      if (v <= 0.0) continue;
      const long xr = std::lround(std::floor(x - v + 0.5));
      if (xr < 0 || xr >= W) continue;
      out(0, y, static_cast<int>(xr)) = std::max(out(0, y, static_cast<int>(xr)), v);
    }
  if (holes) *holes = Tensor(d.shape());
  for (int y = 0; y < H; ++y) {
    std::vector<double> row(static_cast<std::size_t>(W));
    for (int x = 0; x < W; ++x) row[static_cast<std::size_t>(x)] = out(0, y, x);
    for (int x = 0; x < W; ++x) {
      if (row[static_cast<std::size_t>(x)] >= 0.0) continue;
      double lv = -1.0, rv = -1.0;
      for (int k = x - 1; k >= 0; --k)
        if (row[static_cast<std::size_t>(k)] >= 0.0) { lv = row[static_cast<std::size_t>(k)]; break; }
      for (int k = x + 1; k < W; ++k)
        if (row[static_cast<std::size_t>(k)] >= 0.0) { rv = row[static_cast<std::size_t>(k)]; break; }
      double fill = 0.0;
      if (lv >= 0.0 && rv >= 0.0) fill = std::min(lv, rv);
      else if (lv >= 0.0) fill = lv;
      else if (rv >= 0.0) fill = rv;
      out(0, y, x) = fill;
      if (holes) (*holes)(0, y, x) = 1.0;
    }
  }
  return out;
}

/// Horizontal flip swaps the views (so the new left is the mirrored right image and
/// disparities stay positive), then applies the same per-channel gains to both views.
inline StereoSample apply_augment(const StereoSample& s, const AugmentParams& a) {
  StereoSample out = s;
  if (a.flip) {
    out.left = mirror(s.right);
    out.right = mirror(s.left);
    if (!s.proxy_disparity.empty()) out.proxy_disparity = mirror(left_to_right_disparity(s.proxy_disparity));
    if (s.gt_disparity) {
      Tensor holes;
      out.gt_disparity = mirror(left_to_right_disparity(*s.gt_disparity, &holes));
      out.occlusion = mirror(holes);
    } else {
      out.occlusion.reset();
    }
    if (s.corruption) {
      CorruptionSpec c = *s.corruption;
      for (auto& r : c.regions) r.x = s.width() - r.x - r.w;  // approximate: ignores the view shift
      out.corruption = c;
    }
  }
  for (int c = 0; c < 3; ++c) {
    const double g = a.gains[static_cast<std::size_t>(c)];
    if (g == 1.0) continue;
    for (Tensor* img : {&out.left, &out.right}) {
      double* p = img->channel(c);
      for (std::size_t i = 0; i < img->shape().plane(); ++i) p[i] = std::clamp(p[i] * g, 0.0, 1.0);
    }
  }
  return out;
}

inline StereoSample augment(const StereoSample& s, std::uint64_t seed) { return apply_augment(s, draw_augment(seed)); }

// ------------------------------------------------------------- on-disk layout
//
//   root/calib.txt                       focal_px=..., baseline_m=...
//   root/{split}/left/{id}.png           8-bit RGB
//   root/{split}/right/{id}.png
//   root/{split}/proxy/{id}.png          16-bit, value / 256 = pixels
//   root/{split}/gt/{id}.png             optional, same encoding
//   root/{split}/occ/{id}.png            optional occlusion mask (tests only)
//   root/{split}/meta/{id}.json          optional corruption metadata

namespace fs = std::filesystem;

inline void write_calib(const fs::path& path, const CameraRig& rig) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "focal_px=" << detail::format_double(rig.focal_length_px) << "\n";
  f << "baseline_m=" << detail::format_double(rig.baseline_m) << "\n";
}

inline CameraRig read_calib(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing calibration file: " + path.string());
  CameraRig rig;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = detail::trim(line.substr(0, eq));
    const double v = detail::parse_double(key, detail::trim(line.substr(eq + 1)));
    if (key == "focal_px") rig.focal_length_px = v;
    else if (key == "baseline_m") rig.baseline_m = v;
  }
  rig.validate();
  return rig;
}

inline nlohmann::json corruption_to_json(const CorruptionSpec& c) {
  nlohmann::json j;
  j["mode"] = to_string(c.mode);
  j["delta"] = c.delta;
  j["seed"] = c.seed;
  j["regions"] = nlohmann::json::array();
  for (const auto& r : c.regions) j["regions"].push_back({r.x, r.y, r.w, r.h});
  return j;
}

inline CorruptionSpec corruption_from_json(const nlohmann::json& j) {
  CorruptionSpec c;
  c.mode = corruption_mode_from(j.at("mode").get<std::string>());
  c.delta = j.at("delta").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& r : j.at("regions")) c.regions.push_back(Rect{r.at(0), r.at(1), r.at(2), r.at(3)});
  return c;
}

inline void write_sample(const fs::path& split_dir, const StereoSample& s) {
  for (const char* sub : {"left", "right", "proxy", "gt", "occ", "meta"}) fs::create_directories(split_dir / sub);
  const std::string name = s.id + ".png";
  io::write_png((split_dir / "left" / name).string(), io::tensor_to_image(s.left));
  io::write_png((split_dir / "right" / name).string(), io::tensor_to_image(s.right));
  if (!s.proxy_disparity.empty()) io::write_disparity_png((split_dir / "proxy" / name).string(), s.proxy_disparity);
  if (s.gt_disparity) io::write_disparity_png((split_dir / "gt" / name).string(), *s.gt_disparity);
  if (s.occlusion) io::write_mask_png((split_dir / "occ" / name).string(), *s.occlusion);
  if (s.corruption) {
    nlohmann::json meta;
    meta["id"] = s.id;
    meta["corruption"] = corruption_to_json(*s.corruption);
    std::ofstream f(split_dir / "meta" / (s.id + ".json"));
    if (!f) throw std::runtime_error("cannot write metadata for " + s.id);
    f << meta.dump(2) << "\n";
  }
}

inline void write_dataset(const fs::path& root, const std::string& split, const std::vector<StereoSample>& samples,
                          const CameraRig& rig = {}) {
  fs::create_directories(root / split);
  if (!fs::exists(root / "calib.txt")) write_calib(root / "calib.txt", rig);
  for (const auto& s : samples) write_sample(root / split, s);
}

/// Sample ids of a split in lexicographic order (from left/*.png).
inline std::vector<std::string> list_ids(const fs::path& split_dir) {
  std::vector<std::string> ids;
  const fs::path left = split_dir / "left";
  if (!fs::exists(left)) return ids;
  for (const auto& e : fs::directory_iterator(left)) {
    if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline StereoSample load_sample(const fs::path& split_dir, const std::string& id, const CameraRig& rig, ProxyMode mode) {
  auto need = [](const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("dataset layout: missing " + p.string());
    return p.string();
  };
  const std::string name = id + ".png";
  StereoSample s;
  s.id = id;
  s.rig = rig;
  s.left = io::image_to_tensor(io::read_png(need(split_dir / "left" / name)));
  s.right = io::image_to_tensor(io::read_png(need(split_dir / "right" / name)));
  const fs::path proxy = split_dir / "proxy" / name;
  if (mode == ProxyMode::file) s.proxy_disparity = io::read_disparity_png(need(proxy));
  else if (fs::exists(proxy)) s.proxy_disparity = io::read_disparity_png(proxy.string());
  if (fs::exists(split_dir / "gt" / name)) s.gt_disparity = io::read_disparity_png((split_dir / "gt" / name).string());
  if (fs::exists(split_dir / "occ" / name)) s.occlusion = io::read_mask_png((split_dir / "occ" / name).string());
  const fs::path meta = split_dir / "meta" / (id + ".json");
  if (fs::exists(meta)) {
    std::ifstream f(meta);
    const auto j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("malformed metadata: " + meta.string());
    if (j.contains("corruption")) s.corruption = corruption_from_json(j["corruption"]);
  }
  s.validate();
  return s;
}

/// Loads a split eagerly, ordered by id. A split without images yields an empty list.
inline std::vector<StereoSample> load_dataset(const fs::path& root, const std::string& split,
                                              ProxyMode mode = ProxyMode::file) {
  const fs::path dir = root / split;
  std::vector<StereoSample> out;
  const auto ids = list_ids(dir);
  if (ids.empty()) return out;
  const CameraRig rig = fs::exists(dir / "calib.txt") ? read_calib(dir / "calib.txt") : read_calib(root / "calib.txt");
  for (const auto& id : ids) out.push_back(load_sample(dir, id, rig, mode));
  return out;
}

}  // namespace seldist
