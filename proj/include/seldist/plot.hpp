#pragma once

// Minimal raster plots: loss curves from a metrics CSV and stacked
// image / disparity / mask panels.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seldist/core/tensor.hpp"

namespace seldist {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty CSV: " + path);
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) t.columns.push_back(c);
  }
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string c;
    std::vector<double> row;
    while (std::getline(ss, c, ',')) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        row.push_back(std::nan(""));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

using Rgb = std::array<double, 3>;

inline Rgb colormap(double t) {
  static const Rgb anchors[] = {{0.27, 0.00, 0.33}, {0.23, 0.32, 0.55}, {0.13, 0.57, 0.55}, {0.37, 0.79, 0.38}, {0.99, 0.91, 0.14}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  Rgb c{};
  for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(k)] = anchors[i][static_cast<std::size_t>(k)] * (1 - f) + anchors[i + 1][static_cast<std::size_t>(k)] * f;
  return c;
}

inline void put(Tensor& img, int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  for (int k = 0; k < 3; ++k) img(k, y, x) = c[static_cast<std::size_t>(k)];
}

inline void line(Tensor& img, int x0, int y0, int x1, int y1, const Rgb& c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) err += dy, x0 += sx;
    if (e2 <= dx) err += dx, y0 += sy;
  }
}

/// One curve per named column against the first column, log10 y axis.
inline Tensor plot_loss_curves(const CsvTable& t, const std::vector<std::string>& series, int H = 240, int W = 400) {
  Tensor img(Shape{3, H, W}, 1.0);
  const int left = 30, right = W - 10, top = 10, bottom = H - 25;
  const Rgb axis{0.2, 0.2, 0.2};
  line(img, left, bottom, right, bottom, axis);
  line(img, left, top, left, bottom, axis);
  if (t.rows.empty()) return img;
  double ymin = 1e300, ymax = -1e300, xmin = 1e300, xmax = -1e300;
  std::vector<int> cols;
  for (const auto& s : series) {
    const int c = t.column(s);
    if (c < 0) throw std::invalid_argument("plot: no column " + s);
    cols.push_back(c);
  }
  for (const auto& r : t.rows) {
    xmin = std::min(xmin, r[0]), xmax = std::max(xmax, r[0]);
    for (int c : cols)
      if (r[static_cast<std::size_t>(c)] > 0 && std::isfinite(r[static_cast<std::size_t>(c)])) {
        const double v = std::log10(r[static_cast<std::size_t>(c)]);
        ymin = std::min(ymin, v), ymax = std::max(ymax, v);
      }
  }
  if (ymin > ymax) return img;
  if (ymax - ymin < 1e-9) ymin -= 0.5, ymax += 0.5;
  if (xmax - xmin < 1e-9) xmax = xmin + 1;
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left))); };
  auto py = [&](double v) { return bottom - static_cast<int>(std::lround((v - ymin) / (ymax - ymin) * (bottom - top))); };
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const Rgb c = colormap(cols.size() == 1 ? 0.3 : static_cast<double>(k) / (cols.size() - 1) * 0.85);
    int lx = -1, ly = -1;
    for (const auto& r : t.rows) {
      const double v = r[static_cast<std::size_t>(cols[k])];
      if (!(v > 0) || !std::isfinite(v)) continue;
      const int x = px(r[0]), y = py(std::log10(v));
      if (lx >= 0) line(img, lx, ly, x, y, c);
      for (int d = -1; d <= 1; ++d) put(img, x + d, y, c), put(img, x, y + d, c);
      lx = x, ly = y;
    }
    // legend swatch
    for (int d = 0; d < 12; ++d) line(img, right - 60 + d, top + 6 + 8 * static_cast<int>(k), right - 60 + d, top + 10 + 8 * static_cast<int>(k), c);
  }
  return img;
}

inline Tensor colorize(const Tensor& d, double lo, double hi) {
  Tensor out(Shape{3, d.height(), d.width()});
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) put(out, x, y, colormap((d(0, y, x) - lo) / std::max(hi - lo, 1e-12)));
  return out;
}

inline Tensor gray_to_rgb(const Tensor& m) {
  Tensor out(Shape{3, m.height(), m.width()});
  for (int k = 0; k < 3; ++k) std::copy(m.channel(0), m.channel(0) + m.shape().plane(), out.channel(k));
  return out;
}

/// Stacks equally sized RGB panels vertically with a 2-pixel white gap.
inline Tensor stack_panels(const std::vector<Tensor>& panels) {
  if (panels.empty()) throw std::invalid_argument("stack_panels: nothing to stack");
  const int W = panels[0].width(), gap = 2;
  int H = 0;
  for (const auto& p : panels) {
    if (p.width() != W || p.channels() != 3) throw std::invalid_argument("stack_panels: panel shape mismatch");
    H += p.height() + gap;
  }
  Tensor out(Shape{3, H - gap, W}, 1.0);
  int y0 = 0;
  for (const auto& p : panels) {
    for (int k = 0; k < 3; ++k)
      for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < W; ++x) out(k, y0 + y, x) = p(k, y, x);
    y0 += p.height() + gap;
  }
  return out;
}

}  // namespace seldist
