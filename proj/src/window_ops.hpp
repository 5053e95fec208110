#pragma once

// Separable windowed reductions over square (2r+1)x(2r+1) windows clipped to
// the frame. Shared by the dark channel, guided filter, morphology and the
// quality metrics.

#include <algorithm>
#include <vector>

#include "skydehaze/image.hpp"

namespace skydehaze::detail {

template <typename T, typename Reduce>
Raster<T, 1> separable_extremum(const Raster<T, 1>& in, int radius,
                                Reduce reduce) {
  const int w = in.width();
  const int h = in.height();
  Raster<T, 1> tmp(w, h);
  Raster<T, 1> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(w - 1, x + radius);
      T v = in(x0, y);
      for (int xx = x0 + 1; xx <= x1; ++xx) v = reduce(v, in(xx, y));
      tmp(x, y) = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius);
    const int y1 = std::min(h - 1, y + radius);
    for (int x = 0; x < w; ++x) {
      T v = tmp(x, y0);
      for (int yy = y0 + 1; yy <= y1; ++yy) v = reduce(v, tmp(x, yy));
      out(x, y) = v;
    }
  }
  return out;
}

template <typename T>
Raster<T, 1> min_filter(const Raster<T, 1>& in, int radius) {
  return separable_extremum(in, radius,
                            [](T a, T b) { return std::min(a, b); });
}

template <typename T>
Raster<T, 1> max_filter(const Raster<T, 1>& in, int radius) {
  return separable_extremum(in, radius,
                            [](T a, T b) { return std::max(a, b); });
}

// Mean over the clipped window (sum divided by in-frame pixel count).
inline ScalarMap box_mean(const ScalarMap& in, int radius) {
  const int w = in.width();
  const int h = in.height();
  ScalarMap rows(w, h);
  std::vector<double> prefix(static_cast<size_t>(w) + 1);
  for (int y = 0; y < h; ++y) {
    prefix[0] = 0.0;
    for (int x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + in(x, y);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(w - 1, x + radius);
      rows(x, y) = (prefix[x1 + 1] - prefix[x0]) / (x1 - x0 + 1);
    }
  }
  // Mean of row means equals the window mean because every row of a clipped
  // rectangle has the same width.
  ScalarMap out(w, h);
  std::vector<double> col(static_cast<size_t>(h) + 1);
  for (int x = 0; x < w; ++x) {
    col[0] = 0.0;
    for (int y = 0; y < h; ++y) col[y + 1] = col[y] + rows(x, y);
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - radius);
      const int y1 = std::min(h - 1, y + radius);
      out(x, y) = (col[y1 + 1] - col[y0]) / (y1 - y0 + 1);
    }
  }
  return out;
}

inline ScalarMap channel_min(const ColorImage& img) {
  ScalarMap out(img.width(), img.height());
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    out[i] = std::min({img[3 * i], img[3 * i + 1], img[3 * i + 2]});
  }
  return out;
}

}  // namespace skydehaze::detail
