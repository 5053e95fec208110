#pragma once

// Fixtures and brute-force reference implementations shared by the tests.
// The oracles deliberately use the most literal loops possible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skydehaze/dehazenet.hpp"
#include "skydehaze/image.hpp"
#include "skydehaze/random.hpp"

namespace skytest {

using namespace skydehaze;

// Owning copy of a raster's samples; safe to iterate over a temporary.
template <typename Raster>
auto values(const Raster& r) {
  const auto d = r.data();
  return std::vector<std::remove_cvref_t<decltype(d[0])>>(d.begin(), d.end());
}

inline ColorImage random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ColorImage img(w, h);
  for (auto& v : img.data()) v = rng.uniform();
  return img;
}

// Bilinear blend of a random cells x cells color lattice: smooth, with
// every channel spanning a good part of [0,1].
// Forces the smallest channel of every pixel to 0 (a zero dark channel).
inline ColorImage zero_min_channel(ColorImage img) {
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    double* p = &img[3 * i];
    *std::min_element(p, p + 3) = 0.0;
  }
  return img;
}

inline ColorImage smooth_image(int w, int h, std::uint64_t seed, int cells = 2) {
  Rng rng(seed);
  std::vector<double> lattice(static_cast<size_t>(cells) * cells * 3);
  for (auto& v : lattice) v = rng.uniform();
  ColorImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fx = w > 1 ? double(x) / (w - 1) * (cells - 1) : 0.0;
      const double fy = h > 1 ? double(y) / (h - 1) * (cells - 1) : 0.0;
      const int x0 = std::min(int(fx), cells - 2 < 0 ? 0 : cells - 2);
      const int y0 = std::min(int(fy), cells - 2 < 0 ? 0 : cells - 2);
      const int x1 = std::min(x0 + 1, cells - 1);
      const int y1 = std::min(y0 + 1, cells - 1);
      const double ax = fx - x0;
      const double ay = fy - y0;
      for (int c = 0; c < 3; ++c) {
        auto at = [&](int cx, int cy) { return lattice[(size_t(cy) * cells + cx) * 3 + c]; };
        img(x, y, c) = (1 - ay) * ((1 - ax) * at(x0, y0) + ax * at(x1, y0)) +
                       ay * ((1 - ax) * at(x0, y1) + ax * at(x1, y1));
      }
    }
  }
  return img;
}

struct SkyFixture {
  ColorImage image;
  BinaryMask truth;  // 1 on sky pixels
};

// Flat bright sky over a dark textured ground. Seed 0 is the canonical
// straight horizon; other seeds move and bend it and reseed the texture.
inline SkyFixture sky_fixture(int w, int h, std::uint64_t seed) {
  Rng rng(seed + 1000);
  const double horizon_frac = seed == 0 ? 0.4 : rng.uniform(0.3, 0.5);
  const double amplitude = seed == 0 ? 0.0 : rng.uniform(1.0, 4.0);
  const double wavelength = rng.uniform(40.0, 120.0);
  const double phase = rng.uniform(0.0, 6.28);
  const double tint[3] = {rng.uniform(0.7, 0.8), rng.uniform(0.8, 0.85), rng.uniform(0.88, 0.95)};
  SkyFixture f{ColorImage(w, h), BinaryMask(w, h)};
  for (int x = 0; x < w; ++x) {
    const double horizon = horizon_frac * h + amplitude * std::sin(6.28318 * x / wavelength + phase);
    for (int y = 0; y < h; ++y) {
      const bool sky = y < horizon;
      f.truth(x, y) = sky ? 1 : 0;
      for (int c = 0; c < 3; ++c) {
        double v;
        if (sky) {
          v = tint[c] + 0.04 * y / h + 0.003 * rng.normal();
        } else {
          v = 0.25 + 0.12 * std::sin(x * 0.45 + c) * std::cos(y * 0.38) +
              0.1 * rng.uniform() - 0.05 * c;
        }
        f.image(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return f;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// ------------------------------------------------------------ oracles --

inline double min3(const ColorImage& img, int x, int y) {
  return std::min({img(x, y, 0), img(x, y, 1), img(x, y, 2)});
}

inline ScalarMap oracle_dark_channel(const ColorImage& img, int r, bool average) {
  ScalarMap out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double best = std::numeric_limits<double>::infinity();
      double sum = 0.0;
      int n = 0;
      for (int yy = y - r; yy <= y + r; ++yy) {
        for (int xx = x - r; xx <= x + r; ++xx) {
          if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) continue;
          best = std::min(best, min3(img, xx, yy));
          sum += min3(img, xx, yy);
          ++n;
        }
      }
      out(x, y) = average ? sum / n : best;
    }
  }
  return out;
}

inline double oracle_window_mean(const ScalarMap& m, int x, int y, int r,
                                 const ScalarMap* other = nullptr) {
  double sum = 0.0;
  int n = 0;
  for (int yy = std::max(0, y - r); yy <= std::min(m.height() - 1, y + r); ++yy) {
    for (int xx = std::max(0, x - r); xx <= std::min(m.width() - 1, x + r); ++xx) {
      sum += m(xx, yy) * (other ? (*other)(xx, yy) : 1.0);
      ++n;
    }
  }
  return sum / n;
}

// Guided filter written straight from its definition: per-window linear
// coefficients, then the average of the coefficients covering each pixel.
inline ScalarMap oracle_guided_filter(const ScalarMap& p, const ScalarMap& I, int r, double eps) {
  const int w = p.width();
  const int h = p.height();
  ScalarMap a(w, h), b(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double mi = oracle_window_mean(I, x, y, r);
      const double mp = oracle_window_mean(p, x, y, r);
      const double cov = oracle_window_mean(I, x, y, r, &p) - mi * mp;
      const double var = oracle_window_mean(I, x, y, r, &I) - mi * mi;
      a(x, y) = cov / (var + eps);
      b(x, y) = mp - a(x, y) * mi;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out(x, y) = oracle_window_mean(a, x, y, r) * I(x, y) + oracle_window_mean(b, x, y, r);
    }
  }
  return out;
}

inline Tensor3 oracle_conv2d(const Tensor3& in, const ConvLayer& layer) {
  const int k = layer.kernel_size;
  const int pad = k / 2;
  Tensor3 out(in.height, in.width, layer.out_channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int co = 0; co < layer.out_channels; ++co) {
        double s = layer.bias[co];
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const int iy = y + ky - pad;
            const int ix = x + kx - pad;
            if (iy < 0 || ix < 0 || iy >= in.height || ix >= in.width) continue;
            for (int ci = 0; ci < layer.in_channels; ++ci) {
              s += in.at(iy, ix, ci) * layer.weights[layer.weight_index(ky, kx, ci, co)];
            }
          }
        }
        out.at(y, x, co) = s;
      }
    }
  }
  return out;
}

struct GradientCheck {
  size_t checked = 0;
  size_t failed = 0;
  size_t refined = 0;  // parameters re-measured with a smaller step
  double max_rel_error = 0.0;
  std::string worst;
};

inline double sum_product(const Tensor3& g, const Tensor3& out) {
  double s = 0.0;
  for (size_t i = 0; i < out.size(); ++i) s += g.data[i] * out.data[i];
  return s;
}

// Central differences of L = sum(g * forward_raw(x)) against backward() for
// every `stride`-th parameter of each layer, starting at h = 1e-4. A PReLU
// kink inside [-h, h] biases the estimate by O(h), so a parameter that misses
// `tol` is re-measured with steps shrinking by 10x down to 1e-7. `floor` bounds
// the denominator of the relative error from below at the roundoff level of L.
inline GradientCheck check_gradients(NetworkSpec net, const Tensor3& x, const Tensor3& g,
                                     size_t stride = 1, double tol = 1e-4, double floor = 1e-5) {
  constexpr double kSteps[] = {1e-4, 1e-5, 1e-6, 1e-7};
  ForwardCache cache;
  forward_raw(net, x, &cache);
  NetworkSpec analytic = backward(net, cache, g);
  GradientCheck result;
  for (int l = 0; l < kLayerCount; ++l) {
    std::vector<double*> params;
    std::vector<double> grads;
    net.layer(l).for_each_parameter([&](double& p) { params.push_back(&p); });
    analytic.layer(l).for_each_parameter([&](double& p) { grads.push_back(p); });
    const auto numeric = [&](double* p, double step) {
      const double saved = *p;
      *p = saved + step;
      const double up = sum_product(g, forward_raw_from(net, cache, l));
      *p = saved - step;
      const double down = sum_product(g, forward_raw_from(net, cache, l));
      *p = saved;
      return (up - down) / (2.0 * step);
    };
    const auto rel = [&](double a, double n) {
      return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    };
    for (size_t i = 0; i < params.size(); i += stride) {
      double err = rel(grads[i], numeric(params[i], kSteps[0]));
      if (err >= tol) ++result.refined;
      for (size_t s = 1; s < std::size(kSteps) && err >= tol; ++s) {
        err = std::min(err, rel(grads[i], numeric(params[i], kSteps[s])));
      }
      ++result.checked;
      if (err >= tol) ++result.failed;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = NetworkSpec::layer_name(l) + "[" + std::to_string(i) + "]";
      }
    }
    forward_raw_from(net, cache, l);  // restore the unperturbed activations
  }
  return result;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("skydehaze_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace skytest
