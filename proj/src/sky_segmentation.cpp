#include "skydehaze/sky_segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <tuple>

#include "union_find.hpp"

namespace skydehaze {

void MeanShiftParams::validate() const {
  if (!(spatial_bandwidth > 0.0)) throw_invalid("meanshift.h_s must be > 0");
  if (!(range_bandwidth > 0.0)) throw_invalid("meanshift.h_r must be > 0");
  if (min_region < 1) throw_invalid("meanshift.min_region must be >= 1");
  if (max_iters < 1) throw_invalid("meanshift.max_iters must be >= 1");
  if (!(convergence_eps > 0.0)) throw_invalid("meanshift.convergence_eps must be > 0");
  if (!(edge_confidence_threshold >= 0.0 && edge_confidence_threshold <= 1.0)) {
    throw_invalid("meanshift.edge_confidence_threshold must lie in [0,1]");
  }
  if (morph_radius < 1) throw_invalid("meanshift.morph_radius must be >= 1");
}

ScalarMap ModeMap::range_map() const {
  ScalarMap out(width, height);
  for (size_t i = 0; i < features.size(); ++i) out[i] = features[i].range;
  return out;
}

int ModeMap::max_iterations() const {
  return iterations.empty() ? 0 : *std::max_element(iterations.begin(), iterations.end());
}

// ------------------------------------------------------------ mean shift --

namespace {

// Range weights below exp(-18) are dropped.
constexpr double kRangeCutoffBandwidths = 6.0;

class MeanShiftKernel {
 public:
  MeanShiftKernel(const ScalarMap& gray, const MeanShiftParams& params)
      : gray_(gray),
        radius_(static_cast<int>(std::ceil(3.0 * params.spatial_bandwidth))),
        inv_two_hs2_(0.5 / (params.spatial_bandwidth * params.spatial_bandwidth)),
        inv_two_hr2_(0.5 / (params.range_bandwidth * params.range_bandwidth)),
        range_cut2_(std::pow(kRangeCutoffBandwidths * params.range_bandwidth, 2)),
        wx_(2 * radius_ + 1),
        wy_(2 * radius_ + 1) {}

  // One mean-shift step from `p`; returns false when no neighbor has weight.
  bool step(const FeatureVector& p, FeatureVector& next) {
    const int w = gray_.width();
    const int h = gray_.height();
    const int cx = std::clamp(static_cast<int>(std::lround(p.x)), 0, w - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(p.y)), 0, h - 1);
    const int x0 = std::max(0, cx - radius_);
    const int x1 = std::min(w - 1, cx + radius_);
    const int y0 = std::max(0, cy - radius_);
    const int y1 = std::min(h - 1, cy + radius_);
    for (int x = x0; x <= x1; ++x) {
      const double d = x - p.x;
      wx_[x - x0] = std::exp(-d * d * inv_two_hs2_);
    }
    for (int y = y0; y <= y1; ++y) {
      const double d = y - p.y;
      wy_[y - y0] = std::exp(-d * d * inv_two_hs2_);
    }
    double sw = 0.0, sx = 0.0, sy = 0.0, sr = 0.0;
    for (int y = y0; y <= y1; ++y) {
      const double* row = &gray_(0, y);
      double rw = 0.0, rx = 0.0, rr = 0.0;
      for (int x = x0; x <= x1; ++x) {
        const double g = row[x];
        const double dr = g - p.range;
        const double d2 = dr * dr;
        if (d2 > range_cut2_) continue;
        const double k = wx_[x - x0] * std::exp(-d2 * inv_two_hr2_);
        rw += k;
        rx += k * x;
        rr += k * g;
      }
      const double wyv = wy_[y - y0];
      sw += wyv * rw;
      sx += wyv * rx;
      sy += wyv * rw * y;
      sr += wyv * rr;
    }
    if (!(sw > 0.0)) return false;
    next.x = sx / sw;
    next.y = sy / sw;
    next.range = sr / sw;
    return true;
  }

 private:
  const ScalarMap& gray_;
  int radius_;
  double inv_two_hs2_;
  double inv_two_hr2_;
  double range_cut2_;
  std::vector<double> wx_;
  std::vector<double> wy_;
};

// Bilateral-grid evaluation of the same update. Samples are splatted
// trilinearly as homogeneous (1, x, y, r) onto a lattice spaced at half the
// bandwidths, blurred with a Gaussian whose variance plus the two
// trilinear (splat + slice) variances equals the bandwidth squared, and
// sliced back trilinearly.
class GridKernel {
 public:
  GridKernel(const ScalarMap& gray, const MeanShiftParams& params)
      : width_(gray.width()),
        height_(gray.height()),
        spacing_s_(0.5 * params.spatial_bandwidth),
        spacing_r_(0.5 * params.range_bandwidth) {
    const auto [lo, hi] = std::minmax_element(gray.data().begin(), gray.data().end());
    range_min_ = *lo;
    range_max_ = *hi;
    // Var(tent) = spacing^2 / 6 for both splat and slice; spacing = h / 2.
    const double sigma_cells = 2.0 * std::sqrt(1.0 - 1.0 / 12.0);
    pad_ = static_cast<int>(std::ceil(3.0 * sigma_cells));
    nx_ = static_cast<int>((width_ - 1) / spacing_s_) + 2 + 2 * pad_;
    ny_ = static_cast<int>((height_ - 1) / spacing_s_) + 2 + 2 * pad_;
    nr_ = static_cast<int>((range_max_ - range_min_) / spacing_r_) + 2 + 2 * pad_;
    grid_.assign(static_cast<size_t>(nx_) * ny_ * nr_ * 4, 0.0f);

    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const double r = gray(x, y);
        const double sample[4] = {1.0, static_cast<double>(x), static_cast<double>(y), r};
        splat(x / spacing_s_ + pad_, y / spacing_s_ + pad_,
              (r - range_min_) / spacing_r_ + pad_, sample);
      }
    }
    std::vector<float> taps(2 * pad_ + 1);
    for (int k = -pad_; k <= pad_; ++k) {
      taps[k + pad_] = static_cast<float>(std::exp(-0.5 * k * k / (sigma_cells * sigma_cells)));
    }
    blur_axis(taps, 1);
    blur_axis(taps, nx_);
    blur_axis(taps, static_cast<size_t>(nx_) * ny_);
  }

  bool step(const FeatureVector& p, FeatureVector& next) const {
    const double gx = std::clamp(p.x / spacing_s_ + pad_, 0.0, nx_ - 1.000001);
    const double gy = std::clamp(p.y / spacing_s_ + pad_, 0.0, ny_ - 1.000001);
    const double gr = std::clamp((p.range - range_min_) / spacing_r_ + pad_, 0.0, nr_ - 1.000001);
    const int ix = static_cast<int>(gx);
    const int iy = static_cast<int>(gy);
    const int ir = static_cast<int>(gr);
    const double fx = gx - ix, fy = gy - iy, fr = gr - ir;
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    for (int dr = 0; dr <= 1; ++dr) {
      for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
          const double wgt = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dr ? fr : 1.0 - fr);
          const float* cell = &grid_[cell_index(ix + dx, iy + dy, ir + dr)];
          for (int c = 0; c < 4; ++c) acc[c] += wgt * cell[c];
        }
      }
    }
    if (!(acc[0] > 1e-12)) return false;
    next.x = std::clamp(acc[1] / acc[0], 0.0, static_cast<double>(width_ - 1));
    next.y = std::clamp(acc[2] / acc[0], 0.0, static_cast<double>(height_ - 1));
    next.range = std::clamp(acc[3] / acc[0], range_min_, range_max_);
    return true;
  }

 private:
  size_t cell_index(int x, int y, int r) const {
    return ((static_cast<size_t>(r) * ny_ + y) * nx_ + x) * 4;
  }

  void splat(double gx, double gy, double gr, const double sample[4]) {
    const int ix = static_cast<int>(gx);
    const int iy = static_cast<int>(gy);
    const int ir = static_cast<int>(gr);
    const double fx = gx - ix, fy = gy - iy, fr = gr - ir;
    for (int dr = 0; dr <= 1; ++dr) {
      for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
          const double wgt = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dr ? fr : 1.0 - fr);
          float* cell = &grid_[cell_index(ix + dx, iy + dy, ir + dr)];
          for (int c = 0; c < 4; ++c) cell[c] += static_cast<float>(wgt * sample[c]);
        }
      }
    }
  }

  // Separable pass along one axis; `stride` is in cells.
  void blur_axis(const std::vector<float>& taps, size_t stride) {
    const size_t cells = grid_.size() / 4;
    const int dims[3] = {nx_, ny_, nr_};
    const int axis = stride == 1 ? 0 : (stride == static_cast<size_t>(nx_) ? 1 : 2);
    const int len = dims[axis];
    std::vector<float> line(static_cast<size_t>(len) * 4);
    std::vector<float> out(static_cast<size_t>(len) * 4);
    for (size_t base = 0; base < cells; ++base) {
      // Visit each line once, from its first cell.
      const size_t coord = (base / stride) % len;
      if (coord != 0) continue;
      for (int i = 0; i < len; ++i) {
        const float* cell = &grid_[(base + i * stride) * 4];
        std::copy(cell, cell + 4, &line[i * 4]);
      }
      std::fill(out.begin(), out.end(), 0.0f);
      for (int i = 0; i < len; ++i) {
        const int k0 = std::max(-pad_, -i);
        const int k1 = std::min(pad_, len - 1 - i);
        for (int k = k0; k <= k1; ++k) {
          const float t = taps[k + pad_];
          for (int c = 0; c < 4; ++c) out[i * 4 + c] += t * line[(i + k) * 4 + c];
        }
      }
      for (int i = 0; i < len; ++i) {
        float* cell = &grid_[(base + i * stride) * 4];
        std::copy(&out[i * 4], &out[i * 4] + 4, cell);
      }
    }
  }

  int width_;
  int height_;
  double spacing_s_;
  double spacing_r_;
  double range_min_ = 0.0;
  double range_max_ = 0.0;
  int pad_ = 0;
  int nx_ = 0, ny_ = 0, nr_ = 0;
  std::vector<float> grid_;  // (r, y, x, channel)
};

double joint_distance2(const FeatureVector& a, const FeatureVector& b, double hs,
                       double hr) {
  const double dx = (a.x - b.x) / hs;
  const double dy = (a.y - b.y) / hs;
  const double dr = (a.range - b.range) / hr;
  return dx * dx + dy * dy + dr * dr;
}

template <typename Kernel>
ModeMap run_mean_shift(const ScalarMap& gray, const MeanShiftParams& params,
                       Kernel& kernel) {
  const int w = gray.width();
  const int h = gray.height();
  const double hs = params.spatial_bandwidth;
  const double hr = params.range_bandwidth;
  const double eps2 = params.convergence_eps * params.convergence_eps;

  ModeMap result;
  result.width = w;
  result.height = h;
  result.features.resize(gray.pixel_count());
  result.iterations.assign(gray.pixel_count(), 0);
  // Converged joint-space modes of processed pixels, used for adoption.
  std::vector<FeatureVector> converged(gray.pixel_count());
  std::vector<std::uint8_t> done(gray.pixel_count(), 0);

  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const size_t idx = static_cast<size_t>(py) * w + px;
      FeatureVector cur{static_cast<double>(px), static_cast<double>(py), gray[idx]};
      int iter = 0;
      while (iter < params.max_iters) {
        FeatureVector next;
        if (!kernel.step(cur, next)) break;
        ++iter;
        const double moved = joint_distance2(cur, next, hs, hr);
        cur = next;
        if (moved < eps2) break;
        if (params.path_adoption) {
          const int qx = static_cast<int>(std::lround(cur.x));
          const int qy = static_cast<int>(std::lround(cur.y));
          if (qx >= 0 && qx < w && qy >= 0 && qy < h) {
            const size_t q = static_cast<size_t>(qy) * w + qx;
            if (done[q] && joint_distance2(cur, converged[q], hs, hr) < eps2) {
              cur = converged[q];
              ++result.adopted;
              break;
            }
          }
        }
      }
      converged[idx] = cur;
      done[idx] = 1;
      result.iterations[idx] = iter;
      result.features[idx] = FeatureVector{static_cast<double>(px),
                                           static_cast<double>(py), cur.range};
    }
  }
  return result;
}

}  // namespace

ModeMap mean_shift_filter(const ScalarMap& gray, const MeanShiftParams& params) {
  params.validate();
  if (gray.empty()) throw_invalid("mean_shift_filter: empty map");
  if (params.method == MeanShiftMethod::kExact) {
    MeanShiftKernel kernel(gray, params);
    return run_mean_shift(gray, params, kernel);
  }
  GridKernel kernel(gray, params);
  return run_mean_shift(gray, params, kernel);
}

// ------------------------------------------------------- edge confidence --

namespace {

struct Sobel {
  ScalarMap gx;
  ScalarMap gy;
};

Sobel sobel(const ScalarMap& gray) {
  const int w = gray.width();
  const int h = gray.height();
  Sobel s{ScalarMap(w, h), ScalarMap(w, h)};
  auto at = [&](int x, int y) {
    return gray(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      s.gx(x, y) = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                   (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
      s.gy(x, y) = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                   (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
    }
  }
  return s;
}

constexpr double kFlatGradient = 1e-12;

}  // namespace

ScalarMap gradient_magnitude(const ScalarMap& gray) {
  const Sobel s = sobel(gray);
  ScalarMap out(gray.width(), gray.height());
  for (size_t i = 0; i < out.pixel_count(); ++i) out[i] = std::hypot(s.gx[i], s.gy[i]);
  return out;
}

ScalarMap edge_confidence_map(const ScalarMap& gray) {
  const int w = gray.width();
  const int h = gray.height();
  const Sobel s = sobel(gray);
  ScalarMap magnitude(w, h);
  for (size_t i = 0; i < magnitude.pixel_count(); ++i) {
    magnitude[i] = std::hypot(s.gx[i], s.gy[i]);
  }
  std::vector<double> sorted(magnitude.data().begin(), magnitude.data().end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());

  auto at = [&](int x, int y) {
    return gray(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  };
  ScalarMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = magnitude(x, y);
      if (m <= kFlatGradient) continue;
      const double nx = s.gx(x, y) / m;
      const double ny = s.gy(x, y) / m;
      // Ideal step: 1 on the bright side of the line through the center
      // (center included), 0 on the dark side.
      double win[9], tpl[9];
      double win_mean = 0.0, tpl_mean = 0.0;
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx, ++k) {
          win[k] = at(x + dx, y + dy);
          tpl[k] = (dx * nx + dy * ny >= 0.0) ? 1.0 : 0.0;
          win_mean += win[k];
          tpl_mean += tpl[k];
        }
      }
      win_mean /= 9.0;
      tpl_mean /= 9.0;
      double cross = 0.0, win_var = 0.0, tpl_var = 0.0;
      for (int i = 0; i < 9; ++i) {
        const double a = win[i] - win_mean;
        const double b = tpl[i] - tpl_mean;
        cross += a * b;
        win_var += a * a;
        tpl_var += b * b;
      }
      const double denom = std::sqrt(win_var * tpl_var);
      if (!(denom > 0.0)) continue;
      const double correlation = std::clamp(cross / denom, 0.0, 1.0);
      const double rank =
          static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), m) -
                              sorted.begin()) / n;
      out(x, y) = std::clamp(correlation * rank, 0.0, 1.0);
    }
  }
  return out;
}

// ------------------------------------------------------------ clustering --

namespace {

LabelMap compact_labels(detail::UnionFind& uf, int w, int h) {
  LabelMap labels(w, h);
  std::map<size_t, std::int32_t> ids;
  for (size_t i = 0; i < labels.pixel_count(); ++i) {
    const size_t root = uf.find(i);
    auto [it, inserted] = ids.try_emplace(root, static_cast<std::int32_t>(ids.size() + 1));
    labels[i] = it->second;
  }
  return labels;
}

}  // namespace

RegionMask cluster_regions(const ModeMap& modes, const ScalarMap& edges,
                           const MeanShiftParams& params) {
  const int w = modes.width;
  const int h = modes.height;
  if (!edges.same_size(w, h)) throw_invalid("cluster_regions: dimension mismatch");
  const size_t n = static_cast<size_t>(w) * h;
  std::vector<std::uint8_t> is_edge(n);
  for (size_t i = 0; i < n; ++i) {
    is_edge[i] = edges[i] > params.edge_confidence_threshold ? 1 : 0;
  }
  auto mergeable = [&](size_t a, size_t b) {
    const FeatureVector& fa = modes.features[a];
    const FeatureVector& fb = modes.features[b];
    const double spatial = std::hypot(fa.x - fb.x, fa.y - fb.y);
    return !is_edge[a] && !is_edge[b] &&
           std::abs(fa.range - fb.range) < params.range_bandwidth &&
           spatial < params.spatial_bandwidth;
  };

  detail::UnionFind uf(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (x + 1 < w && mergeable(i, i + 1)) uf.unite(i, i + 1);
      if (y + 1 < h && mergeable(i, i + w)) uf.unite(i, i + w);
    }
  }

  // Edge pixels act as barriers above; now attach each to the adjacent
  // assigned pixel with the closest range value.
  std::vector<std::uint8_t> assigned(n);
  for (size_t i = 0; i < n; ++i) assigned[i] = !is_edge[i];
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t i = static_cast<size_t>(y) * w + x;
        if (assigned[i]) continue;
        const int nbr_x[4] = {x, x - 1, x + 1, x};
        const int nbr_y[4] = {y - 1, y, y, y + 1};
        size_t best = n;
        double best_diff = 0.0;
        for (int k = 0; k < 4; ++k) {
          if (nbr_x[k] < 0 || nbr_x[k] >= w || nbr_y[k] < 0 || nbr_y[k] >= h) continue;
          const size_t j = static_cast<size_t>(nbr_y[k]) * w + nbr_x[k];
          if (!assigned[j]) continue;
          const double diff =
              std::abs(modes.features[i].range - modes.features[j].range);
          if (best == n || diff < best_diff) {
            best = j;
            best_diff = diff;
          }
        }
        if (best != n) {
          uf.unite(i, best);
          assigned[i] = 1;
          changed = true;
        }
      }
    }
  }
  // Only possible when every pixel is an edge.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (assigned[i]) continue;
      if (x + 1 < w && !assigned[i + 1]) uf.unite(i, i + 1);
      if (y + 1 < h && !assigned[i + w]) uf.unite(i, i + w);
    }
  }
  RegionMask out;
  out.labels = compact_labels(uf, w, h);
  return out;
}

RegionMask prune_small_regions(const RegionMask& mask, int min_region) {
  if (min_region < 1) throw_invalid("prune_small_regions: M must be >= 1");
  const int w = mask.width();
  const int h = mask.height();
  const size_t n = mask.labels.pixel_count();

  // Compact ids in raster order of first appearance.
  std::map<std::int32_t, size_t> id_of;
  std::vector<size_t> pixel_region(n);
  for (size_t i = 0; i < n; ++i) {
    auto [it, inserted] = id_of.try_emplace(mask.labels[i], id_of.size());
    pixel_region[i] = it->second;
  }
  const size_t regions = id_of.size();
  detail::UnionFind uf(regions);
  std::vector<size_t> size(regions, 0);
  std::vector<std::set<size_t>> adjacency(regions);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const size_t a = pixel_region[i];
      ++size[a];
      auto link = [&](size_t j) {
        const size_t b = pixel_region[j];
        if (a != b) {
          adjacency[a].insert(b);
          adjacency[b].insert(a);
        }
      };
      if (x + 1 < w) link(i + 1);
      if (y + 1 < h) link(i + w);
    }
  }

  using Entry = std::tuple<size_t, size_t>;  // (size, id), min-heap
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (size_t r = 0; r < regions; ++r) {
    if (size[r] < static_cast<size_t>(min_region)) heap.emplace(size[r], r);
  }
  size_t live = regions;
  while (!heap.empty() && live > 1) {
    const auto [sz, r] = heap.top();
    heap.pop();
    if (uf.find(r) != r || size[r] != sz || sz >= static_cast<size_t>(min_region)) {
      continue;
    }
    // Largest neighbor; ties go to the smaller id.
    size_t target = regions;
    std::set<size_t> resolved;
    for (size_t nb : adjacency[r]) {
      const size_t root = uf.find(nb);
      if (root != r) resolved.insert(root);
    }
    for (size_t root : resolved) {
      if (target == regions || size[root] > size[target]) target = root;
    }
    adjacency[r] = resolved;
    if (target == regions) continue;  // isolated; cannot happen with live > 1
    const size_t merged = uf.unite(r, target);
    const size_t absorbed = merged == r ? target : r;
    size[merged] = size[r] + size[target];
    std::set<size_t> joined;
    for (size_t nb : adjacency[r]) joined.insert(nb);
    for (size_t nb : adjacency[target]) joined.insert(nb);
    joined.erase(r);
    joined.erase(target);
    adjacency[merged] = std::move(joined);
    adjacency[absorbed].clear();
    --live;
    if (size[merged] < static_cast<size_t>(min_region)) heap.emplace(size[merged], merged);
  }

  RegionMask out;
  out.labels = LabelMap(w, h);
  std::map<size_t, std::int32_t> final_ids;
  for (size_t i = 0; i < n; ++i) {
    const size_t root = uf.find(pixel_region[i]);
    auto [it, inserted] =
        final_ids.try_emplace(root, static_cast<std::int32_t>(final_ids.size() + 1));
    out.labels[i] = it->second;
  }
  return out;
}

// ------------------------------------------------------------ sky mask --

namespace {

constexpr double kSkyBrightnessRatio = 0.6;

struct RegionStats {
  bool touches_top = false;
  double luminance_sum = 0.0;
  size_t count = 0;
  double interior_gradient_sum = 0.0;
  size_t interior_count = 0;
  double gradient_sum = 0.0;
};

}  // namespace

SkySegmentation segment_sky(const ColorImage& img, const MeanShiftParams& params) {
  params.validate();
  if (img.empty()) throw_invalid("segment_sky: empty image");
  SkySegmentation seg;
  seg.gray = to_grayscale(img);
  seg.modes = mean_shift_filter(seg.gray, params);
  seg.edges = edge_confidence_map(seg.gray);
  seg.regions = prune_small_regions(cluster_regions(seg.modes, seg.edges, params),
                                    params.min_region);

  const int w = img.width();
  const int h = img.height();
  const ScalarMap gradient = gradient_magnitude(seg.gray);
  std::vector<double> sorted(gradient.data().begin(), gradient.data().end());
  const auto mid = sorted.begin() + (sorted.size() - 1) / 2;
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double median_gradient = *mid;
  const double max_luminance =
      *std::max_element(seg.gray.data().begin(), seg.gray.data().end());

  std::map<std::int32_t, RegionStats> stats;
  const LabelMap& labels = seg.regions.labels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int32_t label = labels(x, y);
      RegionStats& s = stats[label];
      s.touches_top |= (y == 0);
      s.luminance_sum += seg.gray(x, y);
      s.gradient_sum += gradient(x, y);
      ++s.count;
      // Interior: the whole 3x3 Sobel support (clamped) lies in the region.
      bool interior = true;
      for (int dy = -1; dy <= 1 && interior; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (labels(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1)) != label) {
            interior = false;
            break;
          }
        }
      }
      if (interior) {
        s.interior_gradient_sum += gradient(x, y);
        ++s.interior_count;
      }
    }
  }
  for (const auto& [label, s] : stats) {
    const double mean_luminance = s.luminance_sum / static_cast<double>(s.count);
    const double mean_gradient =
        s.interior_count > 0
            ? s.interior_gradient_sum / static_cast<double>(s.interior_count)
            : s.gradient_sum / static_cast<double>(s.count);
    if (s.touches_top && mean_luminance >= kSkyBrightnessRatio * max_luminance &&
        mean_gradient <= median_gradient) {
      seg.regions.sky_labels.insert(label);
    }
  }
  seg.mask = seg.regions.binarize();
  if (!seg.regions.sky_labels.empty()) {
    seg.mask = morphology(seg.mask, MorphOp::kClose, params.morph_radius);
    seg.mask = morphology(seg.mask, MorphOp::kOpen, params.morph_radius);
  }
  return seg;
}

BinaryMask extract_sky_mask(const ColorImage& img, const MeanShiftParams& params) {
  return segment_sky(img, params).mask;
}

}  // namespace skydehaze
