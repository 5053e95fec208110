#pragma once

#include <vector>

#include "skydehaze/image.hpp"

namespace skydehaze {

// kExact sums the kernel over every pixel in the truncated window. kGrid
// splats the samples onto a (x, y, luminance) lattice at half-bandwidth
// spacing, blurs it, and reads each weighted mean back by trilinear
// interpolation; it approximates the same Gaussian update at O(1) per step.
enum class MeanShiftMethod { kExact, kGrid };

struct MeanShiftParams {
  double spatial_bandwidth = 8.0;   // h_s, pixels
  double range_bandwidth = 0.06;    // h_r, luminance in [0,1]
  int min_region = 100;             // M
  int max_iters = 50;
  double convergence_eps = 1e-4;
  double edge_confidence_threshold = 0.9;
  int morph_radius = 3;
  // Adopt an already-converged mode when a trajectory passes within
  // convergence_eps of it. Processing order is raster order either way.
  bool path_adoption = true;
  MeanShiftMethod method = MeanShiftMethod::kGrid;

  void validate() const;
};

// Joint spatial-range feature. After filtering, (x, y) keep the pixel's own
// coordinates and `range` holds the converged luminance.
struct FeatureVector {
  double x = 0.0;
  double y = 0.0;
  double range = 0.0;
};

struct ModeMap {
  int width = 0;
  int height = 0;
  std::vector<FeatureVector> features;  // one per pixel, raster order
  std::vector<int> iterations;          // iterations spent per pixel
  int adopted = 0;                      // pixels that adopted an existing mode

  const FeatureVector& at(int x, int y) const {
    return features[static_cast<size_t>(y) * width + x];
  }
  ScalarMap range_map() const;
  int max_iterations() const;
};

// Gaussian-kernel mean shift in (x, y, luminance) with the joint metric
// |dxy|^2 / h_s^2 + dr^2 / h_r^2, neighborhood truncated at 3 h_s.
ModeMap mean_shift_filter(const ScalarMap& gray, const MeanShiftParams& params);

// Per-pixel edge confidence in [0,1]: correlation of the 3x3 neighborhood
// with an ideal step oriented along the local gradient, times the rank of
// the gradient magnitude among all pixels.
ScalarMap edge_confidence_map(const ScalarMap& gray);

// Sobel gradient magnitude with replicated borders.
ScalarMap gradient_magnitude(const ScalarMap& gray);

// Union-find over 4-neighbors: merge when the converged range values differ
// by less than h_r, the spatial distance is below h_s and neither pixel is
// an edge (confidence above threshold). Edge pixels then join the adjacent
// region with the closest range value. Labels are 1..K in raster order.
RegionMask cluster_regions(const ModeMap& modes, const ScalarMap& edges,
                           const MeanShiftParams& params);

// Merges every region smaller than min_region into its largest adjacent
// region, smallest first, until none remain or one region is left.
// Output is relabeled 1..K in raster order; sky labels are cleared.
RegionMask prune_small_regions(const RegionMask& mask, int min_region);

struct SkySegmentation {
  ScalarMap gray;
  ModeMap modes;
  ScalarMap edges;
  RegionMask regions;  // pruned, sky_labels filled by the selection rules
  BinaryMask mask;     // after close + open
};

// Full pipeline: grayscale, mean shift, clustering, pruning, sky selection,
// morphological close then open. A region is sky when it touches the top
// border, its mean luminance is at least 0.6 x the image maximum, and the
// mean gradient over its interior does not exceed the image median.
SkySegmentation segment_sky(const ColorImage& img, const MeanShiftParams& params);

BinaryMask extract_sky_mask(const ColorImage& img, const MeanShiftParams& params);

}  // namespace skydehaze
