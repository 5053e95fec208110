#pragma once

#include <map>
#include <optional>
#include <string>

#include "skydehaze/image.hpp"

namespace skydehaze {

// Shannon entropy (bits) of the 256-bin histogram of the 8-bit grayscale.
double entropy(const ColorImage& img);

inline constexpr int kVisibleEdgeRadius = 2;          // 5x5 window
inline constexpr double kVisibleEdgeContrast = 0.05;  // Michelson threshold

// Pixels whose 5x5 (clipped) Michelson contrast (max-min)/(max+min) on the
// grayscale reaches kVisibleEdgeContrast.
size_t count_visible_edges(const ColorImage& img);

// (n_after - n_before) / n_before. std::nullopt stands for the infinite
// ratio when `before` has no visible edges.
std::optional<double> visible_edge_ratio(const ColorImage& before, const ColorImage& after);

// Mean of sqrt((dx^2 + dy^2) / 2) over the (H-1)(W-1) pixels that have both
// forward differences, on the 0-255 grayscale. Needs width, height >= 2.
double average_gradient(const ColorImage& img);

// Percentage of pixels that quantize to pure black or pure white in every
// channel.
double saturated_pixel_pct(const ColorImage& img);

struct QualityReport {
  double entropy_bits = 0.0;
  std::optional<double> visible_edge_ratio;
  double average_gradient = 0.0;
  double saturated_pixel_pct = 0.0;
  std::map<std::string, double> stage_times_ms;
  // Set when the pipeline fell back to the DCP branch alone; holds the reason.
  std::optional<std::string> sky_skipped;

  // Flat JSON object; a missing visible_edge_ratio is written as null.
  std::string to_json() const;
};

// Metrics of `after` (the ratio compares both); stage times are copied.
QualityReport evaluate(const ColorImage& before, const ColorImage& after,
                       const std::map<std::string, double>& stage_times = {});

}  // namespace skydehaze
