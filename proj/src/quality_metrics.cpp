#include "skydehaze/quality_metrics.hpp"

#include <array>
#include <cmath>

#include <json.hpp>

#include "skydehaze/codec.hpp"
#include "window_ops.hpp"

namespace skydehaze {

double entropy(const ColorImage& img) {
  if (img.pixel_count() == 0) return 0.0;
  std::array<size_t, 256> hist{};
  const ScalarMap gray = to_grayscale(img);
  for (double v : gray.data()) ++hist[to_byte(v)];
  const double n = static_cast<double>(gray.pixel_count());
  double h = 0.0;
  for (size_t count : hist) {
    if (count == 0) continue;
    const double p = static_cast<double>(count) / n;
    h -= p * std::log2(p);
  }
  return h;
}

size_t count_visible_edges(const ColorImage& img) {
  if (img.pixel_count() == 0) return 0;
  const ScalarMap gray = to_grayscale(img);
  const ScalarMap lo = detail::min_filter(gray, kVisibleEdgeRadius);
  const ScalarMap hi = detail::max_filter(gray, kVisibleEdgeRadius);
  size_t n = 0;
  for (size_t i = 0; i < gray.pixel_count(); ++i) {
    const double sum = hi[i] + lo[i];
    if (sum > 0.0 && (hi[i] - lo[i]) / sum >= kVisibleEdgeContrast) ++n;
  }
  return n;
}

std::optional<double> visible_edge_ratio(const ColorImage& before, const ColorImage& after) {
  require_same_size(before, after, "visible_edge_ratio");
  const size_t n_before = count_visible_edges(before);
  if (n_before == 0) return std::nullopt;
  const size_t n_after = count_visible_edges(after);
  return (static_cast<double>(n_after) - static_cast<double>(n_before)) /
         static_cast<double>(n_before);
}

double average_gradient(const ColorImage& img) {
  if (img.width() < 2 || img.height() < 2) {
    throw_invalid("average_gradient: image must be at least 2x2, got " +
                  std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  const ScalarMap gray = to_grayscale(img);
  double sum = 0.0;
  for (int y = 0; y + 1 < gray.height(); ++y) {
    for (int x = 0; x + 1 < gray.width(); ++x) {
      const double dx = gray(x + 1, y) - gray(x, y);
      const double dy = gray(x, y + 1) - gray(x, y);
      sum += std::sqrt((dx * dx + dy * dy) / 2.0);
    }
  }
  const double n = static_cast<double>(gray.width() - 1) * (gray.height() - 1);
  return 255.0 * sum / n;
}

double saturated_pixel_pct(const ColorImage& img) {
  if (img.pixel_count() == 0) return 0.0;
  size_t n = 0;
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    const std::uint8_t r = to_byte(img[3 * i]);
    const std::uint8_t g = to_byte(img[3 * i + 1]);
    const std::uint8_t b = to_byte(img[3 * i + 2]);
    if ((r == 0 && g == 0 && b == 0) || (r == 255 && g == 255 && b == 255)) ++n;
  }
  return 100.0 * static_cast<double>(n) / static_cast<double>(img.pixel_count());
}

QualityReport evaluate(const ColorImage& before, const ColorImage& after,
                       const std::map<std::string, double>& stage_times) {
  require_same_size(before, after, "evaluate");
  QualityReport report;
  report.entropy_bits = entropy(after);
  report.visible_edge_ratio = visible_edge_ratio(before, after);
  report.average_gradient = average_gradient(after);
  report.saturated_pixel_pct = saturated_pixel_pct(after);
  report.stage_times_ms = stage_times;
  return report;
}

std::string QualityReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["entropy_bits"] = entropy_bits;
  doc["visible_edge_ratio"] =
      visible_edge_ratio ? nlohmann::ordered_json(*visible_edge_ratio) : nullptr;
  doc["average_gradient"] = average_gradient;
  doc["saturated_pixel_pct"] = saturated_pixel_pct;
  for (const auto& [stage, ms] : stage_times_ms) doc["stage_times_ms." + stage] = ms;
  doc["sky_skipped"] = sky_skipped.has_value();
  if (sky_skipped) doc["sky_skipped_reason"] = *sky_skipped;
  return doc.dump(2) + "\n";
}

}  // namespace skydehaze
