#include "skydehaze/dark_channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "window_ops.hpp"

namespace skydehaze {

void DcpParams::validate() const {
  if (window_radius < 0) throw_invalid("dcp.window_radius must be >= 0");
  if (!(omega > 0.0 && omega < 1.0)) throw_invalid("dcp.omega must lie in (0,1)");
  if (!(t_floor > 0.0 && t_floor <= 1.0)) throw_invalid("dcp.t_floor must lie in (0,1]");
  if (!(airlight_fraction > 0.0 && airlight_fraction <= 1.0)) {
    throw_invalid("dcp.airlight_fraction must lie in (0,1]");
  }
  if (guided_radius < 0) throw_invalid("dcp.guided_radius must be >= 0");
  if (!(guided_epsilon > 0.0)) throw_invalid("dcp.guided_epsilon must be > 0");
}

ScalarMap dark_channel_min(const ColorImage& img, int window_radius) {
  if (window_radius < 0) throw_invalid("dark_channel_min: negative radius");
  return detail::min_filter(detail::channel_min(img), window_radius);
}

ScalarMap dark_channel_avg(const ColorImage& img, int window_radius) {
  if (window_radius < 0) throw_invalid("dark_channel_avg: negative radius");
  return detail::box_mean(detail::channel_min(img), window_radius);
}

Airlight estimate_airlight(const ColorImage& img, double airlight_fraction) {
  if (img.empty()) throw_invalid("estimate_airlight: empty image");
  if (!(airlight_fraction > 0.0 && airlight_fraction <= 1.0)) {
    throw_invalid("estimate_airlight: fraction must lie in (0,1]");
  }
  const size_t n = img.pixel_count();
  // The small epsilon keeps exact products such as 0.005 * 200 from rounding up.
  size_t k = static_cast<size_t>(std::ceil(airlight_fraction * static_cast<double>(n) - 1e-9));
  k = std::clamp<size_t>(k, 1, n);

  const ScalarMap gray = to_grayscale(img);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&gray](size_t a, size_t b) {
                      if (gray[a] != gray[b]) return gray[a] > gray[b];
                      return a < b;
                    });
  Airlight airlight;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (size_t i = 0; i < k; ++i) sum += img[3 * order[i] + c];
    airlight.per_channel[c] = std::max(sum / static_cast<double>(k), kMinAirlight);
  }
  return airlight;
}

ScalarMap estimate_transmission(const ColorImage& img, const Airlight& airlight,
                                const DcpParams& params, DarkChannelVariant variant) {
  for (double a : airlight.per_channel) {
    if (!(a > 0.0)) throw_invalid("estimate_transmission: airlight must be > 0");
  }
  // omega = 1 is allowed here for exact inversion checks; the pipeline keeps it below 1.
  if (!(params.omega > 0.0 && params.omega <= 1.0)) {
    throw_invalid("estimate_transmission: omega must lie in (0,1]");
  }
  ColorImage normalized(img.width(), img.height());
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      normalized[3 * i + c] =
          std::clamp(img[3 * i + c] / airlight.per_channel[c], 0.0, 1.0);
    }
  }
  ScalarMap dark = variant == DarkChannelVariant::kMin
                       ? dark_channel_min(normalized, params.window_radius)
                       : dark_channel_avg(normalized, params.window_radius);
  for (auto& v : dark.data()) v = 1.0 - params.omega * std::clamp(v, 0.0, 1.0);
  return dark;
}

ScalarMap guided_filter(const ScalarMap& input, const ScalarMap& guide, int radius,
                        double epsilon) {
  require_same_size(input, guide, "guided_filter");
  if (!(epsilon > 0.0)) throw_invalid("guided_filter: epsilon must be > 0");
  if (radius < 0) throw_invalid("guided_filter: negative radius");
  const int w = input.width();
  const int h = input.height();
  ScalarMap guide_sq(w, h);
  ScalarMap guide_input(w, h);
  for (size_t i = 0; i < input.pixel_count(); ++i) {
    guide_sq[i] = guide[i] * guide[i];
    guide_input[i] = guide[i] * input[i];
  }
  const ScalarMap mean_guide = detail::box_mean(guide, radius);
  const ScalarMap mean_input = detail::box_mean(input, radius);
  const ScalarMap mean_guide_sq = detail::box_mean(guide_sq, radius);
  const ScalarMap mean_guide_input = detail::box_mean(guide_input, radius);

  ScalarMap a(w, h);
  ScalarMap b(w, h);
  for (size_t i = 0; i < input.pixel_count(); ++i) {
    const double var = mean_guide_sq[i] - mean_guide[i] * mean_guide[i];
    const double cov = mean_guide_input[i] - mean_guide[i] * mean_input[i];
    a[i] = cov / (var + epsilon);
    b[i] = mean_input[i] - a[i] * mean_guide[i];
  }
  const ScalarMap mean_a = detail::box_mean(a, radius);
  const ScalarMap mean_b = detail::box_mean(b, radius);
  ScalarMap out(w, h);
  for (size_t i = 0; i < input.pixel_count(); ++i) {
    out[i] = mean_a[i] * guide[i] + mean_b[i];
  }
  return out;
}

ColorImage recover_scene(const ColorImage& img, const Airlight& airlight,
                         const ScalarMap& transmission, double t_floor) {
  require_same_size(img, transmission, "recover_scene");
  ColorImage out(img.width(), img.height());
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    const double t = std::max(transmission[i], t_floor);
    for (int c = 0; c < 3; ++c) {
      const double a = airlight.per_channel[c];
      out[3 * i + c] = std::clamp((img[3 * i + c] - a) / t + a, 0.0, 1.0);
    }
  }
  return out;
}

ColorImage adjust_brightness(const ColorImage& img) {
  if (img.empty()) return img;
  const ScalarMap gray = to_grayscale(img);
  double sum = 0.0;
  for (double v : gray.data()) sum += v;
  const double factor = 2.0 - sum / static_cast<double>(gray.pixel_count());
  ColorImage out = img;
  for (auto& v : out.data()) v = std::clamp(v * factor, 0.0, 1.0);
  return out;
}

DcpResult dehaze_dcp(const ColorImage& img, const DcpParams& params) {
  params.validate();
  if (img.empty()) throw_invalid("dehaze_dcp: empty image");
  DcpResult result;
  result.airlight = estimate_airlight(img, params.airlight_fraction);

  ColorImage normalized(img.width(), img.height());
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      normalized[3 * i + c] =
          std::clamp(img[3 * i + c] / result.airlight.per_channel[c], 0.0, 1.0);
    }
  }
  result.dark_channel = dark_channel_avg(normalized, params.window_radius);
  result.raw_transmission =
      estimate_transmission(img, result.airlight, params, DarkChannelVariant::kAvg);
  result.transmission = guided_filter(result.raw_transmission, to_grayscale(img),
                                      params.guided_radius, params.guided_epsilon);
  for (auto& t : result.transmission.data()) t = std::clamp(t, 0.0, 1.0);
  result.recovered =
      recover_scene(img, result.airlight, result.transmission, params.t_floor);
  result.restored = params.adjust_brightness ? adjust_brightness(result.recovered)
                                             : result.recovered;
  return result;
}

}  // namespace skydehaze
