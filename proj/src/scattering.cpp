#include "skydehaze/scattering.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "skydehaze/random.hpp"

namespace skydehaze {

ColorImage synthesize_haze(const ColorImage& clear, const HazeParams& params) {
  require_same_size(clear, params.transmission, "synthesize_haze");
  for (double a : params.airlight) {
    if (!(a >= 0.0 && a <= 1.0)) throw_invalid("synthesize_haze: airlight outside [0,1]");
  }
  ColorImage out(clear.width(), clear.height());
  for (size_t i = 0; i < clear.pixel_count(); ++i) {
    const double t = params.transmission[i];
    if (!(t >= 0.0 && t <= 1.0)) {
      throw_invalid("synthesize_haze: transmission sample " + std::to_string(i) +
                    " outside [0,1]");
    }
    for (int c = 0; c < 3; ++c) {
      const double a = params.airlight[c];
      out[3 * i + c] = std::clamp(clear[3 * i + c] * t + a * (1.0 - t), 0.0, 1.0);
    }
  }
  return out;
}

TransmissionMode parse_transmission_mode(const std::string& name) {
  if (name == "const" || name == "constant") return TransmissionMode::kConstant;
  if (name == "gradient" || name == "smooth-gradient") {
    return TransmissionMode::kSmoothGradient;
  }
  throw_invalid("unknown transmission mode '" + name + "' (expected const or gradient)");
}

ScalarMap random_transmission_field(int width, int height, TransmissionMode mode,
                                    std::uint64_t seed) {
  if (width <= 0 || height <= 0) {
    throw_invalid("random_transmission_field: zero width or height");
  }
  Rng rng(seed);
  constexpr double lo = kMinSyntheticTransmission;
  constexpr double hi = kMaxSyntheticTransmission;
  if (mode == TransmissionMode::kConstant) {
    return ScalarMap(width, height, rng.uniform(lo, hi));
  }
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double t_start = rng.uniform(lo, hi);
  const double t_end = rng.uniform(lo, hi);
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  // Projection range over the four corners normalizes the ramp to [0,1].
  double pmin = 0.0;
  double pmax = 0.0;
  for (int cy : {0, height - 1}) {
    for (int cx : {0, width - 1}) {
      const double p = cx * dx + cy * dy;
      pmin = std::min(pmin, p);
      pmax = std::max(pmax, p);
    }
  }
  const double span = pmax - pmin;
  ScalarMap out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double s = span > 0.0 ? (x * dx + y * dy - pmin) / span : 0.0;
      out(x, y) = std::clamp(t_start + (t_end - t_start) * s, lo, hi);
    }
  }
  return out;
}

}  // namespace skydehaze
