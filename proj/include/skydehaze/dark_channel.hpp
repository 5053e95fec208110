#pragma once

#include <array>

#include "skydehaze/image.hpp"

namespace skydehaze {

struct DcpParams {
  int window_radius = 7;            // local patch is (2r+1)^2
  double omega = 0.95;              // haze retention, in (0,1)
  double t_floor = 0.1;             // lower clamp on transmission
  double airlight_fraction = 0.005; // brightest share of pixels averaged into A
  int guided_radius = 30;
  double guided_epsilon = 1e-3;
  bool adjust_brightness = true;

  void validate() const;
};

struct Airlight {
  std::array<double, 3> per_channel{1.0, 1.0, 1.0};
};

inline constexpr double kMinAirlight = 1e-3;

enum class DarkChannelVariant { kMin, kAvg };

// Windowed minimum of per-pixel channel minima (windows clipped at borders).
ScalarMap dark_channel_min(const ColorImage& img, int window_radius);
// Windowed mean of per-pixel channel minima.
ScalarMap dark_channel_avg(const ColorImage& img, int window_radius);

// Per-channel mean of the ceil(fraction * N) brightest pixels by luminance.
// Ties are broken by raster index. Components are floored at kMinAirlight.
Airlight estimate_airlight(const ColorImage& img, double airlight_fraction);

// t = 1 - omega * D(clamp(I / A, 0, 1)) with D the min or avg dark channel.
// Result lies in [1 - omega, 1]. Accepts omega = 1 (exact inversion).
ScalarMap estimate_transmission(const ColorImage& img, const Airlight& airlight,
                                const DcpParams& params, DarkChannelVariant variant);

// Edge-preserving guided filter; box means over clipped (2r+1)^2 windows.
ScalarMap guided_filter(const ScalarMap& input, const ScalarMap& guide, int radius,
                        double epsilon);

// J = (I - A) / max(t, t_floor) + A, clamped to [0,1].
ColorImage recover_scene(const ColorImage& img, const Airlight& airlight,
                         const ScalarMap& transmission, double t_floor);

// J' = J * (2 - mean luminance of J), clamped to [0,1].
ColorImage adjust_brightness(const ColorImage& img);

struct DcpResult {
  ColorImage restored;        // after brightness adjustment (if enabled)
  ColorImage recovered;       // scene radiance before brightness adjustment
  ScalarMap dark_channel;     // avg dark channel of the normalized image
  ScalarMap raw_transmission;
  ScalarMap transmission;     // guided-filter refined, clamped to [0,1]
  Airlight airlight;
};

// estimate_airlight -> estimate_transmission(avg) -> guided_filter with the
// grayscale guide -> recover_scene -> adjust_brightness.
DcpResult dehaze_dcp(const ColorImage& img, const DcpParams& params);

}  // namespace skydehaze
