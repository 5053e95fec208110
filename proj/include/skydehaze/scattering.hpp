#pragma once

#include <array>
#include <cstdint>

#include "skydehaze/image.hpp"

namespace skydehaze {

// Global airlight A and transmission t(x) of I = J t + A (1 - t).
struct HazeParams {
  std::array<double, 3> airlight{0.8, 0.8, 0.8};
  ScalarMap transmission;
};

// Forward scattering model, per pixel and channel. Output clamped to [0,1].
ColorImage synthesize_haze(const ColorImage& clear, const HazeParams& params);

enum class TransmissionMode { kConstant, kSmoothGradient };

TransmissionMode parse_transmission_mode(const std::string& name);

inline constexpr double kMinSyntheticTransmission = 0.3;
inline constexpr double kMaxSyntheticTransmission = 0.9;

// Seeded synthetic t(x) with samples in [0.3, 0.9]. kConstant draws a single
// value; kSmoothGradient draws a linear ramp at a random angle whose end
// values are drawn from the same range.
ScalarMap random_transmission_field(int width, int height, TransmissionMode mode,
                                    std::uint64_t seed);

}  // namespace skydehaze
