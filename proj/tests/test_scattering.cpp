#include <doctest.h>

#include "skydehaze/dark_channel.hpp"
#include "skydehaze/scattering.hpp"
#include "support.hpp"

using namespace skydehaze;
using skytest::random_image;

namespace {

HazeParams constant_haze(int w, int h, double a, double t) {
  HazeParams p;
  p.airlight = {a, a, a};
  p.transmission = ScalarMap(w, h, t);
  return p;
}

}  // namespace

TEST_CASE("t = 1 leaves the image unchanged") {
  const ColorImage j = random_image(8, 5, 1);
  HazeParams p = constant_haze(8, 5, 0.0, 1.0);
  p.airlight = {0.3, 0.9, 0.1};
  CHECK(synthesize_haze(j, p) == j);
}

TEST_CASE("t = 0 gives the airlight everywhere") {
  const ColorImage j = random_image(6, 4, 2);
  HazeParams p = constant_haze(6, 4, 0.0, 0.0);
  p.airlight = {0.25, 0.5, 0.75};
  const ColorImage out = synthesize_haze(j, p);
  for (size_t i = 0; i < out.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) CHECK(out[3 * i + c] == p.airlight[c]);
  }
}

TEST_CASE("J = 0.2, A = 0.8, t = 0.5 gives 0.5") {
  const ColorImage j(1, 1, 0.2);
  const ColorImage out = synthesize_haze(j, constant_haze(1, 1, 0.8, 0.5));
  for (double v : out.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("synthesis rejects mismatched or out-of-range parameters") {
  const ColorImage j(4, 4, 0.5);
  CHECK_THROWS_AS(synthesize_haze(j, constant_haze(3, 4, 0.8, 0.5)), Error);
  CHECK_THROWS_AS(synthesize_haze(j, constant_haze(4, 4, 1.2, 0.5)), Error);
  CHECK_THROWS_AS(synthesize_haze(j, constant_haze(4, 4, 0.8, -0.1)), Error);
}

TEST_CASE("lower transmission moves every sample toward the airlight") {
  const ColorImage j = random_image(10, 10, 3);
  const ColorImage hi = synthesize_haze(j, constant_haze(10, 10, 0.7, 0.8));
  const ColorImage lo = synthesize_haze(j, constant_haze(10, 10, 0.7, 0.4));
  for (size_t i = 0; i < j.data().size(); ++i) {
    CHECK(std::abs(lo[i] - 0.7) <= std::abs(hi[i] - 0.7) + 1e-15);
    CHECK(lo[i] >= std::min(j[i], 0.7) - 1e-15);
    CHECK(lo[i] <= std::max(j[i], 0.7) + 1e-15);
  }
}

TEST_CASE("inversion with known A and t recovers J") {
  const ColorImage j = random_image(16, 12, 4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    HazeParams p;
    p.airlight = {0.9, 0.8, 0.85};
    p.transmission = random_transmission_field(16, 12, TransmissionMode::kSmoothGradient, seed);
    const ColorImage hazy = synthesize_haze(j, p);
    Airlight a;
    a.per_channel = p.airlight;
    const ColorImage back = recover_scene(hazy, a, p.transmission, 0.1);
    CHECK(skytest::max_abs_diff(back.data(), j.data()) < 1e-6);
  }
}

TEST_CASE("transmission fields are deterministic and bounded") {
  for (TransmissionMode mode : {TransmissionMode::kConstant, TransmissionMode::kSmoothGradient}) {
    CHECK(random_transmission_field(20, 10, mode, 5) == random_transmission_field(20, 10, mode, 5));
  }
  const ScalarMap c = random_transmission_field(13, 7, TransmissionMode::kConstant, 9);
  const auto [lo, hi] = std::minmax_element(c.data().begin(), c.data().end());
  CHECK(*hi - *lo == 0.0);

  size_t samples = 0;
  bool any_ramp = false;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    for (TransmissionMode mode : {TransmissionMode::kConstant, TransmissionMode::kSmoothGradient}) {
      const ScalarMap t = random_transmission_field(25, 10, mode, seed);
      for (double v : t.data()) {
        CHECK(v >= kMinSyntheticTransmission);
        CHECK(v <= kMaxSyntheticTransmission);
        ++samples;
      }
      if (mode == TransmissionMode::kSmoothGradient) {
        const auto [a, b] = std::minmax_element(t.data().begin(), t.data().end());
        any_ramp = any_ramp || *b - *a > 0.05;
      }
    }
  }
  CHECK(samples >= 10000);
  CHECK(any_ramp);
  CHECK_THROWS_AS(random_transmission_field(0, 4, TransmissionMode::kConstant, 1), Error);
  CHECK(parse_transmission_mode("gradient") == TransmissionMode::kSmoothGradient);
  CHECK(parse_transmission_mode("const") == TransmissionMode::kConstant);
  CHECK_THROWS_AS(parse_transmission_mode("depth"), Error);
}
