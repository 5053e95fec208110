#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "skydehaze/codec.hpp"
#include "skydehaze/pipeline.hpp"
#include "skydehaze/scattering.hpp"
#include "support.hpp"

using namespace skydehaze;
using namespace skytest;

namespace {

ColorImage hazed(const ColorImage& clear, double t) {
  return synthesize_haze(clear, {{0.8, 0.8, 0.8}, ScalarMap(clear.width(), clear.height(), t)});
}

// Brute-force Euclidean distance to the nearest zero pixel.
ScalarMap oracle_distance(const BinaryMask& mask) {
  ScalarMap d(mask.width(), mask.height(), std::numeric_limits<double>::infinity());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      for (int yy = 0; yy < mask.height(); ++yy) {
        for (int xx = 0; xx < mask.width(); ++xx) {
          if (mask(xx, yy)) continue;
          d(x, y) = std::min(d(x, y), std::hypot(double(x - xx), double(y - yy)));
        }
      }
    }
  }
  return d;
}

BinaryMask random_mask(int w, int h, std::uint64_t seed, double p) {
  Rng rng(seed);
  BinaryMask m(w, h);
  for (auto& v : m.data()) v = rng.uniform() < p;
  return m;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const PipelineConfig d = parse_config_text("");
  CHECK(d.feather_width == 15);
  CHECK(d.tile == 256);
  CHECK(d.overlap == 16);
  CHECK_FALSE(d.model_path.has_value());

  const PipelineConfig c = parse_config_text(
      "# comment line\n"
      "dcp.omega = 0.9\n"
      "  dcp.window_radius=5  # trailing comment\n"
      "dcp.adjust_brightness = false\n"
      "meanshift.range_bandwidth = 0.1\n"
      "meanshift.method = exact\n"
      "feather_width = 0\n"
      "model_path = nets/sky.dhzn\n"
      "seed = 42\n"
      "\n"
      "brightness_post_fusion = true\n");
  CHECK(c.dcp.omega == 0.9);
  CHECK(c.dcp.window_radius == 5);
  CHECK_FALSE(c.dcp.adjust_brightness);
  CHECK(c.meanshift.range_bandwidth == 0.1);
  CHECK(c.meanshift.method == MeanShiftMethod::kExact);
  CHECK(c.feather_width == 0);
  CHECK(*c.model_path == "nets/sky.dhzn");
  CHECK(c.seed == 42);
  CHECK(c.brightness_post_fusion);
}

TEST_CASE("config errors name the offending key or line") {
  CHECK_THROWS_WITH(parse_config_text("dcp.omegaa = 0.9\n"), doctest::Contains("dcp.omegaa"));
  CHECK_THROWS_WITH(parse_config_text("seed = 1\nnot a pair\n"), doctest::Contains("line 2"));
  CHECK_THROWS_AS(parse_config_text("dcp.omega = high\n"), Error);
  CHECK_THROWS_AS(parse_config_text("dcp.omega = 1.5\n"), Error);
  CHECK_THROWS_AS(parse_config_text("feather_width = -1\n"), Error);
  CHECK_THROWS_AS(parse_config_text("meanshift.method = fast\n"), Error);
  CHECK_THROWS_AS(parse_config_text("tile = 20\noverlap = 16\n"), Error);
  CHECK_THROWS_AS(load_config("/nonexistent/skydehaze.conf"), Error);
}

TEST_CASE("distance_to_background matches brute force") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const BinaryMask m = random_mask(13, 9, seed, 0.85);
    const ScalarMap d = distance_to_background(m);
    const ScalarMap want = oracle_distance(m);
    for (size_t i = 0; i < d.pixel_count(); ++i) {
      if (std::isinf(want[i])) {
        CHECK(std::isinf(d[i]));
      } else {
        CHECK(d[i] == doctest::Approx(want[i]).epsilon(1e-12));
      }
    }
  }
  CHECK(std::isinf(distance_to_background(BinaryMask(3, 3, 1))(1, 1)));
}

TEST_CASE("fuse_regions examples") {
  const ColorImage nonsky = random_image(12, 10, 1);
  const ColorImage sky = random_image(12, 10, 2);
  for (int feather : {0, 3, 15}) {
    CHECK(max_abs_diff(fuse_regions(nonsky, sky, BinaryMask(12, 10), feather).data(), nonsky.data()) == 0.0);
    CHECK(max_abs_diff(fuse_regions(nonsky, sky, BinaryMask(12, 10, 1), feather).data(), sky.data()) == 0.0);
  }
  const BinaryMask m = random_mask(12, 10, 3, 0.5);
  const ColorImage hard = fuse_regions(nonsky, sky, m, 0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int c = 0; c < 3; ++c) CHECK(hard(x, y, c) == (m(x, y) ? sky(x, y, c) : nonsky(x, y, c)));
    }
  }
  CHECK_THROWS_AS(fuse_regions(nonsky, sky, BinaryMask(12, 9), 0), Error);
  CHECK_THROWS_AS(fuse_regions(nonsky, random_image(11, 10, 4), m, 0), Error);
}

TEST_CASE("feathered fusion is exact wherever alpha is 0 or 1") {
  const ColorImage nonsky = random_image(40, 30, 5);
  const ColorImage sky = random_image(40, 30, 6);
  BinaryMask m(40, 30);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 40; ++x) m(x, y) = 1;
  }
  const ScalarMap alpha = fusion_alpha(m, 5);
  const ColorImage out = fuse_regions(nonsky, sky, m, 5);
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 40; ++x) {
      CHECK(alpha(x, y) >= 0.0);
      CHECK(alpha(x, y) <= 1.0);
      if (y >= 12) CHECK(alpha(x, y) == 0.0);
      if (y < 7) CHECK(alpha(x, y) == 1.0);
      for (int c = 0; c < 3; ++c) {
        if (alpha(x, y) == 0.0) CHECK(out(x, y, c) == nonsky(x, y, c));
        if (alpha(x, y) == 1.0) CHECK(out(x, y, c) == sky(x, y, c));
      }
    }
  }
  // Row 11 touches the background at distance 1: alpha = 1/5.
  CHECK(alpha(20, 11) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("rotations and upscaling") {
  const ColorImage img = random_image(5, 3, 7);
  const ColorImage r90 = rotate_quarter(img, 1);
  CHECK(r90.width() == 3);
  CHECK(r90.height() == 5);
  // Clockwise: the top-left pixel moves to the top-right corner.
  for (int c = 0; c < 3; ++c) CHECK(r90(2, 0, c) == img(0, 0, c));
  CHECK(rotate_quarter(rotate_quarter(img, 2), 2).data().size() == img.data().size());
  CHECK(max_abs_diff(rotate_quarter(rotate_quarter(img, 2), 2).data(), img.data()) == 0.0);
  CHECK(max_abs_diff(rotate_quarter(rotate_quarter(r90, 1), 2).data(), img.data()) == 0.0);

  const ColorImage up = upscale_nearest(img, 3);
  CHECK(up.width() == 15);
  CHECK(up.height() == 9);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 15; ++x) {
      for (int c = 0; c < 3; ++c) CHECK(up(x, y, c) == img(x / 3, y / 3, c));
    }
  }
  CHECK_THROWS_AS(upscale_nearest(img, 0), Error);
}

TEST_CASE("augment_dataset emits 20 variants per input") {
  const std::vector<ColorImage> one = {random_image(4, 3, 8)};
  const auto out = augment_dataset(one);
  REQUIRE(out.size() == 20);
  std::set<std::pair<int, int>> combos;
  for (const auto& a : out) {
    combos.insert({a.rotation, a.scale});
    const bool sideways = a.rotation == 90 || a.rotation == 270;
    CHECK(a.image.width() == (sideways ? 3 : 4) * a.scale);
    CHECK(a.image.height() == (sideways ? 4 : 3) * a.scale);
  }
  CHECK(combos.size() == 20);
  CHECK(max_abs_diff(out[0].image.data(), one[0].data()) == 0.0);

  std::vector<ColorImage> three = {random_image(2, 2, 1), random_image(2, 2, 2), random_image(2, 2, 3)};
  const auto many = augment_dataset(three);
  CHECK(many.size() == 60);
  CHECK(many[20].source == 1);
  CHECK_THROWS_AS(augment_dataset({}), Error);
}

TEST_CASE("load_training_pairs cuts patches and groups them per file") {
  const auto dir = scratch_dir("pairs");
  std::filesystem::create_directories(dir / "hazy");
  std::filesystem::create_directories(dir / "clear");
  for (int i = 0; i < 2; ++i) {
    const ColorImage clear = random_image(20, 17, 30 + i);
    const std::string name = "img" + std::to_string(i) + ".png";
    save_image(dir / "clear" / name, clear);
    save_image(dir / "hazy" / name, hazed(clear, 0.6));
  }
  const auto pairs = load_training_pairs(dir, 8);
  REQUIRE(pairs.size() == 8);  // 2 x 2 patches per file
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].group == static_cast<int>(i / 4));
    CHECK(pairs[i].hazy.height == 8);
    CHECK(pairs[i].clear.width == 8);
  }
  std::filesystem::remove(dir / "clear" / "img1.png");
  CHECK_THROWS_AS(load_training_pairs(dir, 8), Error);
  CHECK_THROWS_AS(load_training_pairs(dir / "missing", 8), Error);
}

TEST_CASE("dehaze without a model returns the DCP branch") {
  const ColorImage img = hazed(sky_fixture(64, 48, 1).image, 0.6);
  const DehazeResult r = dehaze(img, PipelineConfig{}, nullptr);
  CHECK(max_abs_diff(r.image.data(), r.dcp.restored.data()) == 0.0);
  REQUIRE(r.report.sky_skipped.has_value());
  CHECK(*r.report.sky_skipped == "no model configured");
  CHECK_FALSE(r.sky_branch.has_value());
}

TEST_CASE("dehaze with an empty sky mask notes the skipped branch") {
  // Dark, textured, no bright top region.
  ColorImage img = random_image(48, 36, 9);
  for (auto& v : img.data()) v *= 0.3;
  const NetworkSpec net = NetworkSpec::initialize(1);
  const DehazeResult r = dehaze(img, PipelineConfig{}, &net);
  CHECK(std::none_of(r.mask.data().begin(), r.mask.data().end(), [](auto v) { return v != 0; }));
  REQUIRE(r.report.sky_skipped.has_value());
  CHECK(*r.report.sky_skipped == "no sky region detected");
  CHECK(max_abs_diff(r.image.data(), r.dcp.restored.data()) == 0.0);
}

TEST_CASE("dehaze on a hazed fixture with a model") {
  const ColorImage img = hazed(sky_fixture(96, 64, 2).image, 0.6);
  const NetworkSpec net = NetworkSpec::initialize(2);
  const DehazeResult a = dehaze(img, PipelineConfig{}, &net);
  const DehazeResult b = dehaze(img, PipelineConfig{}, &net);
  CHECK_FALSE(a.report.sky_skipped.has_value());
  CHECK(a.sky_branch.has_value());
  CHECK(a.image.data().size() == img.data().size());
  CHECK(std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin()));
  for (double v : a.image.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.report.saturated_pixel_pct <= 20.0);
  CHECK(a.report.entropy_bits >= entropy(img) - 0.1);

  for (const char* stage : {"segmentation", "dcp", "network", "fusion", "metrics"}) {
    REQUIRE(a.report.stage_times_ms.count(stage) == 1);
    CHECK(a.report.stage_times_ms.at(stage) >= 0.0);
  }
  double sum = 0.0;
  for (const auto& [stage, ms] : a.report.stage_times_ms) sum += ms;
  CHECK(std::abs(sum - a.total_ms) <= 0.1 * a.total_ms);
}

TEST_CASE("an invalid model file fails before processing") {
  const auto dir = scratch_dir("badmodel");
  const std::vector<std::uint8_t> junk = {'N', 'O', 'P', 'E', '!', 0, 0};
  write_file(dir / "bad.dhzn", junk);
  PipelineConfig cfg;
  cfg.model_path = dir / "bad.dhzn";
  try {
    dehaze(ColorImage(8, 8, 0.5), cfg);
    FAIL("expected a decode error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDecode);
  }
  cfg.model_path = dir / "absent.dhzn";
  CHECK_THROWS_AS(dehaze(ColorImage(8, 8, 0.5), cfg), Error);
}

TEST_CASE("brightness can move after fusion") {
  const ColorImage img = hazed(sky_fixture(64, 48, 3).image, 0.6);
  const NetworkSpec net = NetworkSpec::initialize(3);
  PipelineConfig post;
  post.brightness_post_fusion = true;
  const DehazeResult r = dehaze(img, post, &net);
  CHECK(max_abs_diff(r.dcp.restored.data(), r.dcp.recovered.data()) == 0.0);
  const ColorImage fused = fuse_regions(r.dcp.recovered, *r.sky_branch, r.mask, post.feather_width);
  CHECK(max_abs_diff(r.image.data(), adjust_brightness(fused).data()) < 1e-12);
}
