#include <doctest.h>

#include <string>

#include "skydehaze/codec.hpp"
#include "support.hpp"

using namespace skydehaze;

namespace {

Bytes ppm_bytes(const std::string& header, std::initializer_list<int> payload) {
  Bytes b(header.begin(), header.end());
  for (int v : payload) b.push_back(static_cast<std::uint8_t>(v));
  return b;
}

ColorImage grid_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ColorImage img(w, h);
  for (auto& v : img.data()) v = static_cast<double>(rng.below(256)) / 255.0;
  return img;
}

std::string decode_message(const Bytes& b) {
  try {
    decode_image(b);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDecode);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("1x1 P6 decodes to normalized samples") {
  const ColorImage img = decode_image(ppm_bytes("P6\n1 1\n255\n", {255, 0, 0}));
  REQUIRE(img.width() == 1);
  REQUIRE(img.height() == 1);
  CHECK(img(0, 0, 0) == 1.0);
  CHECK(img(0, 0, 1) == 0.0);
  CHECK(img(0, 0, 2) == 0.0);
}

TEST_CASE("P6 header comments and small maxval") {
  const ColorImage img = decode_image(ppm_bytes("P6 # comment\n2 1\n# more\n15\n", {15, 0, 5, 3, 6, 9}));
  CHECK(img(0, 0, 0) == 1.0);
  CHECK(img(1, 0, 2) == doctest::Approx(9.0 / 15.0));
}

TEST_CASE("PPM round trip is byte identical on the 8-bit grid") {
  const Bytes original = ppm_bytes("P6\n2 2\n255\n", {0, 1, 2, 127, 128, 129, 200, 254, 255, 3, 4, 5});
  const ColorImage img = decode_image(original);
  CHECK(encode_ppm(img) == original);
}

TEST_CASE("PNG round trip preserves grid values") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ColorImage img = grid_image(17, 9, seed);
    const ColorImage back = decode_image(encode_png(img));
    REQUIRE(back.same_size(img));
    CHECK(skytest::max_abs_diff(back.data(), img.data()) <= 0.5 / 255.0);
    CHECK(back == img);
  }
}

TEST_CASE("P6 through PNG keeps the pixel payload") {
  const Bytes ppm = ppm_bytes("P6\n3 1\n255\n", {9, 8, 7, 250, 0, 66, 1, 2, 3});
  const ColorImage via_png = decode_image(encode_png(decode_image(ppm)));
  CHECK(encode_ppm(via_png) == ppm);
}

TEST_CASE("encoding rounds and clamps") {
  CHECK(to_byte(-0.2) == 0);
  CHECK(to_byte(1.7) == 255);
  CHECK(to_byte(0.5) == 128);
  CHECK(to_byte(100.4 / 255.0) == 100);
}

TEST_CASE("masks and scalar maps encode as 8-bit gray") {
  BinaryMask m(2, 1);
  m(1, 0) = 1;
  const ColorImage back = decode_image(encode_png(m));
  CHECK(back(0, 0, 0) == 0.0);
  CHECK(back(1, 0, 0) == 1.0);
  CHECK(back(1, 0, 2) == 1.0);

  ScalarMap s(1, 1, 0.5);
  CHECK(decode_image(encode_png(s))(0, 0, 1) == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("decode errors name the offset") {
  CHECK(decode_message({}).find("offset 0") != std::string::npos);
  CHECK(decode_message(ppm_bytes("P5\n1 1\n255\n", {0})).find("offset 0") != std::string::npos);
  // Two of three samples present: payload starts at 11, data ends at 13.
  const std::string truncated = decode_message(ppm_bytes("P6\n1 1\n255\n", {1, 2}));
  CHECK(truncated.find("truncated") != std::string::npos);
  CHECK(truncated.find("offset 13") != std::string::npos);
  CHECK(decode_message(ppm_bytes("P6\n1 x\n255\n", {})).find("offset 5") != std::string::npos);
  CHECK(!decode_message(ppm_bytes("P6\n1 1\n65535\n", {})).empty());
  CHECK(!decode_message(ppm_bytes("P6\n0 1\n255\n", {})).empty());

  Bytes png = encode_png(grid_image(8, 8, 1));
  png.resize(png.size() / 2);
  CHECK(decode_message(png).find("offset") != std::string::npos);
  Bytes corrupt = encode_png(grid_image(8, 8, 1));
  corrupt[20] ^= 0xff;  // inside IHDR
  CHECK(!decode_message(corrupt).empty());
}

TEST_CASE("file helpers report I/O errors") {
  const auto dir = skytest::scratch_dir("codec");
  const ColorImage img = grid_image(4, 3, 9);
  save_image(dir / "a.png", img);
  save_image(dir / "a.ppm", img);
  CHECK(load_image(dir / "a.png") == img);
  CHECK(load_image(dir / "a.ppm") == img);
  try {
    load_image(dir / "missing.png");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
  CHECK_THROWS_AS(save_image(dir / "no" / "such" / "dir.png", img), Error);
}
