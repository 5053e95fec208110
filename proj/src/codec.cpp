#include "skydehaze/codec.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <string>

namespace skydehaze {
namespace {

[[noreturn]] void decode_error(size_t offset, const std::string& what) {
  throw Error(ErrorKind::kDecode,
              "decode error at byte offset " + std::to_string(offset) + ": " + what);
}

// ---------------------------------------------------------------- PNG ----

struct PngReadState {
  const std::uint8_t* data = nullptr;
  size_t size = 0;
  size_t offset = 0;
  char message[256] = {0};
};

struct PngWriteState {
  Bytes* out = nullptr;
  char message[256] = {0};
};

void png_read_callback(png_structp png, png_bytep dst, png_size_t n) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (n > state->size - state->offset) png_error(png, "truncated data");
  std::memcpy(dst, state->data + state->offset, n);
  state->offset += n;
}

void png_read_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngReadState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_write_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngWriteState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_silent_warning(png_structp, png_const_charp) {}

void png_write_callback(png_structp png, png_bytep src, png_size_t n) {
  auto* state = static_cast<PngWriteState*>(png_get_io_ptr(png));
  state->out->insert(state->out->end(), src, src + n);
}

void png_flush_callback(png_structp) {}

// Kept free of objects with non-trivial destructors between setjmp and the
// possible longjmp.
bool decode_png_rgb(PngReadState& state, Bytes& rgb, png_uint_32& width,
                    png_uint_32& height) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state,
                                           png_read_error, png_silent_warning);
  if (png == nullptr) {
    std::snprintf(state.message, sizeof(state.message), "libpng init failed");
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    std::snprintf(state.message, sizeof(state.message), "libpng init failed");
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &state, png_read_callback);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) png_error(png, "16-bit PNG is not supported");
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color_type == PNG_COLOR_TYPE_GRAY ||
      color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  const int passes = png_set_interlace_handling(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<size_t>(width) * 3) {
    png_error(png, "unexpected row layout after transforms");
  }
  rgb.resize(static_cast<size_t>(width) * height * 3);
  for (int pass = 0; pass < passes; ++pass) {
    for (png_uint_32 y = 0; y < height; ++y) {
      png_read_row(png, rgb.data() + static_cast<size_t>(y) * width * 3,
                   nullptr);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_png_raw(PngWriteState& state, const std::uint8_t* pixels, int width,
                    int height, int channels) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state,
                                            png_write_error, png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &state, png_write_callback, png_flush_callback);
  png_set_IHDR(png, info, width, height, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, pixels + static_cast<size_t>(y) * width * channels);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

Bytes encode_png_bytes(const Bytes& pixels, int width, int height, int channels) {
  if (width <= 0 || height <= 0) {
    throw_invalid("cannot encode an empty image as PNG");
  }
  Bytes out;
  PngWriteState state;
  state.out = &out;
  if (!encode_png_raw(state, pixels.data(), width, height, channels)) {
    throw Error(ErrorKind::kIo, std::string("PNG encode failed: ") + state.message);
  }
  return out;
}

ColorImage decode_png(std::span<const std::uint8_t> bytes) {
  PngReadState state;
  state.data = bytes.data();
  state.size = bytes.size();
  Bytes rgb;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  if (!decode_png_rgb(state, rgb, width, height)) {
    decode_error(state.offset, std::string("PNG: ") + state.message);
  }
  ColorImage img(static_cast<int>(width), static_cast<int>(height));
  for (size_t i = 0; i < rgb.size(); ++i) img[i] = rgb[i] / 255.0;
  return img;
}

// ---------------------------------------------------------------- PPM ----

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  size_t offset() const { return pos_; }

  void skip_whitespace_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* field) {
    skip_whitespace_and_comments();
    if (pos_ >= bytes_.size()) {
      decode_error(pos_, std::string("PPM: truncated header before ") + field);
    }
    if (!std::isdigit(bytes_[pos_])) {
      decode_error(pos_, std::string("PPM: expected digit for ") + field);
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1L << 24)) decode_error(pos_, std::string("PPM: ") + field + " too large");
      ++pos_;
    }
    return value;
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size()) decode_error(pos_, "PPM: truncated header");
    if (!std::isspace(bytes_[pos_])) {
      decode_error(pos_, "PPM: expected whitespace after maxval");
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  size_t pos_ = 2;
};

ColorImage decode_ppm(std::span<const std::uint8_t> bytes) {
  PpmHeaderReader reader(bytes);
  const long width = reader.read_uint("width");
  const long height = reader.read_uint("height");
  const long maxval = reader.read_uint("maxval");
  if (width <= 0 || height <= 0) decode_error(reader.offset(), "PPM: zero dimension");
  if (maxval <= 0 || maxval > 255) {
    decode_error(reader.offset(), "PPM: maxval " + std::to_string(maxval) +
                                      " unsupported (must be 1..255)");
  }
  reader.expect_single_whitespace();
  const size_t start = reader.offset();
  const size_t need = static_cast<size_t>(width) * height * 3;
  if (bytes.size() - start < need) {
    decode_error(bytes.size(), "PPM: truncated pixel data, expected " +
                                   std::to_string(need) + " bytes from offset " +
                                   std::to_string(start));
  }
  ColorImage img(static_cast<int>(width), static_cast<int>(height));
  const double scale = 1.0 / static_cast<double>(maxval);
  for (size_t i = 0; i < need; ++i) {
    const std::uint8_t v = bytes[start + i];
    if (v > maxval) decode_error(start + i, "PPM: sample exceeds maxval");
    img[i] = maxval == 255 ? v / 255.0 : v * scale;
  }
  return img;
}

}  // namespace

std::uint8_t to_byte(double v) noexcept {
  if (!(v > 0.0)) return 0;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

ColorImage decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G',
                                                    '\r', '\n', 0x1a, '\n'};
  if (bytes.empty()) decode_error(0, "empty input");
  if (bytes.size() >= 8 && std::equal(kPngSignature, kPngSignature + 8, bytes.begin())) {
    return decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    return decode_ppm(bytes);
  }
  decode_error(0, "unrecognized format (expected PNG or binary PPM P6)");
}

Bytes encode_png(const ColorImage& img) {
  Bytes pixels(img.data().size());
  for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(img[i]);
  return encode_png_bytes(pixels, img.width(), img.height(), 3);
}

Bytes encode_png(const ScalarMap& map) {
  Bytes pixels(map.pixel_count());
  for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(map[i]);
  return encode_png_bytes(pixels, map.width(), map.height(), 1);
}

Bytes encode_png(const BinaryMask& mask) {
  Bytes pixels(mask.pixel_count());
  for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = mask[i] ? 255 : 0;
  return encode_png_bytes(pixels, mask.width(), mask.height(), 1);
}

Bytes encode_ppm(const ColorImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + img.data().size());
  for (double v : img.data()) out.push_back(to_byte(v));
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for reading");
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::kIo, "read failed for '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

ColorImage load_image(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void save_image(const std::filesystem::path& path, const ColorImage& img) {
  if (path.extension() == ".ppm") {
    write_file(path, encode_ppm(img));
  } else {
    write_file(path, encode_png(img));
  }
}

void save_image(const std::filesystem::path& path, const ScalarMap& map) {
  write_file(path, encode_png(map));
}

void save_image(const std::filesystem::path& path, const BinaryMask& mask) {
  write_file(path, encode_png(mask));
}

}  // namespace skydehaze
