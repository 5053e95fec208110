#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "skydehaze/error.hpp"

namespace skydehaze {

// Row-major interleaved raster: sample (x, y, c) lives at
// (y * width + x) * Channels + c.
template <typename T, int Channels>
class Raster {
 public:
  static constexpr int kChannels = Channels;
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw_invalid("negative raster dimensions");
    data_.assign(static_cast<size_t>(width) * height * Channels, fill);
  }
  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0) throw_invalid("negative raster dimensions");
    if (data_.size() != static_cast<size_t>(width) * height * Channels) {
      throw_invalid("raster data length " + std::to_string(data_.size()) +
                    " does not match " + std::to_string(width) + "x" +
                    std::to_string(height) + "x" + std::to_string(Channels));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  size_t pixel_count() const noexcept {
    return static_cast<size_t>(width_) * height_;
  }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y, int c = 0) noexcept {
    return data_[(static_cast<size_t>(y) * width_ + x) * Channels + c];
  }
  const T& operator()(int x, int y, int c = 0) const noexcept {
    return data_[(static_cast<size_t>(y) * width_ + x) * Channels + c];
  }
  T& operator[](size_t i) noexcept { return data_[i]; }
  const T& operator[](size_t i) const noexcept { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool same_size(int width, int height) const noexcept {
    return width_ == width && height_ == height;
  }
  template <typename U, int C>
  bool same_size(const Raster<U, C>& other) const noexcept {
    return same_size(other.width(), other.height());
  }

  bool operator==(const Raster&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Normalized RGB, samples in [0,1].
using ColorImage = Raster<double, 3>;
// Grayscale, dark channel, transmission, confidence maps.
using ScalarMap = Raster<double, 1>;
// Binary sky mask, 0 or 1.
using BinaryMask = Raster<std::uint8_t, 1>;
using LabelMap = Raster<std::int32_t, 1>;

// Labeled segmentation. Label 0 is reserved for background; every label in
// use forms one 4-connected component.
struct RegionMask {
  LabelMap labels;
  std::set<std::int32_t> sky_labels;

  int width() const noexcept { return labels.width(); }
  int height() const noexcept { return labels.height(); }
  BinaryMask binarize() const;
  // Number of distinct non-zero labels.
  int region_count() const;
};

template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (!a.same_size(b)) {
    throw_invalid(std::string(what) + ": dimension mismatch (" +
                  std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                  " vs " + std::to_string(b.width()) + "x" +
                  std::to_string(b.height()) + ")");
  }
}

// Throws kInvalidArgument if any sample is outside [0,1] or NaN.
void check_unit_range(const ColorImage& img, const char* what);
void clamp_unit(ColorImage& img);

// BT.601 luminance 0.299 r + 0.587 g + 0.114 b.
ScalarMap to_grayscale(const ColorImage& img);
double luminance(double r, double g, double b) noexcept;

enum class MorphOp { kDilate, kErode, kOpen, kClose };

// Binary morphology with a (2r+1)x(2r+1) square structuring element. Windows
// are clipped to the frame: out-of-frame pixels never contribute.
BinaryMask morphology(const BinaryMask& mask, MorphOp op, int radius);

MorphOp parse_morph_op(const std::string& name);

}  // namespace skydehaze
