#include "skydehaze/image.hpp"

#include <algorithm>
#include <cmath>

#include "window_ops.hpp"

namespace skydehaze {

BinaryMask RegionMask::binarize() const {
  BinaryMask out(labels.width(), labels.height());
  for (size_t i = 0; i < labels.pixel_count(); ++i) {
    out[i] = sky_labels.count(labels[i]) ? 1 : 0;
  }
  return out;
}

int RegionMask::region_count() const {
  std::set<std::int32_t> seen;
  for (auto l : labels.data()) {
    if (l != 0) seen.insert(l);
  }
  return static_cast<int>(seen.size());
}

void check_unit_range(const ColorImage& img, const char* what) {
  for (size_t i = 0; i < img.data().size(); ++i) {
    const double v = img[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw_invalid(std::string(what) + ": sample " + std::to_string(i) +
                    " = " + std::to_string(v) + " outside [0,1]");
    }
  }
}

void clamp_unit(ColorImage& img) {
  for (auto& v : img.data()) v = std::clamp(v, 0.0, 1.0);
}

double luminance(double r, double g, double b) noexcept {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

ScalarMap to_grayscale(const ColorImage& img) {
  ScalarMap out(img.width(), img.height());
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    out[i] = luminance(img[3 * i], img[3 * i + 1], img[3 * i + 2]);
  }
  return out;
}

BinaryMask morphology(const BinaryMask& mask, MorphOp op, int radius) {
  if (radius < 1) {
    throw_invalid("morphology radius must be >= 1, got " +
                  std::to_string(radius));
  }
  switch (op) {
    case MorphOp::kDilate:
      return detail::max_filter(mask, radius);
    case MorphOp::kErode:
      return detail::min_filter(mask, radius);
    case MorphOp::kOpen:
      return detail::max_filter(detail::min_filter(mask, radius), radius);
    case MorphOp::kClose:
      return detail::min_filter(detail::max_filter(mask, radius), radius);
  }
  throw_invalid("unknown morphology op");
}

MorphOp parse_morph_op(const std::string& name) {
  if (name == "dilate") return MorphOp::kDilate;
  if (name == "erode") return MorphOp::kErode;
  if (name == "open") return MorphOp::kOpen;
  if (name == "close") return MorphOp::kClose;
  throw_invalid("unknown morphology op '" + name + "'");
}

}  // namespace skydehaze
