#include "skydehaze/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "skydehaze/codec.hpp"

namespace skydehaze {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw_invalid("not a number: '" + value + "'");
  return out;
}

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw_invalid("not a boolean: '" + value + "'");
}

MeanShiftMethod parse_method(const std::string& value) {
  if (value == "grid") return MeanShiftMethod::kGrid;
  if (value == "exact") return MeanShiftMethod::kExact;
  throw_invalid("unknown mean-shift method '" + value + "' (expected grid or exact)");
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> s;
    auto real = [](auto member) {
      return [member](PipelineConfig& c, const std::string& v) {
        member(c) = parse_number<double>(v);
      };
    };
    auto integer = [](auto member) {
      return [member](PipelineConfig& c, const std::string& v) {
        member(c) = parse_number<int>(v);
      };
    };
    auto boolean = [](auto member) {
      return [member](PipelineConfig& c, const std::string& v) { member(c) = parse_bool(v); };
    };
    s["dcp.window_radius"] = integer([](PipelineConfig& c) -> int& { return c.dcp.window_radius; });
    s["dcp.omega"] = real([](PipelineConfig& c) -> double& { return c.dcp.omega; });
    s["dcp.t_floor"] = real([](PipelineConfig& c) -> double& { return c.dcp.t_floor; });
    s["dcp.airlight_fraction"] =
        real([](PipelineConfig& c) -> double& { return c.dcp.airlight_fraction; });
    s["dcp.guided_radius"] = integer([](PipelineConfig& c) -> int& { return c.dcp.guided_radius; });
    s["dcp.guided_epsilon"] =
        real([](PipelineConfig& c) -> double& { return c.dcp.guided_epsilon; });
    s["dcp.adjust_brightness"] =
        boolean([](PipelineConfig& c) -> bool& { return c.dcp.adjust_brightness; });
    s["meanshift.spatial_bandwidth"] =
        real([](PipelineConfig& c) -> double& { return c.meanshift.spatial_bandwidth; });
    s["meanshift.range_bandwidth"] =
        real([](PipelineConfig& c) -> double& { return c.meanshift.range_bandwidth; });
    s["meanshift.min_region"] =
        integer([](PipelineConfig& c) -> int& { return c.meanshift.min_region; });
    s["meanshift.max_iters"] =
        integer([](PipelineConfig& c) -> int& { return c.meanshift.max_iters; });
    s["meanshift.convergence_eps"] =
        real([](PipelineConfig& c) -> double& { return c.meanshift.convergence_eps; });
    s["meanshift.edge_confidence_threshold"] =
        real([](PipelineConfig& c) -> double& { return c.meanshift.edge_confidence_threshold; });
    s["meanshift.morph_radius"] =
        integer([](PipelineConfig& c) -> int& { return c.meanshift.morph_radius; });
    s["meanshift.path_adoption"] =
        boolean([](PipelineConfig& c) -> bool& { return c.meanshift.path_adoption; });
    s["meanshift.method"] = [](PipelineConfig& c, const std::string& v) {
      c.meanshift.method = parse_method(v);
    };
    s["feather_width"] = integer([](PipelineConfig& c) -> int& { return c.feather_width; });
    s["model_path"] = [](PipelineConfig& c, const std::string& v) {
      if (v.empty()) {
        c.model_path.reset();
      } else {
        c.model_path = v;
      }
    };
    s["tile"] = integer([](PipelineConfig& c) -> int& { return c.tile; });
    s["overlap"] = integer([](PipelineConfig& c) -> int& { return c.overlap; });
    s["seed"] = [](PipelineConfig& c, const std::string& v) {
      c.seed = parse_number<std::uint64_t>(v);
    };
    s["brightness_post_fusion"] =
        boolean([](PipelineConfig& c) -> bool& { return c.brightness_post_fusion; });
    return s;
  }();
  return setters;
}

}  // namespace

void PipelineConfig::validate() const {
  dcp.validate();
  meanshift.validate();
  if (feather_width < 0) throw_invalid("feather_width must be >= 0");
  if (overlap < 0) throw_invalid("overlap must be >= 0");
  if (tile <= 2 * overlap) throw_invalid("tile must exceed 2 * overlap");
}

PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw_invalid("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& setters = config_setters();
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw_invalid("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      it->second(config, value);
    } catch (const Error& e) {
      throw_invalid("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  config.validate();
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  try {
    return parse_config_text(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------- fusion --

namespace {

// Squared-distance transform of a sampled function along one line
// (lower envelope of parabolas).
void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d,
                           std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

ScalarMap distance_to_background(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  ScalarMap dist(w, h);
  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  // Columns first, then rows.
  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = mask(x, y) ? kInf : 0.0;
    distance_transform_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) dist(x, y) = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = dist(x, y);
    distance_transform_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) dist(x, y) = std::sqrt(d[x]);
  }
  return dist;
}

ScalarMap fusion_alpha(const BinaryMask& mask, int feather_width) {
  if (feather_width < 0) throw_invalid("feather_width must be >= 0");
  ScalarMap alpha(mask.width(), mask.height());
  if (feather_width == 0) {
    for (size_t i = 0; i < mask.pixel_count(); ++i) alpha[i] = mask[i] ? 1.0 : 0.0;
    return alpha;
  }
  const ScalarMap dist = distance_to_background(mask);
  for (size_t i = 0; i < mask.pixel_count(); ++i) {
    alpha[i] = std::min(1.0, dist[i] / feather_width);
  }
  return alpha;
}

ColorImage fuse_regions(const ColorImage& nonsky, const ColorImage& sky, const BinaryMask& mask,
                        int feather_width) {
  require_same_size(nonsky, sky, "fuse_regions");
  require_same_size(nonsky, mask, "fuse_regions");
  const ScalarMap alpha = fusion_alpha(mask, feather_width);
  ColorImage out(nonsky.width(), nonsky.height());
  for (size_t i = 0; i < alpha.pixel_count(); ++i) {
    const double a = alpha[i];
    for (size_t c = 3 * i; c < 3 * i + 3; ++c) {
      if (a == 0.0) {
        out[c] = nonsky[c];
      } else if (a == 1.0) {
        out[c] = sky[c];
      } else {
        out[c] = a * sky[c] + (1.0 - a) * nonsky[c];
      }
    }
  }
  return out;
}

// ------------------------------------------------------------ dehaze --

DehazeResult dehaze(const ColorImage& img, const PipelineConfig& config) {
  config.validate();
  std::optional<NetworkSpec> model;
  if (config.model_path) model = load_checkpoint(*config.model_path);
  return dehaze(img, config, model ? &*model : nullptr);
}

DehazeResult dehaze(const ColorImage& img, const PipelineConfig& config,
                    const NetworkSpec* model) {
  config.validate();
  if (model != nullptr) model->validate_architecture();
  check_unit_range(img, "dehaze input");
  const auto start = Clock::now();
  std::map<std::string, double> times;
  DehazeResult result;

  auto t = Clock::now();
  SkySegmentation seg = segment_sky(img, config.meanshift);
  result.mask = std::move(seg.mask);
  result.regions = std::move(seg.regions);
  times["segmentation"] = elapsed_ms(t);

  t = Clock::now();
  DcpParams dcp_params = config.dcp;
  if (config.brightness_post_fusion) dcp_params.adjust_brightness = false;
  result.dcp = dehaze_dcp(img, dcp_params);
  times["dcp"] = elapsed_ms(t);

  const bool has_sky = std::any_of(result.mask.data().begin(), result.mask.data().end(),
                                   [](std::uint8_t v) { return v != 0; });
  std::optional<std::string> skipped;
  if (model == nullptr) {
    skipped = "no model configured";
  } else if (!has_sky) {
    skipped = "no sky region detected";
  }

  t = Clock::now();
  if (!skipped) {
    result.sky_branch = infer_sky(*model, img, result.mask, {config.tile, config.overlap});
  }
  times["network"] = elapsed_ms(t);

  t = Clock::now();
  ColorImage out = result.sky_branch
                       ? fuse_regions(result.dcp.restored, *result.sky_branch, result.mask,
                                      config.feather_width)
                       : result.dcp.restored;
  if (config.brightness_post_fusion && config.dcp.adjust_brightness) {
    out = adjust_brightness(out);
  }
  clamp_unit(out);
  for (double v : out.data()) {
    if (std::isnan(v)) throw Error(ErrorKind::kNumeric, "dehaze: NaN in fused output");
  }
  times["fusion"] = elapsed_ms(t);

  t = Clock::now();
  result.report = evaluate(img, out, {});
  times["metrics"] = elapsed_ms(t);

  result.report.stage_times_ms = std::move(times);
  result.report.sky_skipped = std::move(skipped);
  result.image = std::move(out);
  result.total_ms = elapsed_ms(start);
  return result;
}

// ----------------------------------------------------------- dataset --

ColorImage rotate_quarter(const ColorImage& img, int quarter_turns) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  const int w = img.width();
  const int h = img.height();
  if (turns == 0) return img;
  ColorImage out = turns == 2 ? ColorImage(w, h) : ColorImage(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int ox = x;
      int oy = y;
      switch (turns) {
        case 1: ox = h - 1 - y; oy = x; break;
        case 2: ox = w - 1 - x; oy = h - 1 - y; break;
        case 3: ox = y; oy = w - 1 - x; break;
      }
      for (int c = 0; c < 3; ++c) out(ox, oy, c) = img(x, y, c);
    }
  }
  return out;
}

ColorImage upscale_nearest(const ColorImage& img, int factor) {
  if (factor < 1) throw_invalid("upscale factor must be >= 1");
  ColorImage out(img.width() * factor, img.height() * factor);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int c = 0; c < 3; ++c) out(x, y, c) = img(x / factor, y / factor, c);
    }
  }
  return out;
}

std::vector<AugmentedImage> augment_dataset(const std::vector<ColorImage>& images) {
  if (images.empty()) throw_invalid("augment_dataset: no input images");
  std::vector<AugmentedImage> out;
  out.reserve(images.size() * kAugmentRotations * kAugmentMaxScale);
  for (size_t i = 0; i < images.size(); ++i) {
    for (int r = 0; r < kAugmentRotations; ++r) {
      const ColorImage rotated = rotate_quarter(images[i], r);
      for (int s = 1; s <= kAugmentMaxScale; ++s) {
        out.push_back({upscale_nearest(rotated, s), i, 90 * r, s});
      }
    }
  }
  return out;
}

std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& dir, int patch) {
  namespace fs = std::filesystem;
  if (patch < 1) throw_invalid("patch size must be >= 1");
  const fs::path hazy_dir = dir / "hazy";
  const fs::path clear_dir = dir / "clear";
  std::error_code ec;
  if (!fs::is_directory(hazy_dir, ec) || !fs::is_directory(clear_dir, ec)) {
    throw Error(ErrorKind::kIo, dir.string() + ": expected hazy/ and clear/ subdirectories");
  }
  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(hazy_dir)) {
    if (entry.is_regular_file()) names.push_back(entry.path().filename());
  }
  std::sort(names.begin(), names.end());
  std::vector<TrainingPair> pairs;
  int group = 0;
  for (const auto& name : names) {
    const ColorImage hazy = load_image(hazy_dir / name);
    const ColorImage clear = load_image(clear_dir / name);
    require_same_size(hazy, clear, "training pair");
    for (int y0 = 0; y0 + patch <= hazy.height(); y0 += patch) {
      for (int x0 = 0; x0 + patch <= hazy.width(); x0 += patch) {
        TrainingPair pair{Tensor3(patch, patch, 3), Tensor3(patch, patch, 3), group};
        for (int y = 0; y < patch; ++y) {
          for (int x = 0; x < patch; ++x) {
            for (int c = 0; c < 3; ++c) {
              pair.hazy.at(y, x, c) = hazy(x0 + x, y0 + y, c);
              pair.clear.at(y, x, c) = clear(x0 + x, y0 + y, c);
            }
          }
        }
        pairs.push_back(std::move(pair));
      }
    }
    ++group;
  }
  if (pairs.empty()) {
    throw_invalid(dir.string() + ": no training patches of size " + std::to_string(patch));
  }
  return pairs;
}

}  // namespace skydehaze
