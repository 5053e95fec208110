#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "skydehaze/dark_channel.hpp"
#include "skydehaze/dehazenet.hpp"
#include "skydehaze/image.hpp"
#include "skydehaze/quality_metrics.hpp"
#include "skydehaze/sky_segmentation.hpp"

namespace skydehaze {

struct PipelineConfig {
  DcpParams dcp;
  MeanShiftParams meanshift;
  int feather_width = 15;  // pixels; 0 switches hard on the mask
  std::optional<std::filesystem::path> model_path;
  int tile = 256;
  int overlap = 16;
  std::uint64_t seed = 0;
  // Apply the brightness adjustment to the fused output instead of the DCP
  // branch.
  bool brightness_post_fusion = false;

  void validate() const;
};

// Parses `key = value` lines on top of the defaults. '#' starts a comment.
// Keys: dcp.*, meanshift.* (field names of the parameter structs),
// feather_width, model_path, tile, overlap, seed, brightness_post_fusion.
// Unknown keys and malformed values throw kInvalidArgument naming the line.
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

// Euclidean distance from each pixel to the nearest pixel where mask == 0
// (0 on such pixels, +inf when the mask has no zero pixel).
ScalarMap distance_to_background(const BinaryMask& mask);

// Blend weight of the sky branch: min(1, d / feather_width) with d from
// distance_to_background; the mask itself when feather_width is 0.
ScalarMap fusion_alpha(const BinaryMask& mask, int feather_width);

// alpha * sky + (1 - alpha) * nonsky.
ColorImage fuse_regions(const ColorImage& nonsky, const ColorImage& sky, const BinaryMask& mask,
                        int feather_width);

struct DehazeResult {
  ColorImage image;
  QualityReport report;
  BinaryMask mask;
  RegionMask regions;
  DcpResult dcp;
  std::optional<ColorImage> sky_branch;  // network output, when it ran
  double total_ms = 0.0;
};

// Segment, DCP on the full frame, network on the sky, fuse, score. Without a
// model or without sky pixels the DCP branch is returned alone and the
// report's sky_skipped explains why. The model named in the config is loaded
// before any processing.
DehazeResult dehaze(const ColorImage& img, const PipelineConfig& config);
// Same, with an already loaded network (nullptr: no model).
DehazeResult dehaze(const ColorImage& img, const PipelineConfig& config,
                    const NetworkSpec* model);

// ----------------------------------------------------------- dataset --

// Clockwise rotation by quarter_turns * 90 degrees.
ColorImage rotate_quarter(const ColorImage& img, int quarter_turns);
// Nearest-neighbor enlargement by an integer factor.
ColorImage upscale_nearest(const ColorImage& img, int factor);

inline constexpr int kAugmentRotations = 4;
inline constexpr int kAugmentMaxScale = 5;

struct AugmentedImage {
  ColorImage image;
  size_t source = 0;   // index of the input image
  int rotation = 0;    // degrees clockwise
  int scale = 1;
};

// {0, 90, 180, 270} degrees x scale {1..5}: 20 variants per input, grouped
// by source, rotation-major.
std::vector<AugmentedImage> augment_dataset(const std::vector<ColorImage>& images);

// Loads <dir>/hazy/<name> and <dir>/clear/<name> pairs and cuts each into
// non-overlapping patch x patch tiles. Tiles of one pair share a group.
std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& dir, int patch);

}  // namespace skydehaze
