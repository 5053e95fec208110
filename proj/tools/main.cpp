// skydehaze command-line front end.
//
// Exit codes: 0 success, 1 usage or invalid parameter, 2 I/O or decode
// failure, 3 numeric failure.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skydehaze/codec.hpp"
#include "skydehaze/dehazenet.hpp"
#include "skydehaze/error.hpp"
#include "skydehaze/pipeline.hpp"
#include "skydehaze/quality_metrics.hpp"
#include "skydehaze/random.hpp"
#include "skydehaze/scattering.hpp"

namespace fs = std::filesystem;
using namespace skydehaze;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIoFailure = 2, kNumericFailure = 3 };

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return kUsage;
    case ErrorKind::kDecode:
    case ErrorKind::kIo: return kIoFailure;
    case ErrorKind::kNumeric: return kNumericFailure;
  }
  return kUsage;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, dir.string() + ": " + ec.message());
}

bool is_image_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".ppm" || ext == ".PNG" || ext == ".PPM";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::kIo, dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Label map colored with a fixed-seed palette; label 0 stays black.
ColorImage colorize_labels(const LabelMap& labels, std::uint64_t seed) {
  std::map<std::int32_t, std::array<double, 3>> palette;
  Rng rng(seed);
  ColorImage out(labels.width(), labels.height());
  for (size_t i = 0; i < labels.pixel_count(); ++i) {
    const std::int32_t label = labels[i];
    if (label == 0) continue;
    auto it = palette.find(label);
    if (it == palette.end()) {
      it = palette.emplace(label, std::array{rng.uniform(), rng.uniform(), rng.uniform()}).first;
    }
    for (int c = 0; c < 3; ++c) out[3 * i + c] = it->second[c];
  }
  return out;
}

std::array<double, 3> parse_airlight(const std::string& text) {
  std::array<double, 3> a{};
  std::stringstream in(text);
  std::string item;
  int n = 0;
  while (std::getline(in, item, ',')) {
    if (n == 3) break;
    try {
      size_t used = 0;
      a[n] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw_invalid("--airlight: not a number: '" + item + "'");
    }
    ++n;
  }
  if (n != 3 || std::getline(in, item)) throw_invalid("--airlight expects r,g,b");
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sky-aware single-image dehazing"};
  app.require_subcommand(1);

  // dehaze
  auto* dehaze_cmd = app.add_subcommand("dehaze", "Dehaze one image");
  std::string dehaze_in, dehaze_out, config_path, model_path, report_path, dump_dir;
  dehaze_cmd->add_option("input", dehaze_in, "Hazy image (PNG or PPM)")->required();
  dehaze_cmd->add_option("-o,--output", dehaze_out, "Output image")->required();
  dehaze_cmd->add_option("--config", config_path, "key = value configuration file");
  dehaze_cmd->add_option("--model", model_path, "Network checkpoint (overrides model_path)");
  dehaze_cmd->add_option("--report", report_path, "Write the quality report (JSON) here");
  dehaze_cmd->add_option("--dump-intermediates", dump_dir, "Directory for intermediate maps");

  // segment
  auto* segment_cmd = app.add_subcommand("segment", "Write sky segmentation intermediates");
  std::string segment_in, segment_dir, segment_config;
  segment_cmd->add_option("input", segment_in, "Input image")->required();
  segment_cmd->add_option("-o,--output", segment_dir, "Output directory")->required();
  segment_cmd->add_option("--config", segment_config, "key = value configuration file");

  // synthesize
  auto* synth_cmd = app.add_subcommand("synthesize", "Add synthetic haze to a clear image");
  std::string synth_in, synth_out, airlight_text = "0.8,0.8,0.8", t_mode = "const";
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("input", synth_in, "Clear image")->required();
  synth_cmd->add_option("-o,--output", synth_out, "Hazy output image")->required();
  synth_cmd->add_option("--airlight", airlight_text, "Airlight r,g,b in [0,1]");
  synth_cmd->add_option("--t", t_mode, "Transmission field: const or gradient");
  synth_cmd->add_option("--seed", synth_seed, "Random seed");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a restored image against its input");
  std::string before_path, after_path, eval_out;
  eval_cmd->add_option("--before", before_path, "Input image")->required();
  eval_cmd->add_option("--after", after_path, "Restored image")->required();
  eval_cmd->add_option("-o,--output", eval_out, "Report file (JSON); stdout if omitted");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the sky network on hazy/clear pairs");
  std::string data_dir, ckpt_out, init_ckpt;
  TrainConfig train_config;
  int patch = 32;
  train_cmd->add_option("--data", data_dir, "Directory with hazy/ and clear/ subdirectories")
      ->required();
  train_cmd->add_option("--out", ckpt_out, "Checkpoint to write")->required();
  train_cmd->add_option("--epochs", train_config.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", train_config.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", train_config.momentum, "Momentum")->capture_default_str();
  train_cmd->add_option("--batch", train_config.batch, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--seed", train_config.seed, "Seed for init and shuffling");
  train_cmd->add_option("--patch", patch, "Patch size")->capture_default_str();
  train_cmd->add_option("--init", init_ckpt, "Start from this checkpoint");

  // augment
  auto* augment_cmd = app.add_subcommand("augment", "Rotate and upscale every image in a directory");
  std::string augment_in, augment_out;
  augment_cmd->add_option("input", augment_in, "Input directory")->required();
  augment_cmd->add_option("-o,--output", augment_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*dehaze_cmd) {
      PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
      if (!model_path.empty()) config.model_path = model_path;
      // Load the model first so a bad checkpoint fails before any work.
      std::optional<NetworkSpec> model;
      if (config.model_path) model = load_checkpoint(*config.model_path);
      const ColorImage img = load_image(dehaze_in);
      const DehazeResult result = dehaze(img, config, model ? &*model : nullptr);
      save_image(dehaze_out, result.image);
      const std::string json = result.report.to_json();
      if (report_path.empty()) {
        std::cout << json;
      } else {
        write_text(report_path, json);
      }
      if (!dump_dir.empty()) {
        const fs::path dir(dump_dir);
        ensure_dir(dir);
        save_image(dir / "mask.png", result.mask);
        save_image(dir / "dark_channel.png", result.dcp.dark_channel);
        save_image(dir / "transmission_raw.png", result.dcp.raw_transmission);
        save_image(dir / "transmission.png", result.dcp.transmission);
        save_image(dir / "dcp.png", result.dcp.restored);
        save_image(dir / "alpha.png", fusion_alpha(result.mask, config.feather_width));
        if (result.sky_branch) save_image(dir / "sky.png", *result.sky_branch);
      }
    } else if (*segment_cmd) {
      const PipelineConfig config =
          segment_config.empty() ? PipelineConfig{} : load_config(segment_config);
      const ColorImage img = load_image(segment_in);
      const SkySegmentation seg = segment_sky(img, config.meanshift);
      const fs::path dir(segment_dir);
      ensure_dir(dir);
      save_image(dir / "gray.png", seg.gray);
      save_image(dir / "filtered.png", seg.modes.range_map());
      save_image(dir / "edges.png", seg.edges);
      save_image(dir / "labels.png", colorize_labels(seg.regions.labels, config.seed));
      save_image(dir / "mask.png", seg.mask);
      std::cout << "regions: " << seg.regions.region_count()
                << ", sky regions: " << seg.regions.sky_labels.size() << "\n";
    } else if (*synth_cmd) {
      const ColorImage clear = load_image(synth_in);
      HazeParams params;
      params.airlight = parse_airlight(airlight_text);
      params.transmission = random_transmission_field(
          clear.width(), clear.height(), parse_transmission_mode(t_mode), synth_seed);
      save_image(synth_out, synthesize_haze(clear, params));
    } else if (*eval_cmd) {
      const ColorImage before = load_image(before_path);
      const ColorImage after = load_image(after_path);
      const std::string json = evaluate(before, after).to_json();
      if (eval_out.empty()) {
        std::cout << json;
      } else {
        write_text(eval_out, json);
      }
    } else if (*train_cmd) {
      const std::vector<TrainingPair> pairs = load_training_pairs(data_dir, patch);
      NetworkSpec net =
          init_ckpt.empty() ? NetworkSpec::initialize(train_config.seed) : load_checkpoint(init_ckpt);
      const TrainResult result = train(std::move(net), pairs, train_config, [](const EpochLoss& e) {
        std::printf("epoch %d steps %ld train %.6g validation %.6g\n", e.epoch, e.steps, e.train,
                    e.validation);
        std::fflush(stdout);
      });
      save_checkpoint(result.net, ckpt_out);
    } else if (*augment_cmd) {
      const std::vector<fs::path> files = list_images(augment_in);
      if (files.empty()) throw Error(ErrorKind::kIo, augment_in + ": no PNG or PPM images");
      std::vector<ColorImage> images;
      for (const auto& f : files) images.push_back(load_image(f));
      const fs::path dir(augment_out);
      ensure_dir(dir);
      const std::vector<AugmentedImage> out = augment_dataset(images);
      for (const auto& a : out) {
        const std::string name = files[a.source].stem().string() + "_r" +
                                 std::to_string(a.rotation) + "_x" + std::to_string(a.scale) + ".png";
        save_image(dir / name, a.image);
      }
      std::cout << out.size() << " images written to " << dir.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kOk;
}
