#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "skydehaze/codec.hpp"
#include "skydehaze/dehazenet.hpp"
#include "skydehaze/quality_metrics.hpp"
#include "skydehaze/scattering.hpp"
#include "support.hpp"

using namespace skydehaze;
using namespace skytest;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SKYDEHAZE_CLI_PATH + "\" " + args + " >\"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli usage errors exit with 1") {
  const auto dir = scratch_dir("cli_usage");
  const auto log = dir / "log.txt";
  CHECK(run("", log) == 1);
  CHECK(run("frobnicate", log) == 1);
  CHECK(run("dehaze", log) == 1);
  CHECK(run("train --data x", log) == 1);
  CHECK(run("--help", log) == 0);

  std::ofstream(dir / "bad.conf") << "dcp.omega = 0.9\nnot.a.key = 3\n";
  save_image(dir / "in.png", random_image(16, 16, 1));
  CHECK(run("dehaze " + q(dir / "in.png") + " -o " + q(dir / "out.png") + " --config " + q(dir / "bad.conf"), log) == 1);
  CHECK(slurp(log).find("not.a.key") != std::string::npos);
}

TEST_CASE("cli I/O errors exit with 2") {
  const auto dir = scratch_dir("cli_io");
  const auto log = dir / "log.txt";
  CHECK(run("dehaze " + q(dir / "missing.png") + " -o " + q(dir / "out.png"), log) == 2);
  std::ofstream(dir / "junk.png") << "not an image";
  CHECK(run("evaluate --before " + q(dir / "junk.png") + " --after " + q(dir / "junk.png"), log) == 2);
  save_image(dir / "in.png", random_image(16, 16, 2));
  std::ofstream(dir / "bad.dhzn") << "DHZN0garbage";
  CHECK(run("dehaze " + q(dir / "in.png") + " -o " + q(dir / "out.png") + " --model " + q(dir / "bad.dhzn"), log) == 2);
  CHECK_FALSE(fs::exists(dir / "out.png"));
}

TEST_CASE("cli NaN in the network exits with 3") {
  const auto dir = scratch_dir("cli_nan");
  NetworkSpec net = NetworkSpec::initialize(1);
  net.stem.bias[0] = std::numeric_limits<double>::quiet_NaN();
  save_checkpoint(net, dir / "nan.dhzn");
  save_image(dir / "sky.png", ColorImage(32, 24, 0.9));
  CHECK(run("dehaze " + q(dir / "sky.png") + " -o " + q(dir / "out.png") + " --model " + q(dir / "nan.dhzn"), dir / "log.txt") == 3);
  CHECK(slurp(dir / "log.txt").find("NaN") != std::string::npos);
}

TEST_CASE("cli dehaze writes an image, a flat report and intermediates") {
  const auto dir = scratch_dir("cli_dehaze");
  const auto log = dir / "log.txt";
  const ColorImage clear = sky_fixture(64, 48, 0).image;
  save_image(dir / "hazy.ppm",
             synthesize_haze(clear, {{0.8, 0.8, 0.8}, ScalarMap(64, 48, 0.6)}));
  save_checkpoint(NetworkSpec::initialize(2), dir / "net.dhzn");
  std::ofstream(dir / "run.conf") << "feather_width = 5\nmeanshift.method = grid\n";
  REQUIRE(run("dehaze " + q(dir / "hazy.ppm") + " -o " + q(dir / "out.png") + " --config " + q(dir / "run.conf") +
                  " --model " + q(dir / "net.dhzn") + " --report " + q(dir / "report.json") +
                  " --dump-intermediates " + q(dir / "dump"),
              log) == 0);
  const ColorImage out = load_image(dir / "out.png");
  CHECK(out.width() == 64);
  CHECK(out.height() == 48);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  for (const char* key : {"entropy_bits", "visible_edge_ratio", "average_gradient", "saturated_pixel_pct",
                          "stage_times_ms.segmentation", "stage_times_ms.network", "sky_skipped"}) {
    CHECK_MESSAGE(report.contains(key), key);
  }
  for (const auto& [key, value] : report.items()) CHECK_FALSE(value.is_structured());
  CHECK(report["sky_skipped"] == false);
  for (const char* f : {"mask.png", "dark_channel.png", "transmission_raw.png", "transmission.png", "dcp.png",
                        "alpha.png", "sky.png"}) {
    CHECK_MESSAGE(fs::exists(dir / "dump" / f), f);
  }

  // Report on stdout when --report is absent.
  REQUIRE(run("dehaze " + q(dir / "hazy.ppm") + " -o " + q(dir / "out2.png"), log) == 0);
  const auto stdout_report = nlohmann::json::parse(slurp(log));
  CHECK(stdout_report["sky_skipped"] == true);
  CHECK(stdout_report["sky_skipped_reason"] == "no model configured");
}

TEST_CASE("cli segment, synthesize and evaluate") {
  const auto dir = scratch_dir("cli_misc");
  const auto log = dir / "log.txt";
  save_image(dir / "clear.png", sky_fixture(48, 32, 1).image);
  REQUIRE(run("segment " + q(dir / "clear.png") + " -o " + q(dir / "seg"), log) == 0);
  for (const char* f : {"gray.png", "filtered.png", "edges.png", "labels.png", "mask.png"}) {
    CHECK_MESSAGE(fs::exists(dir / "seg" / f), f);
  }

  REQUIRE(run("synthesize " + q(dir / "clear.png") + " -o " + q(dir / "hazy.png") +
                  " --airlight 0.9,0.85,0.8 --t gradient --seed 7",
              log) == 0);
  REQUIRE(run("synthesize " + q(dir / "clear.png") + " -o " + q(dir / "hazy2.png") +
                  " --airlight 0.9,0.85,0.8 --t gradient --seed 7",
              log) == 0);
  CHECK(read_file(dir / "hazy.png") == read_file(dir / "hazy2.png"));
  CHECK(run("synthesize " + q(dir / "clear.png") + " -o " + q(dir / "h.png") + " --airlight 0.9,0.85", log) == 1);
  CHECK(run("synthesize " + q(dir / "clear.png") + " -o " + q(dir / "h.png") + " --t wavy", log) == 1);

  REQUIRE(run("evaluate --before " + q(dir / "hazy.png") + " --after " + q(dir / "clear.png") + " -o " +
                  q(dir / "eval.json"),
              log) == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "eval.json"));
  CHECK(report["entropy_bits"].get<double>() == doctest::Approx(entropy(load_image(dir / "clear.png"))));
}

TEST_CASE("cli train and augment") {
  const auto dir = scratch_dir("cli_train");
  const auto log = dir / "log.txt";
  fs::create_directories(dir / "data" / "hazy");
  fs::create_directories(dir / "data" / "clear");
  for (int i = 0; i < 2; ++i) {
    const ColorImage clear = smooth_image(16, 16, 60 + i);
    const std::string name = "p" + std::to_string(i) + ".png";
    save_image(dir / "data" / "clear" / name, clear);
    save_image(dir / "data" / "hazy" / name,
               synthesize_haze(clear, {{0.8, 0.8, 0.8}, ScalarMap(16, 16, 0.6)}));
  }
  REQUIRE(run("train --data " + q(dir / "data") + " --out " + q(dir / "net.dhzn") +
                  " --epochs 2 --lr 0.01 --seed 3 --patch 8",
              log) == 0);
  CHECK(slurp(log).find("epoch 1") != std::string::npos);
  const NetworkSpec net = load_checkpoint(dir / "net.dhzn");
  CHECK(net.parameter_count() == NetworkSpec::initialize(0).parameter_count());
  CHECK(run("train --data " + q(dir / "data") + " --out " + q(dir / "n.dhzn") + " --lr -1", log) == 1);
  CHECK(run("train --data " + q(dir / "nowhere") + " --out " + q(dir / "n.dhzn"), log) == 2);

  REQUIRE(run("augment " + q(dir / "data" / "clear") + " -o " + q(dir / "aug"), log) == 0);
  size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir / "aug")) count += e.is_regular_file();
  CHECK(count == 40);
  CHECK(fs::exists(dir / "aug" / "p0_r90_x3.png"));
  CHECK(load_image(dir / "aug" / "p0_r90_x3.png").width() == 48);
}
