#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gdd/commands.hpp"
#include "gdd/error.hpp"
#include "gdd/imaging.hpp"

using namespace gdd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

struct Workspace {
  fs::path root;
  RunConfig config;

  explicit Workspace(const char* name) : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    fs::create_directories(root / "clean");
    for (int i = 0; i < 3; ++i) {
      save_image(make_synthetic_image(40, 36, 30 + i), root / "clean" / ("img" + std::to_string(i) + ".pgm"));
    }
    config.patch_side = 16;
    config.window_radius = 2;
    config.epochs = 1;
    config.seed = 4;
    config.eval_sigmas = {10, 20};
  }
};

}  // namespace

TEST_CASE("corrupt writes noisy copies and a manifest") {
  Workspace w("gdd_cmd_corrupt");
  std::ostringstream log;
  RunConfig c = w.config;
  c.input = w.root / "clean";
  c.output_dir = w.root / "noisy";
  CHECK(cli::cmd_corrupt(c, log) == 3);
  const std::string manifest = slurp(c.output_dir / "manifest.csv");
  CHECK(manifest.rfind("file,seed,sigma\n", 0) == 0);
  CHECK(line_count(manifest) == 4);
  CHECK(manifest.find("img1.pgm,5,15") != std::string::npos);

  c.output_dir = w.root / "noisy2";
  cli::cmd_corrupt(c, log);
  CHECK(slurp(w.root / "noisy2" / "manifest.csv") == manifest);
  CHECK(slurp(w.root / "noisy2" / "img0.pgm") == slurp(w.root / "noisy" / "img0.pgm"));

  c.sigma_test = 0.0;
  c.output_dir = w.root / "zero";
  cli::cmd_corrupt(c, log);
  CHECK(load_image(w.root / "zero" / "img2.pgm") == load_image(w.root / "clean" / "img2.pgm"));

  c.input = w.root / "absent";
  CHECK_THROWS_AS(cli::cmd_corrupt(c, log), IoError);
  c.input.clear();
  CHECK_THROWS_AS(cli::cmd_corrupt(c, log), InvalidInput);
}

TEST_CASE("train, denoise, eval and inspect") {
  Workspace w("gdd_cmd_pipeline");
  std::ostringstream log;
  RunConfig c = w.config;
  c.train_dir = w.root / "clean";
  c.test_dir = w.root / "clean";
  c.output_dir = w.root / "run";

  SUBCASE("zero epochs store the initialization") {
    c.epochs = 0;
    const TrainResult r = cli::cmd_train(c, log);
    const Checkpoint cp = read_checkpoint(c.output_dir / "checkpoint.txt");
    CHECK(cp.params == r.initial_params);
    CHECK(slurp(c.output_dir / "history.csv") == "epoch,train_loss,val_psnr\n");

    c.checkpoint = c.output_dir / "checkpoint.txt";
    const std::string report = cli::cmd_inspect(c, log);
    CHECK(report.find("tse_coeffs = 1 -1 1 -1 1 -1 1 -1 1 -1 1\n") != std::string::npos);
    CHECK(report.find("metric.psd = true") != std::string::npos);
    std::istringstream lines(report);
    std::string line;
    while (std::getline(lines, line)) CHECK(line.find(" = ") != std::string::npos);
  }

  SUBCASE("one epoch end to end") {
    cli::cmd_train(c, log);
    const std::string checkpoint_bytes = slurp(c.output_dir / "checkpoint.txt");
    const std::string history = slurp(c.output_dir / "history.csv");
    CHECK(line_count(history) == 2);
    CHECK(fs::exists(c.output_dir / "train_run.cfg"));

    RunConfig again = c;
    again.output_dir = w.root / "run2";
    cli::cmd_train(again, log);
    CHECK(slurp(again.output_dir / "checkpoint.txt") == checkpoint_bytes);
    CHECK(slurp(again.output_dir / "history.csv") == history);

    RunConfig d = c;
    d.checkpoint = c.output_dir / "checkpoint.txt";
    d.input = w.root / "noisy.pgm";
    d.ground_truth = w.root / "clean" / "img0.pgm";
    save_image(add_awgn(load_image(d.ground_truth), 15, 1), d.input);
    const cli::DenoiseReport rep = cli::cmd_denoise(d, log);
    const GrayImage out = load_image(rep.output);
    CHECK(out.width == 32);
    CHECK(out.height == 32);
    REQUIRE(rep.has_psnr);
    CHECK(rep.psnr == doctest::Approx(psnr(crop(load_image(d.ground_truth), 32, 32), out)).epsilon(1e-3));

    RunConfig e = d;
    e.input.clear();
    const auto rows = cli::cmd_eval(e, log);
    CHECK(rows.size() == 2);
    const std::string csv = slurp(e.output_dir / "eval.csv");
    CHECK(csv.rfind("sigma,noisy_psnr,bf_psnr,gdd_init_psnr,gdd_trained_psnr\n", 0) == 0);
    CHECK(line_count(csv) == 3);
    for (const auto& r : rows) {
      CHECK(std::abs(r.gdd_init_psnr - r.bf_psnr) < 0.5);
    }
    CHECK(cli::cmd_eval(e, log).front().gdd_trained_psnr == rows.front().gdd_trained_psnr);
  }
}

TEST_CASE("depth zero denoising returns the input") {
  Workspace w("gdd_cmd_identity");
  std::ostringstream log;
  RunConfig c = w.config;
  c.T = 0;
  c.input = w.root / "clean" / "img1.pgm";
  c.output_dir = w.root / "out";
  const cli::DenoiseReport rep = cli::cmd_denoise(c, log);
  CHECK(load_image(rep.output) == crop(load_image(c.input), 32, 32));
}

TEST_CASE("synth writes the requested images") {
  Workspace w("gdd_cmd_synth");
  std::ostringstream log;
  RunConfig c = w.config;
  c.output_dir = w.root / "synth";
  const auto files = cli::cmd_synth(c, 2, 24, log);
  REQUIRE(files.size() == 2);
  CHECK(load_image(files[1]).width == 24);
  CHECK_THROWS_AS(cli::cmd_synth(c, 0, 24, log), InvalidInput);
}
