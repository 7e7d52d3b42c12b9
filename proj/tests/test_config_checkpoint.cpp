#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gdd/checkpoint.hpp"
#include "gdd/config.hpp"
#include "gdd/error.hpp"
#include "test_support.hpp"

using namespace gdd;
namespace fs = std::filesystem;

TEST_CASE("config defaults") {
  const RunConfig c;
  CHECK(c.patch_side == 64);
  CHECK(c.window_radius == 3);
  CHECK(c.feature_dim == 5);
  CHECK(c.K == 10);
  CHECK(c.s == 1.0);
  CHECK(c.T == 15);
  CHECK(c.cg_mode == CgMode::learned);
  CHECK(c.epochs == 20);
  CHECK(c.batch_size == 3);
  CHECK(c.learning_rate == 1e-3);
  const Hyper h = c.hyper();
  CHECK(h.tse_degree == 10);
  CHECK(h.cg_depth == 15);
  const TrainOptions t = c.train_options();
  CHECK(t.epochs == 20);
  CHECK(t.patch_side == 64);
}

TEST_CASE("config text parsing") {
  const RunConfig c = parse_config_text(
      "# comment\n"
      "K = 12   # trailing\n"
      "cg_mode = analytic\n"
      "eval_sigmas = 5, 7.5\n"
      "train_dir = /data/train\n"
      "\n"
      "seed=18446744073709551615\n");
  CHECK(c.K == 12);
  CHECK(c.cg_mode == CgMode::analytic);
  CHECK(c.eval_sigmas == std::vector<double>{5.0, 7.5});
  CHECK(c.train_dir == fs::path("/data/train"));
  CHECK(c.seed == 18446744073709551615ull);

  CHECK_THROWS_AS(parse_config_text("bogus = 1\n"), InvalidInput);
  CHECK_THROWS_AS(parse_config_text("K = ten\n"), InvalidInput);
  CHECK_THROWS_AS(parse_config_text("K 10\n"), InvalidInput);
  CHECK_THROWS_AS(parse_config_text("cg_mode = fast\n"), InvalidInput);
  CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("formatted config parses back to the same values") {
  RunConfig c;
  c.K = 7;
  c.s = 0.9;
  c.learning_rate = 3e-4;
  c.eval_sigmas = {12.5, 30};
  c.output_dir = "out dir";
  c.seed = 99;
  const RunConfig back = parse_config_text(format_config(c));
  CHECK(format_config(back) == format_config(c));
  CHECK(back.s == 0.9);
  CHECK(back.output_dir == fs::path("out dir"));
  for (const std::string& key : RunConfig::keys()) CHECK(format_config(c).find(key + " = ") != std::string::npos);
}

TEST_CASE("checkpoint text round trip is exact") {
  Hyper h;
  h.tse_degree = 6;
  h.cg_depth = 4;
  h.diagonal_loading = 0.05;
  const Vector theta = testing::random_vector(ParamVector::packed_size(h), 5);
  const Checkpoint cp{h, ParamVector::unpack(theta, h)};
  const std::string text = format_checkpoint(cp);
  CHECK(text.rfind("gdd-checkpoint 1\n", 0) == 0);
  const Checkpoint back = parse_checkpoint(text);
  CHECK(back == cp);
  CHECK(back.params.pack() == theta);

  const fs::path path = fs::temp_directory_path() / "gdd_cp_test.txt";
  write_checkpoint(cp, path);
  CHECK(read_checkpoint(path) == cp);
}

TEST_CASE("malformed checkpoints are rejected") {
  const std::string good = format_checkpoint({Hyper{}, ParamVector::initial(Hyper{})});
  CHECK_THROWS_AS(parse_checkpoint("gdd-checkpoint 2\n"), IoError);
  CHECK_THROWS_AS(parse_checkpoint("hello\n"), IoError);
  std::string missing = good;
  missing.erase(missing.find("cg_beta"));
  CHECK_THROWS_AS(parse_checkpoint(missing), IoError);
  std::string bad = good;
  bad.replace(bad.find("tse_coeffs 1"), 12, "tse_coeffs x");
  CHECK_THROWS_AS(parse_checkpoint(bad), IoError);
  std::string short_row = good;
  short_row.replace(short_row.find("K 10"), 4, "K 11");
  CHECK_THROWS_AS(parse_checkpoint(short_row), IoError);
  CHECK_THROWS_AS(read_checkpoint("/nonexistent/cp.txt"), IoError);
}
