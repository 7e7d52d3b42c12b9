#include "gdd/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gdd/error.hpp"

namespace gdd {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw InvalidInput("config: bad value '" + value + "' for '" + key + "'");
  }
  return out;
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<double>(key, item));
  }
  if (out.empty()) throw InvalidInput("config: empty list for '" + key + "'");
  return out;
}

}  // namespace

const char* to_string(CgMode mode) { return mode == CgMode::learned ? "learned" : "analytic"; }

CgMode parse_cg_mode(const std::string& text) {
  if (text == "learned") return CgMode::learned;
  if (text == "analytic") return CgMode::analytic;
  throw InvalidInput("cg_mode must be 'learned' or 'analytic', got '" + text + "'");
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "patch_side",    "window_radius", "feature_dim",    "K",
      "s",             "T",             "cg_mode",        "sigma_train",
      "sigma_test",    "eval_sigmas",   "epochs",         "batch_size",
      "learning_rate", "seed",          "sigma_spatial",  "sigma_range",
      "gradient_scale", "diagonal_loading", "mu",         "train_dir",
      "test_dir",      "checkpoint",    "output_dir",     "input",
      "ground_truth"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "patch_side") patch_side = parse_number<int>(key, value);
  else if (key == "window_radius") window_radius = parse_number<int>(key, value);
  else if (key == "feature_dim") feature_dim = parse_number<int>(key, value);
  else if (key == "K") K = parse_number<int>(key, value);
  else if (key == "s") s = parse_number<double>(key, value);
  else if (key == "T") T = parse_number<int>(key, value);
  else if (key == "cg_mode") cg_mode = parse_cg_mode(value);
  else if (key == "sigma_train") sigma_train = parse_number<double>(key, value);
  else if (key == "sigma_test") sigma_test = parse_number<double>(key, value);
  else if (key == "eval_sigmas") eval_sigmas = parse_list(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "sigma_spatial") sigma_spatial = parse_number<double>(key, value);
  else if (key == "sigma_range") sigma_range = parse_number<double>(key, value);
  else if (key == "gradient_scale") gradient_scale = parse_number<double>(key, value);
  else if (key == "diagonal_loading") diagonal_loading = parse_number<double>(key, value);
  else if (key == "mu") mu = parse_number<double>(key, value);
  else if (key == "train_dir") train_dir = value;
  else if (key == "test_dir") test_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "output_dir") output_dir = value;
  else if (key == "input") input = value;
  else if (key == "ground_truth") ground_truth = value;
  else throw InvalidInput("config: unknown key '" + key + "'");
}

Hyper RunConfig::hyper() const {
  Hyper h;
  h.window_radius = window_radius;
  h.tse_degree = K;
  h.expansion_point = s;
  h.cg_depth = T;
  h.cg_mode = cg_mode;
  h.mu = mu;
  h.diagonal_loading = diagonal_loading;
  h.feature_dim = feature_dim;
  h.validate();
  return h;
}

MetricInit RunConfig::metric_init() const {
  return {sigma_spatial, sigma_range, gradient_scale};
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.hyper = hyper();
  o.init = metric_init();
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.learning_rate = learning_rate;
  o.seed = seed;
  o.patch_side = patch_side;
  return o;
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), std::move(base));
}

std::string format_config(const RunConfig& c) {
  std::string sigmas;
  for (std::size_t i = 0; i < c.eval_sigmas.size(); ++i) {
    sigmas += (i ? "," : "") + fmt::format("{}", c.eval_sigmas[i]);
  }
  std::string out;
  auto line = [&out](const char* key, const std::string& value) {
    out += fmt::format("{} = {}\n", key, value);
  };
  line("patch_side", std::to_string(c.patch_side));
  line("window_radius", std::to_string(c.window_radius));
  line("feature_dim", std::to_string(c.feature_dim));
  line("K", std::to_string(c.K));
  line("s", fmt::format("{}", c.s));
  line("T", std::to_string(c.T));
  line("cg_mode", to_string(c.cg_mode));
  line("sigma_train", fmt::format("{}", c.sigma_train));
  line("sigma_test", fmt::format("{}", c.sigma_test));
  line("eval_sigmas", sigmas);
  line("epochs", std::to_string(c.epochs));
  line("batch_size", std::to_string(c.batch_size));
  line("learning_rate", fmt::format("{}", c.learning_rate));
  line("seed", std::to_string(c.seed));
  line("sigma_spatial", fmt::format("{}", c.sigma_spatial));
  line("sigma_range", fmt::format("{}", c.sigma_range));
  line("gradient_scale", fmt::format("{}", c.gradient_scale));
  line("diagonal_loading", fmt::format("{}", c.diagonal_loading));
  line("mu", fmt::format("{}", c.mu));
  line("train_dir", c.train_dir.string());
  line("test_dir", c.test_dir.string());
  line("checkpoint", c.checkpoint.string());
  line("output_dir", c.output_dir.string());
  line("input", c.input.string());
  line("ground_truth", c.ground_truth.string());
  return out;
}

}  // namespace gdd
