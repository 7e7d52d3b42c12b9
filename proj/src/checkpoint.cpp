#include "gdd/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "gdd/error.hpp"

namespace gdd {

namespace {

constexpr const char* kMagic = "gdd-checkpoint";
constexpr int kVersion = 1;

void write_row(std::ostringstream& out, const char* key, const Vector& values) {
  out << key;
  for (double v : values) out << ' ' << fmt::format("{:.17g}", v);
  out << '\n';
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& other) const {
  const Hyper& a = hyper;
  const Hyper& b = other.hyper;
  return a.window_radius == b.window_radius && a.tse_degree == b.tse_degree &&
         a.expansion_point == b.expansion_point && a.cg_depth == b.cg_depth && a.mu == b.mu &&
         a.diagonal_loading == b.diagonal_loading && a.feature_dim == b.feature_dim &&
         params == other.params;
}

std::string format_checkpoint(const Checkpoint& checkpoint) {
  checkpoint.params.validate(checkpoint.hyper);
  const Hyper& h = checkpoint.hyper;
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  out << "feature_dim " << h.feature_dim << '\n';
  out << "K " << h.tse_degree << '\n';
  out << "T " << h.cg_depth << '\n';
  out << "window_radius " << h.window_radius << '\n';
  out << "s " << fmt::format("{:.17g}", h.expansion_point) << '\n';
  out << "mu " << fmt::format("{:.17g}", h.mu) << '\n';
  out << "diagonal_loading " << fmt::format("{:.17g}", h.diagonal_loading) << '\n';
  write_row(out, "metric_factor", checkpoint.params.metric_factor);
  write_row(out, "tse_coeffs", checkpoint.params.tse_coeffs);
  write_row(out, "cg_alpha", checkpoint.params.cg_alpha);
  write_row(out, "cg_beta", checkpoint.params.cg_beta);
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw IoError("checkpoint: missing 'gdd-checkpoint' header");
  }
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::map<std::string, Vector> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    Vector values;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw IoError("checkpoint: bad number '" + token + "' in row '" + key + "'");
      }
    }
    if (!rows.emplace(key, std::move(values)).second) {
      throw IoError("checkpoint: duplicate row '" + key + "'");
    }
  }

  auto scalar = [&](const char* key) {
    const auto it = rows.find(key);
    if (it == rows.end() || it->second.size() != 1) {
      throw IoError(std::string("checkpoint: missing scalar '") + key + "'");
    }
    return it->second[0];
  };
  auto row = [&](const char* key) {
    const auto it = rows.find(key);
    if (it == rows.end()) throw IoError(std::string("checkpoint: missing row '") + key + "'");
    return it->second;
  };

  Checkpoint cp;
  cp.hyper.feature_dim = static_cast<int>(scalar("feature_dim"));
  cp.hyper.tse_degree = static_cast<int>(scalar("K"));
  cp.hyper.cg_depth = static_cast<int>(scalar("T"));
  cp.hyper.window_radius = static_cast<int>(scalar("window_radius"));
  cp.hyper.expansion_point = scalar("s");
  cp.hyper.mu = scalar("mu");
  cp.hyper.diagonal_loading = scalar("diagonal_loading");
  cp.params.metric_factor = row("metric_factor");
  cp.params.tse_coeffs = row("tse_coeffs");
  cp.params.cg_alpha = row("cg_alpha");
  cp.params.cg_beta = row("cg_beta");
  try {
    cp.hyper.validate();
    cp.params.validate(cp.hyper);
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return cp;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string text = format_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace gdd
