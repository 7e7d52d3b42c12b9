#include "gdd/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>

#include "gdd/error.hpp"

namespace gdd {

GrayImage::GrayImage(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw InvalidInput("GrayImage: dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t position() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_int() {
    skip_space_and_comments();
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw IoError("netpbm: header value too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw IoError("netpbm: malformed header");
    return value;
  }

  void expect_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw IoError("netpbm: missing separator before raster");
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError("unsupported image format (expected binary PGM P5 or PPM P6)");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes.subspan(2));
  const long width = reader.read_int();
  const long height = reader.read_int();
  const long maxval = reader.read_int();
  reader.expect_single_space();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError("netpbm: invalid dimensions or maxval");
  }
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height;
  const std::size_t offset = 2 + reader.position();
  if (bytes.size() < offset + count * channels * sample_bytes) {
    throw IoError("netpbm: truncated raster");
  }

  auto sample = [&](std::size_t index) -> double {
    const std::uint8_t* p = bytes.data() + offset + index * sample_bytes;
    const unsigned raw = sample_bytes == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
    return static_cast<double>(raw) / static_cast<double>(maxval);
  };

  GrayImage image(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < count; ++i) {
    double v = 0.0;
    if (channels == 1) {
      v = sample(i);
    } else {
      v = 0.299 * sample(3 * i) + 0.587 * sample(3 * i + 1) + 0.114 * sample(3 * i + 2);
    }
    image.pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  return image;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  const std::string header = "P5\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) {
    const double q = std::round(v * 255.0);
    out.push_back(static_cast<std::uint8_t>(std::clamp(std::isfinite(q) ? q : 0.0, 0.0, 255.0)));
  }
  return out;
}

GrayImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_image(const GrayImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

GrayImage add_awgn(const GrayImage& image, double sigma_8bit, std::uint64_t seed) {
  if (!(sigma_8bit >= 0.0)) throw InvalidInput("add_awgn: sigma must be nonnegative");
  GrayImage out = image;
  if (sigma_8bit == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_8bit / 255.0);
  for (double& v : out.pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
  return out;
}

PatchGrid partition(const GrayImage& image, int patch_side) {
  if (patch_side < 2) throw InvalidInput("partition: patch side must be at least 2");
  if (image.width < patch_side || image.height < patch_side) {
    throw InvalidInput("partition: image is smaller than one patch");
  }
  PatchGrid grid;
  grid.patch_side = patch_side;
  grid.width = image.width / patch_side * patch_side;
  grid.height = image.height / patch_side * patch_side;
  for (int r0 = 0; r0 < grid.height; r0 += patch_side) {
    for (int c0 = 0; c0 < grid.width; c0 += patch_side) {
      Vector patch;
      patch.reserve(static_cast<std::size_t>(patch_side) * patch_side);
      for (int r = 0; r < patch_side; ++r) {
        for (int c = 0; c < patch_side; ++c) patch.push_back(image.at(r0 + r, c0 + c));
      }
      grid.patches.push_back(std::move(patch));
      grid.origins.push_back({r0, c0});
    }
  }
  return grid;
}

GrayImage reassemble(const PatchGrid& grid) {
  GrayImage image(grid.width, grid.height);
  const int side = grid.patch_side;
  for (std::size_t p = 0; p < grid.patches.size(); ++p) {
    const auto [r0, c0] = grid.origins[p];
    const Vector& patch = grid.patches[p];
    if (patch.size() != static_cast<std::size_t>(side) * side) {
      throw InvalidInput("reassemble: patch has wrong size");
    }
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) image.at(r0 + r, c0 + c) = patch[static_cast<std::size_t>(r) * side + c];
    }
  }
  return image;
}

GrayImage crop(const GrayImage& image, int width, int height) {
  if (width > image.width || height > image.height) throw InvalidInput("crop: region too large");
  GrayImage out(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) out.at(r, c) = image.at(r, c);
  }
  return out;
}

double psnr(const GrayImage& reference, const GrayImage& test) {
  if (reference.width != test.width || reference.height != test.height) {
    throw InvalidInput("psnr: image dimensions differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
    const double d = reference.pixels[i] - test.pixels[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(reference.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

GrayImage make_synthetic_image(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GrayImage image(width, height);

  // smooth background ramp
  const double g0 = 0.25 + 0.5 * unit(rng);
  const double gx = (unit(rng) - 0.5) * 0.4;
  const double gy = (unit(rng) - 0.5) * 0.4;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      image.at(r, c) = g0 + gx * c / width + gy * r / height;
    }
  }

  const int shapes = 6 + static_cast<int>(unit(rng) * 6);
  for (int s = 0; s < shapes; ++s) {
    const int kind = static_cast<int>(unit(rng) * 3);
    const double cx = unit(rng) * width;
    const double cy = unit(rng) * height;
    const double size = (0.08 + 0.25 * unit(rng)) * std::min(width, height);
    const double level = 0.1 + 0.8 * unit(rng);
    const double angle = unit(rng) * 3.14159265358979;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double stripe = unit(rng) < 0.25 ? 0.08 : 0.0;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double dx = c - cx, dy = r - cy;
        const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
        bool inside = false;
        if (kind == 0) {
          inside = u * u + v * v < size * size;
        } else if (kind == 1) {
          inside = std::abs(u) < size && std::abs(v) < 0.6 * size;
        } else {
          inside = v > -0.5 * size && v < size - std::abs(u) * 1.5;
        }
        if (inside) image.at(r, c) = level + stripe * std::sin(0.35 * u);
      }
    }
  }
  for (double& v : image.pixels) v = std::clamp(v, 0.0, 1.0);
  return image;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw IoError("not a directory: '" + dir.string() + "'");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace gdd
