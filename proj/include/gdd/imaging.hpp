#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gdd/graph_filter.hpp"

namespace gdd {

/// Row-major grayscale image with values in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  Vector pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0);

  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool operator==(const GrayImage&) const = default;
};

/// Reads binary PGM (P5) or PPM (P6); color is reduced to BT.601 luma.
GrayImage load_image(const std::filesystem::path& path);
/// Writes 8-bit binary PGM (P5); values are rounded and clamped to [0, 255].
void save_image(const GrayImage& image, const std::filesystem::path& path);

/// Decoders over an in-memory file, shared with load_image.
GrayImage decode_netpbm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

/// Adds N(0, (sigma/255)^2) per pixel and clamps to [0, 1].
GrayImage add_awgn(const GrayImage& image, double sigma_8bit, std::uint64_t seed);

struct PatchOrigin {
  int row;
  int col;
};

/// Non-overlapping tiling of an image cropped to a multiple of patch_side.
struct PatchGrid {
  int patch_side = 0;
  int width = 0;   // cropped
  int height = 0;  // cropped
  std::vector<Vector> patches;
  std::vector<PatchOrigin> origins;
};

PatchGrid partition(const GrayImage& image, int patch_side);
GrayImage reassemble(const PatchGrid& grid);
GrayImage crop(const GrayImage& image, int width, int height);

/// 10 log10(1 / MSE) on [0, 1] pixels; +infinity for identical images.
double psnr(const GrayImage& reference, const GrayImage& test);

/// Deterministic piecewise-smooth test image (shapes, shading and a mild
/// texture), used when no photographic corpus is at hand.
GrayImage make_synthetic_image(int width, int height, std::uint64_t seed);

/// Lists *.pgm / *.ppm files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace gdd
