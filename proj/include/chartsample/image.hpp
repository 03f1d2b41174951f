#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace chartsample {

/// 8-bit single-channel raster, row-major, origin at the top-left.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const GrayImage&) const = default;
};

/// Grayscale PNG with fixed encoder settings (no filtering, zlib level 9, no
/// ancillary chunks) so identical pixels always produce identical bytes.
std::vector<std::uint8_t> encode_png(const GrayImage& image);
GrayImage decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace chartsample
