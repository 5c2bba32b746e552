#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "woundnet/ndarray.hpp"

namespace woundnet::data {

/// 8-bit interleaved RGB image.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return rgb[(y * width + x) * 3 + c];
  }
};

enum class ImageFormat { ppm, png };

/// Decodes binary PPM (P6, maxval 255) or PNG, detected from the leading bytes.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_ppm(const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);
/// Format chosen from the extension (.ppm or .png).
void write_image(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Center crop to the shorter side, bilinear resize to size x size, scale to
/// [0,1]. Returns [3, size, size].
NdArray preprocess(const Image& img, std::size_t size);

/// Stacks [3,S,S] arrays into [N,3,S,S].
NdArray stack(const std::vector<const NdArray*>& images);

}  // namespace woundnet::data
