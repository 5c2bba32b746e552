#include "woundnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "woundnet/errors.hpp"

namespace woundnet::data {
namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
      v = v * 10 + (bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw DecodeError(std::string("ppm: missing ") + what);
    return v;
  };
  const std::size_t w = read_uint("width"), h = read_uint("height"), maxval = read_uint("maxval");
  if (w == 0 || h == 0) throw DecodeError("ppm: zero-dimension image");
  if (maxval != 255) throw DecodeError("ppm: only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DecodeError("ppm: malformed header");
  ++pos;
  if (bytes.size() - pos < w * h * 3)
    throw DecodeError("ppm: truncated pixel data (" + std::to_string(bytes.size() - pos) + " of " +
                      std::to_string(w * h * 3) + " bytes)");
  Image img(w, h);
  std::memcpy(img.rgb.data(), bytes.data() + pos, w * h * 3);
  return img;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
    throw DecodeError(std::string("png: ") + png.message);
  png.format = PNG_FORMAT_RGB;
  if (png.width == 0 || png.height == 0) {
    png_image_free(&png);
    throw DecodeError("png: zero-dimension image");
  }
  Image img(png.width, png.height);
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DecodeError("png: " + msg);
  }
  return img;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::equal(kPngSignature, kPngSignature + 8, bytes.begin()))
    return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw DecodeError("not a PNG or binary PPM image");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file(path));
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.rgb.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode: ") + png.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, img.rgb.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode: ") + png.message);
  out.resize(size);
  return out;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  const auto ext = path.extension().string();
  if (ext == ".png")
    write_file(path, encode_png(img));
  else if (ext == ".ppm")
    write_file(path, encode_ppm(img));
  else
    throw std::invalid_argument("write_image: unsupported extension '" + ext + "'");
}

NdArray preprocess(const Image& img, std::size_t size) {
  if (img.width == 0 || img.height == 0) throw DecodeError("preprocess: zero-dimension image");
  if (size == 0) throw ShapeError("preprocess: target size must be positive");
  const std::size_t side = std::min(img.width, img.height);
  const std::size_t x0 = (img.width - side) / 2, y0 = (img.height - side) / 2;
  const double scale = static_cast<double>(side) / static_cast<double>(size);

  // half-pixel centers; a + f*(b - a) keeps constants and identity resizes exact
  struct Tap {
    std::size_t lo, hi;
    double f;
  };
  std::vector<Tap> taps(size);
  for (std::size_t i = 0; i < size; ++i) {
    double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(side - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    taps[i] = {lo, std::min(lo + 1, side - 1), s - static_cast<double>(lo)};
  }

  NdArray out({3, size, size});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y) {
      const Tap& ty = taps[y];
      for (std::size_t x = 0; x < size; ++x) {
        const Tap& tx = taps[x];
        auto px = [&](std::size_t xx, std::size_t yy) {
          return static_cast<double>(img.at(x0 + xx, y0 + yy, c));
        };
        const double a = px(tx.lo, ty.lo), b = px(tx.hi, ty.lo);
        const double d = px(tx.lo, ty.hi), e = px(tx.hi, ty.hi);
        const double top = a + tx.f * (b - a);
        const double bot = d + tx.f * (e - d);
        out[(c * size + y) * size + x] = (top + ty.f * (bot - top)) / 255.0;
      }
    }
  return out;
}

NdArray stack(const std::vector<const NdArray*>& images) {
  if (images.empty()) throw ShapeError("stack: no images");
  const Shape& s = images[0]->shape();
  Shape os{images.size()};
  os.insert(os.end(), s.begin(), s.end());
  NdArray out(os);
  const std::size_t n = images[0]->size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != s)
      throw ShapeError("stack: " + shape_str(images[i]->shape()) + " vs " + shape_str(s));
    std::copy_n(images[i]->raw(), n, out.raw() + i * n);
  }
  return out;
}

}  // namespace woundnet::data
