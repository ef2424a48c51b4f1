// SPDX-License-Identifier: Apache-2.0
#include "artic/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "artic/codec.hpp"
#include "artic/errors.hpp"

namespace artic {

static_assert(std::endian::native == std::endian::little, "raw f32 files assume a little-endian host");

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string ppm_header(int width, int height) {
  if (width <= 0 || height <= 0) throw InvariantError("image size must be positive");
  return "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

}  // namespace

void write_ppm(const std::string& path, int width, int height, std::span<const Vec3> pixels) {
  std::string out = ppm_header(width, height);
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    throw InvariantError("pixel count does not match the image size");
  out.reserve(out.size() + 3 * pixels.size());
  for (const Vec3& p : pixels)
    for (int c = 0; c < 3; ++c) out.push_back(static_cast<char>(to_byte(p[c])));
  write_file(path, out);
}

void write_gray_ppm(const std::string& path, int width, int height, std::span<const double> values) {
  std::vector<Vec3> rgb(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) rgb[i] = Vec3::Constant(values[i]);
  write_ppm(path, width, height, rgb);
}

RgbImage read_ppm(const std::string& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  auto number = [&](const char* what) {
    const std::string t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw ParseError(path, std::string("bad PPM ") + what);
    return std::stoi(t);
  };
  if (token() != "P6") throw ParseError(path, "not a binary PPM (P6) file");
  RgbImage img;
  img.width = number("width");
  img.height = number("height");
  const int maxval = number("maxval");
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
    throw ParseError(path, "unsupported PPM header");
  ++pos;  // single whitespace before the raster
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (data.size() < pos + 3 * n) throw ParseError(path, "PPM raster is truncated");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      img.pixels[i][c] = static_cast<unsigned char>(data[pos + 3 * i + c]) / static_cast<double>(maxval);
  return img;
}

void write_f32(const std::string& path, std::span<const float> values) {
  std::string out(values.size() * sizeof(float), '\0');
  std::memcpy(out.data(), values.data(), out.size());
  write_file(path, out);
}

std::vector<float> read_f32(const std::string& path, std::size_t count) {
  const std::string data = read_file(path);
  if (data.size() != count * sizeof(float))
    throw ParseError(path, "expected " + std::to_string(count) + " f32 values, found " +
                               std::to_string(data.size()) + " bytes");
  std::vector<float> out(count);
  std::memcpy(out.data(), data.data(), data.size());
  return out;
}

}  // namespace artic
