// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "artic/core_math.hpp"

namespace artic {

struct RgbImage {
  int width = 0, height = 0;
  std::vector<Vec3> pixels;  // row-major, values in [0, 1]
};

/// Binary P6 with maxval 255; values are clamped to [0, 1] and rounded.
void write_ppm(const std::string& path, int width, int height, std::span<const Vec3> pixels);
/// Gray image stored as P6 with equal channels.
void write_gray_ppm(const std::string& path, int width, int height, std::span<const double> values);
/// Reads P6 (any maxval ≤ 255). Throws ParseError on malformed files.
RgbImage read_ppm(const std::string& path);

/// Raw little-endian f32 arrays without a header; shapes live in the JSON sidecar.
void write_f32(const std::string& path, std::span<const float> values);
/// Throws ParseError when the file does not hold exactly `count` values.
std::vector<float> read_f32(const std::string& path, std::size_t count);

}  // namespace artic
