// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace artic {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ParseError(path) on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text, const std::string& path = {});

std::string encode_f64(std::span<const double> values);
std::string encode_f32(std::span<const float> values);
std::string encode_u32(std::span<const std::uint32_t> values);
std::vector<double> decode_f64(std::string_view text, const std::string& path = {});
std::vector<float> decode_f32(std::string_view text, const std::string& path = {});
std::vector<std::uint32_t> decode_u32(std::string_view text, const std::string& path = {});

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace artic
