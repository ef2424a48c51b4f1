// SPDX-License-Identifier: Apache-2.0
#include "artic/codec.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <sodium.h>

#include "artic/errors.hpp"

namespace artic {

static_assert(std::endian::native == std::endian::little,
              "binary payloads are written in host order and assume a little-endian host");

namespace {

void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error("libsodium failed to initialize");
}

template <typename T>
std::string encode_pod(std::span<const T> values) {
  return base64_encode({reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
}

template <typename T>
std::vector<T> decode_pod(std::string_view text, const std::string& path) {
  const auto bytes = base64_decode(text, path);
  if (bytes.size() % sizeof(T) != 0)
    throw ParseError(path, "payload length " + std::to_string(bytes.size()) +
                               " is not a multiple of " + std::to_string(sizeof(T)));
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  ensure_sodium();
  const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop the terminator
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text, const std::string& path) {
  ensure_sodium();
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t bin_len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &bin_len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    throw ParseError(path, "invalid base64 payload");
  out.resize(bin_len);
  return out;
}

std::string encode_f64(std::span<const double> v) { return encode_pod(v); }
std::string encode_f32(std::span<const float> v) { return encode_pod(v); }
std::string encode_u32(std::span<const std::uint32_t> v) { return encode_pod(v); }
std::vector<double> decode_f64(std::string_view t, const std::string& p) { return decode_pod<double>(t, p); }
std::vector<float> decode_f32(std::string_view t, const std::string& p) { return decode_pod<float>(t, p); }
std::vector<std::uint32_t> decode_u32(std::string_view t, const std::string& p) {
  return decode_pod<std::uint32_t>(t, p);
}

std::string sha256_hex(std::string_view bytes) {
  ensure_sodium();
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  char hex[crypto_hash_sha256_BYTES * 2 + 1];
  sodium_bin2hex(hex, sizeof(hex), digest, sizeof(digest));
  return hex;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace artic
