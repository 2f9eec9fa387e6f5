#pragma once

// Little-endian byte encoding shared by the suite, checkpoint and dual
// file formats.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pann {

using Bytes = std::vector<std::uint8_t>;
using Magic = std::array<char, 4>;

class ByteWriter {
 public:
  void magic(const Magic& m);
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);

  const Bytes& bytes() const noexcept { return bytes_; }
  Bytes take() noexcept { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

// Reads past the end raise kTruncated, tagged with the source name.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  void expect_magic(const Magic& m);
  /// Reads a u32 version and fails with kVersionMismatch unless it matches.
  void expect_version(std::uint32_t version);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  const std::string& source() const noexcept { return source_; }

 private:
  void need(std::size_t n);

  std::span<const std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a, used to fingerprint serialized artifacts.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t h = 14695981039346656037ULL);

}  // namespace pann
