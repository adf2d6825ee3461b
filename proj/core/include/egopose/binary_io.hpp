#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace egopose {

// Little-endian float32 blobs, independent of host byte order.
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expected_count);
void write_u8_file(const std::filesystem::path& path, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> read_u8_file(const std::filesystem::path& path, std::size_t expected_count);

/// Append-only little-endian encoder.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void bytes(std::span<const std::uint8_t> data);
  void text(std::string_view s);  // raw characters, no length prefix
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian decoder; throws IoError on truncation.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string source)
      : data_(data), source_(std::move(source)) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string text(std::size_t n);
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n);
  std::span<const std::uint8_t> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace egopose
