#include "egopose/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "egopose/errors.hpp"

namespace egopose {

namespace {

std::uint32_t to_le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) | ((v & 0x00FF0000u) >> 8) |
        ((v & 0xFF000000u) >> 24);
  }
  return v;
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> data(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size))) {
    throw IoError("read failed: " + path.string());
  }
  return data;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  ByteWriter w;
  for (float v : values) w.f32(v);
  write_file_bytes(path, w.data());
}

std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expected_count) {
  const auto bytes = read_file_bytes(path);
  const std::size_t expected_bytes = expected_count * 4;
  if (bytes.size() != expected_bytes) {
    throw IoError(path.string() + ": expected " + std::to_string(expected_bytes) + " bytes, found " +
                  std::to_string(bytes.size()));
  }
  ByteReader r(bytes, path.string());
  std::vector<float> out(expected_count);
  for (auto& v : out) v = r.f32();
  return out;
}

void write_u8_file(const std::filesystem::path& path, std::span<const std::uint8_t> values) {
  write_file_bytes(path, values);
}

std::vector<std::uint8_t> read_u8_file(const std::filesystem::path& path, std::size_t expected_count) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() != expected_count) {
    throw IoError(path.string() + ": expected " + std::to_string(expected_count) + " bytes, found " +
                  std::to_string(bytes.size()));
  }
  return bytes;
}

void ByteWriter::u32(std::uint32_t v) {
  v = to_le32(v);
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  buf_.insert(buf_.end(), b, b + 4);
}

void ByteWriter::u64(std::uint64_t v) {
  u32(static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
  u32(static_cast<std::uint32_t>(v >> 32));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::bytes(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

void ByteWriter::text(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

void ByteReader::need(std::size_t n) {
  if (remaining() < n) {
    throw IoError(source_ + ": truncated at byte " + std::to_string(pos_) + " (needed " + std::to_string(n) +
                  " more, " + std::to_string(remaining()) + " available)");
  }
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return to_le32(v);
}

std::uint64_t ByteReader::u64() {
  const std::uint64_t lo = u32();
  const std::uint64_t hi = u32();
  return lo | (hi << 32);
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::text(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

}  // namespace egopose
