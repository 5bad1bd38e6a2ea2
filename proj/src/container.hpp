#pragma once

// Shared framing for the binary containers: 8-byte magic, u32 little-endian
// header length, UTF-8 JSON header, then a little-endian numeric payload.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hrtfnorm/core.hpp"
#include "hrtfnorm/error.hpp"

namespace hrtfnorm::detail {

using Magic = std::array<std::uint8_t, 8>;

inline constexpr Magic kDatabaseMagic = {'H', 'R', 'T', 'F', 'D', 'B', '1', 0};
inline constexpr Magic kFieldMagic = {'H', 'R', 'T', 'F', 'N', 'F', '1', 0};

class ByteWriter {
 public:
  void raw(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    out_.insert(out_.end(), reinterpret_cast<const std::uint8_t*>(s.data()),
                reinterpret_cast<const std::uint8_t*>(s.data()) + s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    auto s = raw(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint64_t u64(const char* what) {
    auto s = raw(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ParseError(std::string("truncated payload: expected ") + std::to_string(n) +
                       " more bytes for " + what + ", found " + std::to_string(remaining()));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Writes magic + header and returns the writer positioned at the payload.
inline ByteWriter begin_container(const Magic& magic, const Json& header) {
  ByteWriter w;
  w.raw(magic);
  const std::string text = header.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.text(text);
  return w;
}

// Consumes magic + header; the reader is left at the payload.
inline Json read_container_header(ByteReader& r, const Magic& magic) {
  auto m = r.raw(magic.size(), "magic");
  if (!std::equal(m.begin(), m.end(), magic.begin())) throw ParseError("bad magic");
  const std::uint32_t len = r.u32("header length");
  auto text = r.raw(len, "header");
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed header: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace hrtfnorm::detail
