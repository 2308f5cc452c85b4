#pragma once

// Minimal PNG codec over zlib. Encoding writes 8-bit RGB with filter type 0
// on every row and fixed compression settings, so identical pixels always
// produce identical bytes. Decoding accepts 8-bit RGB/RGBA, non-interlaced,
// with any of the five standard row filters.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "cursor_attn/error.hpp"
#include "cursor_attn/image.hpp"

namespace cursor_attn {

namespace png_detail {

inline constexpr std::array<std::uint8_t, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return (std::uint32_t{in[at]} << 24) | (std::uint32_t{in[at + 1]} << 16) | (std::uint32_t{in[at + 2]} << 8) |
         std::uint32_t{in[at + 3]};
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char (&type)[5], std::span<const std::uint8_t> data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace png_detail

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  using namespace png_detail;
  const std::uint32_t w = static_cast<std::uint32_t>(image.width());
  const std::uint32_t h = static_cast<std::uint32_t>(image.height());

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(h) * (1 + 3 * w));
  const auto& px = image.rgba();
  for (std::uint32_t y = 0; y < h; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = px.data() + static_cast<std::size_t>(y) * w * 4;
    for (std::uint32_t x = 0; x < w; ++x) raw.insert(raw.end(), row + x * 4, row + x * 4 + 3);
  }

  uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(compressed_size);
  if (compress2(compressed.data(), &compressed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    fail(ErrorKind::IOFailure, "zlib compression failed");
  compressed.resize(compressed_size);

  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, w);
  put_u32(ihdr, h);
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, RGB, deflate, filter 0, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});
  return out;
}

inline ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  using namespace png_detail;
  auto bad = [](const std::string& why) { fail(ErrorKind::MalformedInput, "png: " + why); };
  if (bytes.size() < 8 || !std::equal(kSignature.begin(), kSignature.end(), bytes.begin())) bad("bad signature");

  std::uint32_t w = 0, h = 0;
  int channels = 0;
  std::vector<std::uint8_t> idat;
  bool seen_end = false;
  std::size_t at = 8;
  while (at + 12 <= bytes.size() && !seen_end) {
    const std::uint32_t len = get_u32(bytes, at);
    if (at + 12 + len > bytes.size()) bad("truncated chunk");
    const std::string type(reinterpret_cast<const char*>(bytes.data() + at + 4), 4);
    const auto data = bytes.subspan(at + 8, len);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data() + at + 4, len + 4);
    if (static_cast<std::uint32_t>(crc) != get_u32(bytes, at + 8 + len)) bad("crc mismatch in " + type);
    if (type == "IHDR") {
      if (len != 13) bad("bad IHDR");
      w = get_u32(data, 0);
      h = get_u32(data, 4);
      if (data[8] != 8 || data[10] != 0 || data[11] != 0 || data[12] != 0) bad("unsupported IHDR parameters");
      if (data[9] == 2) channels = 3;
      else if (data[9] == 6) channels = 4;
      else bad("unsupported color type");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data.begin(), data.end());
    } else if (type == "IEND") {
      seen_end = true;
    }
    at += 12 + len;
  }
  if (w == 0 || h == 0 || !seen_end) bad("missing IHDR or IEND");

  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (stride + 1));
  uLongf raw_size = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_size != raw.size())
    bad("inflate failed");

  ImageBuffer img(static_cast<int>(w), static_cast<int>(h));
  std::vector<std::uint8_t> prev(stride, 0), cur(stride);
  for (std::uint32_t y = 0; y < h; ++y) {
    const std::uint8_t* line = raw.data() + y * (stride + 1);
    const std::uint8_t filter = line[0];
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<std::size_t>(channels) ? cur[i - channels] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<std::size_t>(channels) ? prev[i - channels] : 0;
      int pred = 0;
      switch (filter) {
        case 0: pred = 0; break;
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        case 4: pred = paeth(a, b, c); break;
        default: bad("unknown row filter");
      }
      cur[i] = static_cast<std::uint8_t>(line[1 + i] + pred);
    }
    for (std::uint32_t x = 0; x < w; ++x) {
      const std::uint8_t* p = cur.data() + static_cast<std::size_t>(x) * channels;
      img.set_rgba(static_cast<int>(x), static_cast<int>(y), Rgb{p[0], p[1], p[2]}, channels == 4 ? p[3] : 255);
    }
    std::swap(prev, cur);
  }
  return img;
}

}  // namespace cursor_attn
