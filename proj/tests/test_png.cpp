#include <gtest/gtest.h>

#include <png.h>

#include <cstring>

#include "cursor_attn/png.hpp"
#include "cursor_attn/rng.hpp"

using namespace cursor_attn;

namespace {

ImageBuffer random_image(Rng& rng) {
  const int w = 1 + static_cast<int>(rng.below(64)), h = 1 + static_cast<int>(rng.below(64));
  ImageBuffer img(w, h);
  const bool flat = rng.below(4) == 0;  // long runs exercise other filters
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (flat && rng.below(8) != 0) continue;
      img.set(x, y, {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                     static_cast<std::uint8_t>(rng.below(256))});
    }
  return img;
}

// Reference decoder: libpng's simplified API, always to RGBA.
ImageBuffer libpng_decode(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) throw std::runtime_error(image.message);
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) throw std::runtime_error(image.message);
  ImageBuffer out(static_cast<int>(image.width), static_cast<int>(image.height));
  out.rgba() = buf;
  return out;
}

std::vector<std::uint8_t> libpng_encode_rgba(const ImageBuffer& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  png_image_write_to_memory(&image, nullptr, &size, 0, img.rgba().data(), 0, nullptr);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.rgba().data(), 0, nullptr))
    throw std::runtime_error(image.message);
  out.resize(size);
  return out;
}

}  // namespace

TEST(Png, WhiteRoundTrip) {
  const ImageBuffer white;
  const auto bytes = encode_png(white);
  EXPECT_EQ(decode_png(bytes), white);
  EXPECT_EQ(libpng_decode(bytes), white);
}

TEST(Png, EncodingIsDeterministic) {
  Rng rng(1);
  const auto img = random_image(rng);
  EXPECT_EQ(encode_png(img), encode_png(img));
}

TEST(Png, RoundTripHundredRandomBuffers) {
  Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto img = random_image(rng);
    const auto bytes = encode_png(img);
    ASSERT_EQ(decode_png(bytes), img) << "case " << i;
    ASSERT_EQ(libpng_decode(bytes), img) << "case " << i;
  }
}

TEST(Png, DecodesForeignRgbaWithAnyFilter) {
  // libpng picks adaptive filters, so this covers Sub/Up/Average/Paeth.
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    ImageBuffer img = random_image(rng);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) img.set_rgba(x, y, img.at(x, y), static_cast<std::uint8_t>(rng.below(256)));
    EXPECT_EQ(decode_png(libpng_encode_rgba(img)), img);
  }
}

TEST(Png, OutputIsOpaqueRgb) {
  ImageBuffer img(3, 2);
  img.set_rgba(0, 0, {1, 2, 3}, 10);
  const auto bytes = encode_png(img);
  // IHDR: color type at byte 25 (2 = truecolor), bit depth at 24.
  EXPECT_EQ(bytes[24], 8);
  EXPECT_EQ(bytes[25], 2);
  EXPECT_EQ(decode_png(bytes).alpha(0, 0), 255);
}

TEST(Png, RejectsCorruptInput) {
  auto bytes = encode_png(ImageBuffer(4, 4));
  EXPECT_THROW(decode_png(std::span<const std::uint8_t>(bytes.data(), 10)), Error);
  bytes[0] = 0;
  EXPECT_THROW(decode_png(bytes), Error);
}
