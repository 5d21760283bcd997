#pragma once

// 8-bit PNG I/O on top of libpng. Gray maps store v as round(255 v).

#include <png.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cyborg/grid.hpp"

namespace cyborg::io {

struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 1;  // 1 gray, 3 RGB
  std::vector<std::uint8_t> pixels;
};

namespace detail {

struct ReadState {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

inline void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* state = static_cast<ReadState*>(png_get_io_ptr(png));
  if (state->offset + count > state->size) png_error(png, "truncated PNG");
  std::memcpy(out, state->data + state->offset, count);
  state->offset += count;
}

inline void write_to_vector(png_structp png, png_bytep data, png_size_t count) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + count);
}

inline void flush_noop(png_structp) {}

}  // namespace detail

/// Decodes any 8/16-bit PNG into gray or RGB 8-bit samples. Alpha is dropped.
inline RawImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) fail(ErrorKind::Io, "not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorKind::Io, "png_create_info_struct failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  detail::ReadState state{bytes.data(), bytes.size(), 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, "corrupt PNG stream");
  }
  png_set_read_fn(png, &state, detail::read_from_memory);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  img.pixels.resize(img.width * img.height * static_cast<std::size_t>(img.channels));
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::vector<std::uint8_t> encode_png(const RawImage& img) {
  if (img.channels != 1 && img.channels != 3) fail(ErrorKind::Io, "only gray or RGB PNG output is supported");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorKind::Io, "png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, detail::write_to_vector, detail::flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, decltype(&std::fclose)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::array<std::uint8_t, 65536> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), f.get())) > 0) bytes.insert(bytes.end(), buf.begin(), buf.begin() + n);
  return bytes;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, decltype(&std::fclose)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f || std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
    fail(ErrorKind::Io, "cannot write " + path.string());
}

inline RawImage read_png(const std::filesystem::path& path) { return decode_png(read_bytes(path)); }

inline void write_png(const std::filesystem::path& path, const RawImage& img) { write_bytes(path, encode_png(img)); }

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Gray values in [0,1]; RGB input is reduced to luma.
inline Map to_gray_map(const RawImage& img) {
  Map m(img.width, img.height);
  for (std::size_t i = 0; i < m.count(); ++i) {
    if (img.channels == 1) {
      m[i] = img.pixels[i] / 255.0;
    } else {
      const auto* p = &img.pixels[i * img.channels];
      m[i] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
  }
  return m;
}

inline RawImage from_gray_map(const Map& m) {
  RawImage img{m.width(), m.height(), 1, std::vector<std::uint8_t>(m.count())};
  for (std::size_t i = 0; i < m.count(); ++i) img.pixels[i] = quantize(m[i]);
  return img;
}

inline Map load_gray_png(const std::filesystem::path& path) { return to_gray_map(read_png(path)); }

inline void store_gray_png(const std::filesystem::path& path, const Map& m) { write_png(path, from_gray_map(m)); }

}  // namespace cyborg::io
