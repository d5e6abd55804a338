#include "bf/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>
#include <png.h>

#include "bf/error.hpp"
#include "bf/tensor_io.hpp"

namespace bf {

std::uint8_t to_byte(float v) {
  const double scaled = std::floor(std::clamp(double{v}, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(scaled);
}

namespace {

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  // longjmp back into the caller's setjmp frame
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void flush_noop(png_structp) {}

void read_from_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, cur->bytes->data() + cur->pos, len);
  cur->pos += len;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  const Shape& s = img.shape();
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw RuntimeError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> rows(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) rows[i] = to_byte(img[i]);
  std::vector<png_bytep> row_ptrs(s.height);
  for (std::uint32_t r = 0; r < s.height; ++r) row_ptrs[r] = rows.data() + std::size_t{r} * s.width * s.channels;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeError(fmt::format("PNG encode failed: {}", error));
  }
  png_set_write_fn(png, &out, write_to_vector, flush_noop);
  png_set_IHDR(png, info, s.width, s.height, 8, s.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw ValidationError("not a PNG file");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw RuntimeError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadCursor cur{&bytes, 0};
  std::vector<std::uint8_t> pixels;
  Shape s;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(fmt::format("PNG decode failed: {}", error));
  }
  png_set_read_fn(png, &cur, read_from_vector);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  s.height = png_get_image_height(png, info);
  s.width = png_get_image_width(png, info);
  s.channels = png_get_channels(png, info);
  pixels.resize(s.size());
  std::vector<png_bytep> row_ptrs(s.height);
  for (std::uint32_t r = 0; r < s.height; ++r) row_ptrs[r] = pixels.data() + std::size_t{r} * s.width * s.channels;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<float> data(s.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(pixels[i] / 255.0);
  return Image(s, std::move(data));
}

void write_png(const std::filesystem::path& path, const Image& img) {
  write_file_bytes(path, encode_png(img));
}

Image read_png(const std::filesystem::path& path) {
  return decode_png(read_file_bytes(path));
}

Image perturbation_heatmap(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "perturbation_heatmap");
  const Shape& s = a.shape();
  Shape out_shape{s.height, s.width, 1};
  std::vector<float> diff(out_shape.size(), 0.0f);
  float peak = 0.0f;
  for (std::uint32_t r = 0; r < s.height; ++r) {
    for (std::uint32_t c = 0; c < s.width; ++c) {
      float m = 0.0f;
      for (std::uint32_t ch = 0; ch < s.channels; ++ch) {
        m = std::max(m, std::abs(a.at(r, c, ch) - b.at(r, c, ch)));
      }
      diff[out_shape.index(r, c, 0)] = m;
      peak = std::max(peak, m);
    }
  }
  if (peak > 0.0f) {
    for (auto& v : diff) v = std::min(1.0f, v / peak);
  }
  return Image(out_shape, std::move(diff));
}

} // namespace bf
