#include "tromr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace tromr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 png_read_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw IoError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  ImageU8 img(static_cast<int>(h), static_cast<int>(w));
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) img(static_cast<int>(y), static_cast<int>(x)) = row[x];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void png_write_gray(const std::string& path, const ImageU8& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write image: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()),
               static_cast<png_uint_32>(img.rows()), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed settings keep the byte stream reproducible.
  png_set_compression_level(png, 6);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(img.cols()));
  for (int y = 0; y < img.rows(); ++y) {
    for (int x = 0; x < img.cols(); ++x) row[static_cast<std::size_t>(x)] = img(y, x);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 to_u8(const ImageF& img) {
  ImageU8 out(img.rows(), img.cols());
  for (int y = 0; y < img.rows(); ++y)
    for (int x = 0; x < img.cols(); ++x) {
      const float v = std::clamp(img(y, x), 0.0f, 1.0f);
      out(y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return out;
}

ImageF resize_bilinear(const ImageF& src, int out_h, int out_w) {
  if (src.rows() <= 0 || src.cols() <= 0) throw ShapeError("resize of empty image");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize to empty image");
  ImageF out(out_h, out_w);
  const float sy = static_cast<float>(src.rows()) / static_cast<float>(out_h);
  const float sx = static_cast<float>(src.cols()) / static_cast<float>(out_w);
  for (int y = 0; y < out_h; ++y) {
    const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    int y0 = static_cast<int>(std::floor(fy));
    const float wy = fy - static_cast<float>(y0);
    const int y1 = std::clamp(y0 + 1, 0, static_cast<int>(src.rows()) - 1);
    y0 = std::clamp(y0, 0, static_cast<int>(src.rows()) - 1);
    for (int x = 0; x < out_w; ++x) {
      const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      int x0 = static_cast<int>(std::floor(fx));
      const float wx = fx - static_cast<float>(x0);
      const int x1 = std::clamp(x0 + 1, 0, static_cast<int>(src.cols()) - 1);
      x0 = std::clamp(x0, 0, static_cast<int>(src.cols()) - 1);
      const float top = src(y0, x0) * (1.0f - wx) + src(y0, x1) * wx;
      const float bot = src(y1, x0) * (1.0f - wx) + src(y1, x1) * wx;
      out(y, x) = top * (1.0f - wy) + bot * wy;
    }
  }
  return out;
}

ImageF gaussian_blur(const ImageF& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  float sum = 0.0f;
  for (int i = -radius; i <= radius; ++i) {
    const float v = static_cast<float>(std::exp(-0.5 * (i * i) / (sigma * sigma)));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : kernel) v /= sum;

  const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  ImageF tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, w - 1);
        acc += src(y, xx) * kernel[static_cast<std::size_t>(i + radius)];
      }
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        acc += tmp(yy, x) * kernel[static_cast<std::size_t>(i + radius)];
      }
      out(y, x) = acc;
    }
  return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t hash_image(const ImageU8& img) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int y = 0; y < img.rows(); ++y)
    for (int x = 0; x < img.cols(); ++x) {
      h ^= img(y, x);
      h *= 0x100000001b3ull;
    }
  return h;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(buf.data(), buf.size());
}

ImageF prepare_staff_ink(const ImageU8& img, int target_h, int target_w, bool* truncated) {
  if (truncated) *truncated = false;
  ImageF f = to_float(img);
  if (f.rows() != target_h) {
    const int new_w = std::max(
        1, static_cast<int>(std::lround(static_cast<double>(f.cols()) * target_h / f.rows())));
    f = resize_bilinear(f, target_h, new_w);
  }
  ImageF out = ImageF::Ones(target_h, target_w);
  if (f.cols() > target_w) {
    out = f.leftCols(target_w);
    if (truncated) *truncated = true;
  } else {
    out.leftCols(f.cols()) = f;
  }
  return to_ink(out);
}

ImageF prepare_page_ink(const ImageU8& img, int target_h, int target_w, double blur_sigma) {
  ImageF f = to_float(img);
  if (blur_sigma > 0) f = gaussian_blur(f, blur_sigma);
  if (f.rows() != target_h || f.cols() != target_w) f = resize_bilinear(f, target_h, target_w);
  return to_ink(f);
}

}  // namespace tromr
