#include "fsr/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

namespace fsr {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

TensorD read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("read_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: decode failed for " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  // normalize everything to 8-bit RGB
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<png_byte> raster(static_cast<size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  TensorD img = TensorD::zeros({1, 3, static_cast<int64_t>(h), static_cast<int64_t>(w)});
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at4(0, c, y, x) = raster[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
  return img;
}

void write_png(const std::string& path, const TensorD& img) {
  if (img.shape.size() != 4 || img.shape[0] != 1 || img.shape[1] != 3)
    throw IoError("write_png: expected a [1,3,H,W] tensor");
  const int64_t h = img.shape[2], w = img.shape[3];

  const std::string tmp = path + ".tmp";
  {
    FilePtr fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw IoError("write_png: cannot open " + tmp);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw IoError("write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw IoError("write_png: encode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(w) * 3);
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = std::min(1.0, std::max(0.0, img.at4(0, c, y, x)));
          row[static_cast<size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
        }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

static constexpr char kFsrfMagic[4] = {'F', 'S', 'R', 'F'};

TensorD read_fsrf(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_fsrf: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kFsrfMagic, 4) != 0)
    throw IoError("read_fsrf: bad magic in " + path);
  uint32_t ndim = 0;
  f.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
  if (!f || ndim == 0 || ndim > 8) throw IoError("read_fsrf: bad rank in " + path);
  std::vector<int64_t> shape(ndim);
  int64_t count = 1;
  for (auto& d : shape) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!f || v == 0 || v > (1u << 24)) throw IoError("read_fsrf: bad shape in " + path);
    d = static_cast<int64_t>(v);
    count *= d;
  }
  std::vector<float> buf(static_cast<size_t>(count));
  f.read(reinterpret_cast<char*>(buf.data()), count * static_cast<int64_t>(sizeof(float)));
  if (!f) throw IoError("read_fsrf: truncated data in " + path);
  TensorD out;
  out.shape = shape;
  out.data.assign(buf.begin(), buf.end());
  return out;
}

void write_fsrf(const std::string& path, const TensorD& img) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("write_fsrf: cannot open " + tmp);
    f.write(kFsrfMagic, 4);
    const uint32_t ndim = static_cast<uint32_t>(img.shape.size());
    f.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
    for (int64_t d : img.shape) {
      const uint64_t v = static_cast<uint64_t>(d);
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    for (double x : img.data) {
      const float v = static_cast<float>(x);
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    if (!f) throw IoError("write_fsrf: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

namespace {
bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}
}  // namespace

TensorD read_image(const std::string& path) {
  if (has_suffix(path, ".png")) return read_png(path);
  if (has_suffix(path, ".fsrf")) return read_fsrf(path);
  throw IoError("read_image: unsupported extension on " + path);
}

void write_image(const std::string& path, const TensorD& img) {
  if (has_suffix(path, ".png")) return write_png(path, img);
  if (has_suffix(path, ".fsrf")) return write_fsrf(path, img);
  throw IoError("write_image: unsupported extension on " + path);
}

}  // namespace fsr
