#include "magkit/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace magkit {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

torch::Tensor read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  TORCH_CHECK(fp, "cannot open image: ", path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  TORCH_CHECK(png, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    TORCH_CHECK(false, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    TORCH_CHECK(false, "failed decoding png: ", path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const auto h = png_get_image_height(png, info);
  const auto w = png_get_image_width(png, info);
  TORCH_CHECK(png_get_channels(png, info) == 3, "unexpected channel count in ", path);
  auto hwc = torch::empty({(int64_t)h, (int64_t)w, 3}, torch::kUInt8);
  auto* base = hwc.data_ptr<uint8_t>();
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = base + (size_t)y * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return hwc.permute({2, 0, 1}).contiguous();
}

void write_png(const torch::Tensor& rgb, const std::string& path) {
  TORCH_CHECK(rgb.dim() == 3 && rgb.size(0) == 3 && rgb.scalar_type() == torch::kUInt8,
              "write_png expects [3, H, W] uint8");
  auto hwc = rgb.permute({1, 2, 0}).contiguous();
  const auto h = hwc.size(0), w = hwc.size(1);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  TORCH_CHECK(fp, "cannot write image: ", path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  TORCH_CHECK(png, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    TORCH_CHECK(false, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    TORCH_CHECK(false, "failed encoding png: ", path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, (png_uint_32)w, (png_uint_32)h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* base = hwc.data_ptr<uint8_t>();
  for (int64_t y = 0; y < h; ++y) png_write_row(png, base + y * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor to_unit_range(const torch::Tensor& rgb_u8) {
  return rgb_u8.to(torch::kFloat32) / 127.5f - 1.f;
}

torch::Tensor from_unit_range(const torch::Tensor& img) {
  return ((img.clamp(-1, 1) + 1.f) * 127.5f).round().to(torch::kUInt8);
}

}  // namespace magkit
