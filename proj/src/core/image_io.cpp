#include "dacount/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace dacount {

namespace {

unsigned char quantize(double v) {
  v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<unsigned char>(std::lround(v * 255.0));
}

void write_png(const std::string& path, const unsigned char* pixels, int h, int w,
               png_uint_32 format, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels, w * channels, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("write_png: '" + path + "': " + msg);
  }
}

}  // namespace

Tensor read_png_gray(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("read_png_gray: '" + path + "': " + msg);
  }
  img.format = PNG_FORMAT_GRAY;
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  if (!png_image_finish_read(&img, nullptr, buf.data(), w, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("read_png_gray: '" + path + "': " + msg);
  }
  Tensor out({1, h, w});
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = buf[static_cast<size_t>(i)] / 255.0;
  return out;
}

void write_png_gray(const std::string& path, const Tensor& img) {
  int h = 0, w = 0;
  if (img.rank() == 3 && img.dim(0) == 1) {
    h = img.dim(1);
    w = img.dim(2);
  } else if (img.rank() == 2) {
    h = img.dim(0);
    w = img.dim(1);
  } else {
    throw std::invalid_argument("write_png_gray: expects (1,H,W) or (H,W), got " + img.shape_str());
  }
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < img.numel(); ++i) buf[static_cast<size_t>(i)] = quantize(img[i]);
  write_png(path, buf.data(), h, w, PNG_FORMAT_GRAY, 1);
}

void write_png_rgb(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("write_png_rgb: expects (3,H,W), got " + img.shape_str());
  const int h = img.dim(1), w = img.dim(2);
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<size_t>(y) * w + x) * 3 + c] = quantize(img[(int64_t(c) * h + y) * w + x]);
  write_png(path, buf.data(), h, w, PNG_FORMAT_RGB, 3);
}

}  // namespace dacount
