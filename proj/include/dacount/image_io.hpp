#pragma once

#include <string>

#include "dacount/tensor.hpp"

namespace dacount {

// PNG I/O. Grayscale images are (1,H,W) tensors in [0,1]; RGB images are
// (3,H,W). Writers clamp to [0,1] and quantize with round(v*255).
Tensor read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const Tensor& img);  // (1,H,W) or (H,W)
void write_png_rgb(const std::string& path, const Tensor& img);   // (3,H,W)

}  // namespace dacount
