#pragma once

#include <torch/torch.h>

#include <string>

namespace magkit {

// 8-bit PNG. Grayscale/palette/alpha inputs are expanded to RGB on read.
torch::Tensor read_png(const std::string& path);              // [3, H, W] uint8
void write_png(const torch::Tensor& rgb, const std::string& path);  // [3, H, W] uint8

// [-1, 1] float <-> uint8 with round-trip-exact mapping of the 256 levels.
torch::Tensor to_unit_range(const torch::Tensor& rgb_u8);
torch::Tensor from_unit_range(const torch::Tensor& img);

}  // namespace magkit
