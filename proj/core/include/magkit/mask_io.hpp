#pragma once

#include <string>

#include "magkit/masks.hpp"

namespace magkit {

// Planar 8-bit quantized mask container:
//   magic "MGMK0001", u32 height, u32 width, u32 part count,
//   per part: u16 name length + name bytes,
//   then P planes of H*W bytes (round(prob * 255), plane order = part_names).
// Loading dequantizes by /255 and renormalizes per pixel so sums are exactly 1.
void save_mask_container(const PartMaskStack& parts, const std::string& path);
PartMaskStack load_mask_container(const std::string& path);

// The quantized planes as stored on disk ([P, H, W] uint8), for compact in-RAM datasets.
torch::Tensor quantize_mask(const torch::Tensor& probs);
torch::Tensor dequantize_mask(const torch::Tensor& planes);

// Raw-plane access: the container's bytes without the dequantize step, so a
// dataset can keep exactly what disk holds.
void save_mask_planes(const torch::Tensor& planes_u8, const std::vector<std::string>& names,
                      const std::string& path);
std::pair<torch::Tensor, std::vector<std::string>> load_mask_planes(const std::string& path);

}  // namespace magkit
