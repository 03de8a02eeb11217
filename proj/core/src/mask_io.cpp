#include "magkit/mask_io.hpp"

#include <cstring>
#include <fstream>

namespace magkit {
namespace {
constexpr char kMagic[8] = {'M', 'G', 'M', 'K', '0', '0', '0', '1'};
}

torch::Tensor quantize_mask(const torch::Tensor& probs) {
  TORCH_CHECK((probs >= 0).all().item<bool>() && (probs <= 1).all().item<bool>(),
              "mask probabilities out of range");
  return (probs.to(torch::kFloat32) * 255).round().to(torch::kUInt8);
}

torch::Tensor dequantize_mask(const torch::Tensor& planes) {
  TORCH_CHECK(planes.scalar_type() == torch::kUInt8, "quantized planes must be uint8");
  auto probs = planes.to(torch::kFloat32) / 255;
  auto dim = planes.dim() == 4 ? 1 : 0;
  auto sums = probs.sum(dim, /*keepdim=*/true).clamp_min(1e-8);
  return probs / sums;
}

void save_mask_planes(const torch::Tensor& planes_u8, const std::vector<std::string>& names,
                      const std::string& path) {
  TORCH_CHECK(planes_u8.dim() == 3 && planes_u8.scalar_type() == torch::kUInt8,
              "expected [P, H, W] uint8 planes");
  std::ofstream os(path, std::ios::binary);
  TORCH_CHECK(os.good(), "cannot write mask container: ", path);
  os.write(kMagic, sizeof(kMagic));
  auto planes = planes_u8.contiguous();
  uint32_t h = (uint32_t)planes.size(1), w = (uint32_t)planes.size(2), p = (uint32_t)planes.size(0);
  os.write(reinterpret_cast<const char*>(&h), 4);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(&p), 4);
  TORCH_CHECK(names.empty() || names.size() == p, "part name count mismatch in mask container");
  for (uint32_t i = 0; i < p; ++i) {
    std::string name = names.empty() ? "part" + std::to_string(i) : names[i];
    uint16_t len = (uint16_t)name.size();
    os.write(reinterpret_cast<const char*>(&len), 2);
    os.write(name.data(), len);
  }
  os.write(reinterpret_cast<const char*>(planes.const_data_ptr()), (std::streamsize)planes.numel());
  TORCH_CHECK(os.good(), "failed writing mask container: ", path);
}

std::pair<torch::Tensor, std::vector<std::string>> load_mask_planes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  TORCH_CHECK(is.good(), "cannot open mask container: ", path);
  char magic[8];
  is.read(magic, 8);
  TORCH_CHECK(is.good() && std::memcmp(magic, kMagic, 8) == 0, "not a mask container: ", path);
  uint32_t h, w, p;
  is.read(reinterpret_cast<char*>(&h), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  is.read(reinterpret_cast<char*>(&p), 4);
  TORCH_CHECK(is.good() && h > 0 && w > 0 && p > 0, "corrupt mask container header: ", path);
  std::vector<std::string> names(p);
  for (auto& n : names) {
    uint16_t len;
    is.read(reinterpret_cast<char*>(&len), 2);
    n.resize(len);
    is.read(n.data(), len);
  }
  auto planes = torch::empty({(int64_t)p, (int64_t)h, (int64_t)w}, torch::kUInt8);
  is.read(reinterpret_cast<char*>(planes.data_ptr()), (std::streamsize)planes.numel());
  TORCH_CHECK(is.good(), "truncated mask container: ", path);
  return {planes, std::move(names)};
}

void save_mask_container(const PartMaskStack& parts, const std::string& path) {
  save_mask_planes(quantize_mask(parts.probs), parts.part_names, path);
}

PartMaskStack load_mask_container(const std::string& path) {
  auto [planes, names] = load_mask_planes(path);
  PartMaskStack out;
  out.probs = dequantize_mask(planes);
  out.part_names = std::move(names);
  return out;
}

}  // namespace magkit
