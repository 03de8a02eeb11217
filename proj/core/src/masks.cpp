#include "magkit/masks.hpp"

namespace magkit {
namespace nnf = torch::nn::functional;

PartMaskStack PartMaskStack::from(torch::Tensor probs, std::vector<std::string> names) {
  TORCH_CHECK(probs.dim() == 3, "part mask stack must be [P, H, W]");
  TORCH_CHECK((probs >= 0).all().item<bool>() && (probs <= 1).all().item<bool>(),
              "part probabilities must lie in [0, 1]");
  auto sums = probs.sum(0);
  TORCH_CHECK(((sums - 1).abs() <= 1e-4).all().item<bool>(),
              "per-pixel part probabilities must sum to 1 within 1e-4");
  if (!names.empty())
    TORCH_CHECK((int64_t)names.size() == probs.size(0), "part name count mismatch");
  return {std::move(probs), std::move(names)};
}

AttDiff AttDiff::from(torch::Tensor values) {
  TORCH_CHECK(values.dim() == 1, "attribute difference must be a vector");
  TORCH_CHECK((values.abs() <= 1).all().item<bool>(), "attribute difference entries must lie in [-1, 1]");
  return {std::move(values)};
}

AttDiff AttDiff::zeros(int64_t num_attributes, torch::Dtype dtype) {
  return {torch::zeros({num_attributes}, dtype)};
}

AttDiff AttDiff::unit(int64_t num_attributes, int64_t attribute_index, Direction dir, double magnitude,
                      torch::Dtype dtype) {
  TORCH_CHECK(attribute_index >= 0 && attribute_index < num_attributes, "attribute index out of range");
  TORCH_CHECK(magnitude >= 0 && magnitude <= 1, "magnitude must lie in [0, 1]");
  auto v = torch::zeros({num_attributes}, dtype);
  v[attribute_index] = dir == Direction::kStrengthen ? magnitude : -magnitude;
  return {std::move(v)};
}

torch::Tensor attribute_difference(const torch::Tensor& att_source, const torch::Tensor& att_target) {
  TORCH_CHECK(att_source.sizes() == att_target.sizes(), "attribute shape mismatch");
  return att_target - att_source;
}

torch::Tensor compute_ar_star(const torch::Tensor& att_diff, const RelationMatrices& rel) {
  TORCH_CHECK(att_diff.size(-1) == rel.num_attributes(), "attribute count mismatch with relation matrices");
  auto pos = (att_diff > 0).to(att_diff.dtype());
  auto neg = (att_diff < 0).to(att_diff.dtype());
  auto ar_p = rel.ar_plus.to(att_diff.dtype());
  auto ar_m = rel.ar_minus.to(att_diff.dtype());
  return (pos.matmul(ar_p) + neg.matmul(ar_m)).clamp_max(1);
}

torch::Tensor compute_ar_star(const AttDiff& diff, const RelationMatrices& rel) {
  return compute_ar_star(diff.values, rel);
}

torch::Tensor preserved_mask_batch(const torch::Tensor& att_diff, const torch::Tensor& parts,
                                   const RelationMatrices& rel) {
  TORCH_CHECK(att_diff.dim() == 2 && parts.dim() == 4, "expected batched att_diff [B,C] and parts [B,P,H,W]");
  TORCH_CHECK(parts.size(1) == rel.num_parts(), "part count mismatch with relation matrices");
  auto star = compute_ar_star(att_diff, rel);  // [B, P]
  auto covered = (parts * star.unsqueeze(-1).unsqueeze(-1)).sum(1);
  return (1 - covered).clamp(0, 1);
}

PreservedMask preserved_mask(const AttDiff& diff, const PartMaskStack& parts, const RelationMatrices& rel) {
  auto m = preserved_mask_batch(diff.values.unsqueeze(0), parts.probs.unsqueeze(0), rel);
  return {m.squeeze(0)};
}

InfluenceRegion influence_region(int64_t attribute_index, Direction dir, const PartMaskStack& parts,
                                 const RelationMatrices& rel) {
  TORCH_CHECK(attribute_index >= 0 && attribute_index < rel.num_attributes(), "attribute index out of range");
  auto diff = AttDiff::unit(rel.num_attributes(), attribute_index, dir, 1.0,
                            parts.probs.scalar_type());
  auto preserved = preserved_mask(diff, parts, rel);
  return {1 - preserved.map, attribute_index, dir};
}

torch::Tensor signed_attribute_masks(const torch::Tensor& att_diff, const torch::Tensor& parts,
                                     const RelationMatrices& rel) {
  const bool batched = att_diff.dim() == 2;
  TORCH_CHECK(batched ? parts.dim() == 4 : parts.dim() == 3, "att_diff/parts batching mismatch");
  auto pos = (att_diff > 0).to(att_diff.dtype());
  auto neg = (att_diff < 0).to(att_diff.dtype());
  auto ar_p = rel.ar_plus.to(att_diff.dtype());
  auto ar_m = rel.ar_minus.to(att_diff.dtype());
  // row c of the selected relation matrix, zeroed where d_c = 0: [.., C, P]
  auto rows = pos.unsqueeze(-1) * ar_p + neg.unsqueeze(-1) * ar_m;
  auto flat = parts.flatten(-2);                                   // [.., P, H*W]
  auto maps = rows.matmul(flat.to(att_diff.dtype())).clamp(0, 1);  // [.., C, H*W]
  auto sizes = parts.sizes().vec();
  sizes[batched ? 1 : 0] = att_diff.size(-1);
  return maps.reshape(sizes);
}

torch::Tensor resize_mask(const torch::Tensor& mask, int64_t out_h, int64_t out_w, ResizeMode mode) {
  TORCH_CHECK(out_h >= 1 && out_w >= 1, "resize target must be positive");
  TORCH_CHECK(mask.dim() >= 2, "mask must have spatial dims");
  if (mask.size(-2) == out_h && mask.size(-1) == out_w) return mask.clone();
  auto lead = mask.sizes().vec();
  lead.pop_back();
  lead.pop_back();
  auto shaped = mask.reshape({-1, 1, mask.size(-2), mask.size(-1)});
  auto opts = nnf::InterpolateFuncOptions().size(std::vector<int64_t>{out_h, out_w});
  if (mode == ResizeMode::kBilinear)
    opts = opts.mode(torch::kBilinear).align_corners(false);
  else
    opts = opts.mode(torch::kNearestExact);
  auto out = nnf::interpolate(shaped, opts);
  lead.push_back(out_h);
  lead.push_back(out_w);
  return out.reshape(lead);
}

PartMaskStack resize_mask(const PartMaskStack& parts, int64_t out_h, int64_t out_w, ResizeMode mode) {
  auto resized = resize_mask(parts.probs, out_h, out_w, mode).clamp(0, 1);
  auto sums = resized.sum(0, /*keepdim=*/true).clamp_min(1e-8);
  PartMaskStack out;
  out.probs = resized / sums;
  out.part_names = parts.part_names;
  return out;
}

double mre_metric(const EditFn& edit, const std::vector<MreSample>& samples, const RelationMatrices& rel) {
  TORCH_CHECK(!samples.empty(), "mre_metric needs a non-empty dataset");
  const auto C = rel.num_attributes();
  double total = 0;
  torch::NoGradGuard ng;
  for (const auto& s : samples) {
    TORCH_CHECK(s.image.dim() == 3, "mre_metric expects [3, H, W] images");
    TORCH_CHECK(s.att_s.size(0) == C, "attribute count mismatch");
    const auto h = s.image.size(1), w = s.image.size(2);
    auto parts = s.parts.probs;
    if (parts.size(1) != h || parts.size(2) != w) parts = resize_mask(s.parts, h, w).probs;
    double img_total = 0;
    for (int64_t i = 0; i < C; ++i) {
      auto diff = torch::zeros({C}, s.image.scalar_type());
      diff[i] = 1 - 2 * s.att_s[i].item<double>();
      auto out = edit(s.image, diff);
      auto m_sgn = signed_attribute_masks(diff, parts.to(s.image.scalar_type()), rel)[i];
      img_total += ((1 - m_sgn).unsqueeze(0) * (out - s.image).abs()).sum().item<double>();
    }
    total += img_total / double(h * w * C);
  }
  return total / double(samples.size());
}

}  // namespace magkit
