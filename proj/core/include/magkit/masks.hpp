#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

#include "magkit/relations.hpp"

namespace magkit {

enum class Direction { kStrengthen, kWeaken };

// Soft part segmentation, probs shape [P, H, W], per-pixel sum 1 within 1e-4.
struct PartMaskStack {
  torch::Tensor probs;
  std::vector<std::string> part_names;

  static PartMaskStack from(torch::Tensor probs, std::vector<std::string> names = {});
  int64_t num_parts() const { return probs.size(0); }
};

// Difference vector att_t - att_s, entries in [-1, 1], shape [C].
struct AttDiff {
  torch::Tensor values;

  static AttDiff from(torch::Tensor values);
  static AttDiff zeros(int64_t num_attributes, torch::Dtype dtype = torch::kFloat32);
  // +-e_i: one-hot delta on a single attribute.
  static AttDiff unit(int64_t num_attributes, int64_t attribute_index, Direction dir,
                      double magnitude = 1.0, torch::Dtype dtype = torch::kFloat32);
  int64_t num_attributes() const { return values.size(0); }
};

struct PreservedMask {
  torch::Tensor map;  // [H, W] in [0, 1]
};

struct InfluenceRegion {
  torch::Tensor map;  // [H, W] in [0, 1]
  int64_t attribute_index = -1;
  Direction direction = Direction::kStrengthen;
};

// att_t - att_s from {0,1}-coded attribute rows ([C] or [B, C]).
torch::Tensor attribute_difference(const torch::Tensor& att_source, const torch::Tensor& att_target);

// Part relevance min{1, (d>0)^T AR+ + (d<0)^T AR-}: [C] -> [P], batched [B, C] -> [B, P].
torch::Tensor compute_ar_star(const torch::Tensor& att_diff, const RelationMatrices& rel);
torch::Tensor compute_ar_star(const AttDiff& diff, const RelationMatrices& rel);

// Per-pixel 1 - sum_p probs_p * ar_star_p, clipped to [0, 1] (float-error guard only).
PreservedMask preserved_mask(const AttDiff& diff, const PartMaskStack& parts, const RelationMatrices& rel);
// Batched: diff [B, C], parts [B, P, H, W] -> [B, H, W].
torch::Tensor preserved_mask_batch(const torch::Tensor& att_diff, const torch::Tensor& parts,
                                   const RelationMatrices& rel);

// Complement of preserved_mask(+-e_i): exactly 1 - preserved so the pair sums to one.
InfluenceRegion influence_region(int64_t attribute_index, Direction dir, const PartMaskStack& parts,
                                 const RelationMatrices& rel);

// Signed per-attribute spatial masks: channel i is sum_p AR+_{i,p} probs_p when d_i > 0,
// the AR- version when d_i < 0, zeros when d_i = 0. For a one-hot diff this equals the
// influence region. parts [P, H, W] with diff [C] -> [C, H, W]; batched
// parts [B, P, H, W] with diff [B, C] -> [B, C, H, W]. Scales conditioning channels and
// weights the complement in the MRE.
torch::Tensor signed_attribute_masks(const torch::Tensor& att_diff, const torch::Tensor& parts,
                                     const RelationMatrices& rel);

// Bilinear (default) or nearest resize for mask-like tensors [..., H, W].
// A PartMaskStack resize renormalizes so per-pixel sums stay 1.
enum class ResizeMode { kBilinear, kNearest };
torch::Tensor resize_mask(const torch::Tensor& mask, int64_t out_h, int64_t out_w,
                          ResizeMode mode = ResizeMode::kBilinear);
PartMaskStack resize_mask(const PartMaskStack& parts, int64_t out_h, int64_t out_w,
                          ResizeMode mode = ResizeMode::kBilinear);

// Mask-aware region error of an editor over a dataset: for every sample and every
// attribute i, flip only i (one-hot entry 1 - 2 att_s[i]), run the editor, and take
// sum_{pixels,channels}((1 - M_i^sgn) |edit - x|) / (H W C); the metric is the mean
// over all (sample, attribute) pairs. Images [3, H, W] in [-1, 1], att_s in {0,1}^C.
struct MreSample {
  torch::Tensor image;
  torch::Tensor att_s;
  PartMaskStack parts;
};
using EditFn = std::function<torch::Tensor(const torch::Tensor& image, const torch::Tensor& att_diff)>;
double mre_metric(const EditFn& edit, const std::vector<MreSample>& samples, const RelationMatrices& rel);

}  // namespace magkit
