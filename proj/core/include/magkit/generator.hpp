#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "magkit/masks.hpp"
#include "magkit/relations.hpp"

namespace magkit {

struct GeneratorConfig {
  int64_t num_layers = 6;
  int64_t base_channels = 64;
  int64_t channel_cap = 1024;
  int64_t input_resolution = 64;  // power of two, >= 2^num_layers
  int64_t num_attributes = 0;
  bool use_mask_conditioning = true;
  bool use_spade = true;
  bool use_blend = false;
  bool stu_identity = false;  // test hook: skip connections pass through untouched

  // width(l) = min(base_channels 2^(l-1), channel_cap); the defaults give
  // (64, 128, 256, 512, 1024, 1024).
  int64_t width(int64_t layer) const;
  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;

  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
};

// Feature blocks indexed by layer: blocks[l-1] is layer l, channels width(l),
// spatial side input_resolution / 2^l.
struct FeaturePyramid {
  std::vector<torch::Tensor> blocks;
};

// Decoder condition stack: channel i = att_diff_i * signed region map of that
// change, resized to target; uniform fallback replicates att_diff_i everywhere.
// att_diff [B, C] with parts [B, P, H, W] -> [B, C, h, w].
torch::Tensor build_condition_tensor(const torch::Tensor& att_diff, const torch::Tensor& parts,
                                     const RelationMatrices& rel, int64_t target_h, int64_t target_w,
                                     bool mask_guided);

// M input + (1 - M) raw, mask broadcast over channels; [3,H,W]/[H,W] or batched.
torch::Tensor blend(const torch::Tensor& raw, const torch::Tensor& input, const torch::Tensor& preserved);

class StuCellImpl : public torch::nn::Module {
 public:
  StuCellImpl(int64_t enc_channels, int64_t state_channels, int64_t num_attributes);
  // f_enc [B,ch,h,w], state [B,state_ch,h/2,w/2], att [B,C] -> transferred feature
  // (also the state handed to the next shallower cell).
  torch::Tensor forward(const torch::Tensor& f_enc, const torch::Tensor& state, const torch::Tensor& att);

 private:
  torch::nn::ConvTranspose2d up_{nullptr};
  torch::nn::Conv2d reset_{nullptr}, update_{nullptr}, candidate_{nullptr};
};
TORCH_MODULE(StuCell);

class SpadeBlockImpl : public torch::nn::Module {
 public:
  SpadeBlockImpl(int64_t feature_channels, int64_t cond_channels);
  // x [B,d,h,w], cond [B,C,h,w]: affine-free layer norm, then * (1+gamma) + beta,
  // gamma/beta each from two 3x3 convs on concat(x, cond); final convs start at
  // zero so the block begins as plain normalization.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

 private:
  torch::nn::Conv2d gamma1_{nullptr}, gamma2_{nullptr}, beta1_{nullptr}, beta2_{nullptr};
};
TORCH_MODULE(SpadeBlock);

class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl(GeneratorConfig cfg, RelationMatrices rel);

  const GeneratorConfig& config() const { return cfg_; }
  const RelationMatrices& relations() const { return rel_; }

  // Stride-2 conv stack; image [B,3,R,R] in [-1,1].
  FeaturePyramid encode(const torch::Tensor& image);
  // Gated skip transfer for layers 1..num_layers-1 (deepest block passes through);
  // hidden state seeds from the deepest feature and flows top-down.
  FeaturePyramid stu_transfer(const FeaturePyramid& enc, const torch::Tensor& att_diff);
  // Per-layer condition stacks for the decoder, index l-1 for layer l (layer 1 unused).
  std::vector<torch::Tensor> build_condition_tensors(const torch::Tensor& att_diff,
                                                     const torch::Tensor& parts);
  torch::Tensor decode(const FeaturePyramid& transferred, const std::vector<torch::Tensor>& cond);

  // encode -> stu_transfer -> decode (+ blend when configured).
  torch::Tensor edit(const torch::Tensor& image, const torch::Tensor& att_diff, const torch::Tensor& parts);

  void save(const std::string& path, int64_t step = 0) const;
  static std::pair<std::shared_ptr<GeneratorImpl>, int64_t> load(const std::string& path);

 private:
  GeneratorConfig cfg_;
  RelationMatrices rel_;
  torch::nn::ModuleList enc_blocks_;
  std::vector<StuCell> stu_cells_;
  std::vector<torch::nn::ConvTranspose2d> dec_convs_;
  std::vector<SpadeBlock> spades_;
  std::vector<torch::nn::BatchNorm2d> dec_norms_;
};
TORCH_MODULE(Generator);

}  // namespace magkit
