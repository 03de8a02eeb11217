#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace magkit {

struct DiscriminatorConfig {
  int64_t num_levels = 1;        // P critics; level i sees base_resolution * 2^i
  int64_t base_resolution = 64;  // coarsest (level-0) full-image resolution
  int64_t conv_layers = 6;
  int64_t num_attributes = 0;
  int64_t base_channels = 64;
  int64_t channel_cap = 1024;

  // widths (base, 2 base, 4 base, cap, cap, ...): three geometric steps, then flat
  int64_t width(int64_t layer) const;
  int64_t input_resolution() const { return base_resolution << (num_levels - 1); }
  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;

  std::string to_json() const;
  static DiscriminatorConfig from_json(const std::string& text);
};

struct CriticOutput {
  torch::Tensor adv_map;      // [B, 2^i, 2^i] patch scores at level i
  torch::Tensor attr_logits;  // [B, C]
};

// P images, coarse to fine; level P-1 is the input itself, each coarser level a
// 2x2 area-average downsample.
std::vector<torch::Tensor> make_pyramid(const torch::Tensor& image, const DiscriminatorConfig& cfg);

class LevelCriticImpl : public torch::nn::Module {
 public:
  LevelCriticImpl(const DiscriminatorConfig& cfg, int64_t level);
  CriticOutput forward(const torch::Tensor& image);
  // conv stack only, no resolution check; side halves per layer
  torch::Tensor backbone_features(const torch::Tensor& x);

 private:
  torch::nn::Sequential backbone_{nullptr}, adv_head_{nullptr}, att_head_{nullptr};
  int64_t expected_resolution_ = 0;
  int64_t pool_side_ = 1;
};
TORCH_MODULE(LevelCritic);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);

  const DiscriminatorConfig& config() const { return cfg_; }
  LevelCritic level(int64_t i) { return levels_.at(i); }

  CriticOutput critic_forward(const torch::Tensor& image_at_level, int64_t level);
  // make_pyramid, then each level's critic with its own weights
  std::vector<CriticOutput> ensemble_forward(const torch::Tensor& image);

  void save(const std::string& path, int64_t step = 0) const;
  static std::pair<std::shared_ptr<DiscriminatorImpl>, int64_t> load(const std::string& path);

 private:
  DiscriminatorConfig cfg_;
  std::vector<LevelCritic> levels_;
};
TORCH_MODULE(Discriminator);

}  // namespace magkit
