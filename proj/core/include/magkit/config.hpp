#pragma once

#include <string>
#include <vector>

#include "magkit/losses.hpp"

namespace magkit {

// Full training run description. Serializes to a flat-ish JSON document whose
// keys are exactly these fields (weights nested one level); every leaf is also
// addressable as a --key=value override, nested leaves with a dot
// (--weights.lambda3=0).
struct TrainConfig {
  // Data source: a dataset directory (images/ masks/ attributes.txt
  // relations.txt) or, when empty, inline synthetic data drawn on the fly.
  std::string dataset_dir;
  std::vector<std::string> attributes = {"Bald", "Blond_Hair", "Black_Hair",
                                         "Brown_Hair", "Eyeglasses", "Wearing_Hat"};
  int64_t synth_train_count = 20000;
  int64_t synth_eval_count = 512;

  // Model shape.
  int64_t resolution = 64;
  int64_t num_levels = 1;  // patch-critic pyramid depth P
  int64_t g_num_layers = 6;
  int64_t g_base_channels = 16;
  int64_t g_channel_cap = 128;
  int64_t d_conv_layers = 6;
  int64_t d_base_channels = 16;
  int64_t d_channel_cap = 64;

  // Schedule.
  int64_t batch_size = 16;
  int64_t total_steps = 10000;
  int64_t n_critic = 5;  // critic updates per generator update
  double g_lr = 1e-4;
  double d_lr = 2e-4;
  LossWeights weights;
  uint64_t seed = 0;

  // Ablation switches. mask_loss gates the masked-reconstruction term in the
  // generator objective; mask_conditioning picks signed region maps over
  // spatially uniform condition channels; spade picks spatial denormalization
  // over concat conditioning; blend composites preserved pixels from the input.
  bool use_mask_loss = true;
  bool use_mask_conditioning = true;
  bool use_spade = true;
  bool use_blend = false;

  // Harness.
  std::string out_dir;
  int64_t eval_every = 1000;
  int64_t log_every = 100;
  // Cap on held-out samples consumed per periodic eval; 0 = use all.
  int64_t eval_subset = 0;
  // Optional frozen attribute classifier; enables accuracy and FID columns.
  std::string classifier_path;

  void validate() const;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  void save(const std::string& path) const;
  static TrainConfig load(const std::string& path);

  // Sets one leaf by dotted name from its string form; unknown keys and
  // unparsable values throw.
  void apply_override(const std::string& key, const std::string& value);

  // Names of leaves whose values differ; empty means equal configs.
  std::vector<std::string> diff(const TrainConfig& other) const;
  bool operator==(const TrainConfig& other) const { return diff(other).empty(); }
};

}  // namespace magkit
