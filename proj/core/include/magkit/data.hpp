#pragma once

#include <torch/torch.h>

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace magkit {

struct Sample {
  std::string name;        // source filename or synthetic id
  torch::Tensor image_u8;  // [3, H, W] uint8
  torch::Tensor att;       // [C] float32 in {0, 1}
  torch::Tensor parts_u8;  // [P, H, W] uint8 quantized part probabilities
  bool has_hat = false;    // hat-part area ratio > 0.1
};

struct AttributeTable {
  std::vector<std::string> names;
  std::vector<std::pair<std::string, std::vector<float>>> rows;  // filename -> {0,1} flags
};

// Attribute list text: optional leading count line, a row of attribute names,
// then "<filename> v1 v2 ..." with values in {-1, 1} or {0, 1}.
AttributeTable parse_attribute_table(const std::string& text);
AttributeTable load_attribute_table(const std::string& path);

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> attribute_names;
  std::vector<std::string> part_names;

  int64_t size() const { return (int64_t)samples.size(); }
  int64_t num_attributes() const { return (int64_t)attribute_names.size(); }
  int64_t num_parts() const { return (int64_t)part_names.size(); }
  int64_t resolution() const;

  // Batch assembly. Images map to [-1, 1]; parts dequantize and renormalize.
  torch::Tensor images(const std::vector<int64_t>& idx) const;      // [B, 3, H, W]
  torch::Tensor attributes(const std::vector<int64_t>& idx) const;  // [B, C]
  torch::Tensor parts(const std::vector<int64_t>& idx) const;       // [B, P, H, W]
  std::vector<int64_t> all_indices() const;
  std::vector<int64_t> subgroup_indices(bool hat) const;
};

// Reads PNGs + a mask container per image + the attribute table, keeping only
// the requested attribute columns. Rows are processed in filename order;
// a missing mask skips the image with a warning, a malformed table row is an
// error naming the line.
Dataset load_dataset(const std::string& image_dir, const std::string& table_path,
                     const std::string& mask_dir, const std::vector<std::string>& attribute_subset,
                     int64_t resolution);

enum class EditMode { kTrainShuffle, kEvalSingleFlip };

// att_s [B, C] -> att_diff [B, C]. Train mode permutes the batch's rows and
// returns att_t - att_s; eval mode flips exactly attribute_index everywhere.
torch::Tensor sample_edit_targets(const torch::Tensor& att_s, EditMode mode, int64_t attribute_index,
                                  std::mt19937_64& rng);

}  // namespace magkit
