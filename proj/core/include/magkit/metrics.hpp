#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "magkit/masks.hpp"

namespace magkit {

// 10 log10(max^2 / MSE), saturating at 99 dB when MSE = 0.
double psnr(const torch::Tensor& i, const torch::Tensor& r, double max_value);
constexpr double kPsnrSaturationDb = 99.0;

// Global-statistics SSIM per channel, averaged. windowed switches to the
// 11x11 Gaussian (sigma 1.5) sliding version for cross-tool comparison.
double ssim(const torch::Tensor& i, const torch::Tensor& r, double c1, double c2, bool windowed = false);
// Constants from the value range L: c1 = (0.01 L)^2, c2 = (0.03 L)^2.
double ssim_for_range(const torch::Tensor& i, const torch::Tensor& r, double range, bool windowed = false);

// Frechet distance between Gaussian fits of two feature sets [N, D].
// Matrix square roots via symmetric eigendecomposition, negative eigenvalues
// clipped at 0; with fewer than D+1 samples on a side, 1e-6 I is added to the
// covariance estimates.
double fid(const torch::Tensor& real_features, const torch::Tensor& fake_features);

// Batched editing hooks. edit: images [B,3,H,W] + diffs [B,C] -> images.
// classify: images [B,3,H,W] -> logits [B,C].
using BatchEditFn = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;
using BatchClassifyFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct AccuracyResult {
  std::vector<double> per_attribute;
  double average = 0;
};

// For every sample and attribute i, flip attribute i, edit, classify; success
// iff sigmoid(logit_i) > 0.5 matches the flipped value. An optional filter
// (e.g. a mask-area predicate) restricts the dataset to a subgroup.
AccuracyResult editing_accuracy(const BatchEditFn& edit, const BatchClassifyFn& classify,
                                const std::vector<MreSample>& samples, int64_t batch_size = 16,
                                const std::function<bool(const MreSample&)>& filter = nullptr);

// Mean probability mass of one part over the image, for subgroup predicates
// (the hat split uses ratio > 0.1).
double mask_area_ratio(const PartMaskStack& parts, const std::string& part_name);

struct EvalReport {
  std::string subgroup = "overall";
  double mre = 0;
  double psnr_mean = 0;
  double ssim_mean = 0;
  std::vector<std::string> attribute_names;
  std::vector<double> per_attribute_accuracy;
  double avg_accuracy = 0;
  std::optional<double> fid;
  std::string fid_embedder;

  std::string to_text() const;
  static EvalReport from_text(const std::string& text);
};

void save_eval_report(const std::vector<EvalReport>& reports, const std::string& path);

}  // namespace magkit
