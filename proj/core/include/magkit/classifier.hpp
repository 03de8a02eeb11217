#pragma once

#include <torch/torch.h>

#include <string>

namespace magkit {

// Held-out attribute predictor: scores edits and doubles as the feature
// embedder for the Frechet distance. Deliberately not the training critic.
struct ClassifierConfig {
  int64_t resolution = 64;
  int64_t num_attributes = 0;
  int64_t base_channels = 16;
  int64_t conv_layers = 4;

  int64_t width(int64_t layer) const;  // base * 2^(l-1), capped at 8 base
  int64_t feature_dim() const { return width(conv_layers); }
  void validate() const;
  bool operator==(const ClassifierConfig&) const = default;

  std::string to_json() const;
  static ClassifierConfig from_json(const std::string& text);
};

class ClassifierImpl : public torch::nn::Module {
 public:
  explicit ClassifierImpl(ClassifierConfig cfg);

  const ClassifierConfig& config() const { return cfg_; }
  torch::Tensor features(const torch::Tensor& images);  // [B, feature_dim] penultimate
  torch::Tensor forward(const torch::Tensor& images);   // [B, C] logits

  void save(const std::string& path) const;
  static std::shared_ptr<ClassifierImpl> load(const std::string& path);

 private:
  ClassifierConfig cfg_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Classifier);

struct ClassifierTrainOptions {
  int64_t epochs = 20;
  int64_t batch_size = 64;
  double lr = 1e-3;
  uint64_t seed = 0;
};

// Supervised BCE training on images [N,3,R,R] in [-1,1] with labels [N,C] in {0,1}.
void train_classifier(Classifier& clf, const torch::Tensor& images, const torch::Tensor& labels,
                      const ClassifierTrainOptions& opts);

// Mean over samples and attributes of (logit > 0) == label.
double classifier_accuracy(Classifier& clf, const torch::Tensor& images, const torch::Tensor& labels,
                           int64_t batch_size = 128);

}  // namespace magkit
