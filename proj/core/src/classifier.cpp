#include "magkit/classifier.hpp"

#include <json.hpp>

#include "magkit/checkpoint.hpp"

namespace magkit {

int64_t ClassifierConfig::width(int64_t layer) const {
  TORCH_CHECK(layer >= 1 && layer <= conv_layers, "layer out of range");
  return base_channels << std::min<int64_t>(layer - 1, 3);
}

void ClassifierConfig::validate() const {
  TORCH_CHECK(num_attributes >= 1, "num_attributes must be >= 1");
  TORCH_CHECK(base_channels >= 1, "base_channels must be >= 1");
  TORCH_CHECK(conv_layers >= 1, "conv_layers must be >= 1");
  TORCH_CHECK((resolution & (resolution - 1)) == 0, "resolution must be a power of two");
  TORCH_CHECK(resolution >= (int64_t)1 << conv_layers, "resolution must be >= 2^conv_layers");
}

std::string ClassifierConfig::to_json() const {
  nlohmann::json j;
  j["resolution"] = resolution;
  j["num_attributes"] = num_attributes;
  j["base_channels"] = base_channels;
  j["conv_layers"] = conv_layers;
  return j.dump();
}

ClassifierConfig ClassifierConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  ClassifierConfig c;
  c.resolution = j.at("resolution");
  c.num_attributes = j.at("num_attributes");
  c.base_channels = j.at("base_channels");
  c.conv_layers = j.at("conv_layers");
  return c;
}

ClassifierImpl::ClassifierImpl(ClassifierConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  trunk_ = torch::nn::Sequential();
  int64_t in = 3;
  for (int64_t l = 1; l <= cfg_.conv_layers; ++l) {
    auto out = cfg_.width(l);
    trunk_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    trunk_->push_back(torch::nn::BatchNorm2d(out));
    trunk_->push_back(torch::nn::ReLU());
    in = out;
  }
  register_module("trunk", trunk_);
  head_ = register_module("head", torch::nn::Linear(cfg_.feature_dim(), cfg_.num_attributes));
}

torch::Tensor ClassifierImpl::features(const torch::Tensor& images) {
  TORCH_CHECK(images.dim() == 4 && images.size(1) == 3, "classifier expects [B, 3, R, R]");
  TORCH_CHECK(images.size(2) == cfg_.resolution && images.size(3) == cfg_.resolution,
              "classifier expects resolution ", cfg_.resolution);
  auto f = trunk_->forward(images);
  return torch::adaptive_avg_pool2d(f, {1, 1}).flatten(1);
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& images) {
  return head_(features(images));
}

void ClassifierImpl::save(const std::string& path) const {
  TensorStore store;
  store.put_string("config", cfg_.to_json());
  store.put_module("", *this);
  store.save(path);
}

std::shared_ptr<ClassifierImpl> ClassifierImpl::load(const std::string& path) {
  auto store = TensorStore::load(path);
  auto clf = std::make_shared<ClassifierImpl>(ClassifierConfig::from_json(store.get_string("config")));
  store.load_module("", *clf);
  return clf;
}

void train_classifier(Classifier& clf, const torch::Tensor& images, const torch::Tensor& labels,
                      const ClassifierTrainOptions& opts) {
  TORCH_CHECK(images.size(0) == labels.size(0), "images/labels count mismatch");
  TORCH_CHECK(images.size(0) >= 1, "empty training set");
  const auto n = images.size(0);
  auto rng = at::detail::createCPUGenerator(opts.seed);
  torch::optim::Adam opt(clf->parameters(), torch::optim::AdamOptions(opts.lr));
  clf->train();
  for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
    auto order = torch::randperm(n, rng, torch::kInt64);
    for (int64_t start = 0; start < n; start += opts.batch_size) {
      auto idx = order.slice(0, start, std::min(n, start + opts.batch_size));
      auto x = images.index_select(0, idx);
      auto y = labels.index_select(0, idx);
      opt.zero_grad();
      auto loss = torch::binary_cross_entropy_with_logits(clf->forward(x), y);
      loss.backward();
      opt.step();
    }
  }
  clf->eval();
}

double classifier_accuracy(Classifier& clf, const torch::Tensor& images, const torch::Tensor& labels,
                           int64_t batch_size) {
  TORCH_CHECK(images.size(0) == labels.size(0) && images.size(0) >= 1, "bad eval set");
  torch::NoGradGuard ng;
  const bool was_training = clf->is_training();
  clf->eval();
  int64_t hits = 0;
  for (int64_t start = 0; start < images.size(0); start += batch_size) {
    auto stop = std::min(images.size(0), start + batch_size);
    auto logits = clf->forward(images.slice(0, start, stop));
    auto pred = logits > 0;
    hits += (pred == labels.slice(0, start, stop).to(torch::kBool)).sum().item<int64_t>();
  }
  if (was_training) clf->train();
  return double(hits) / double(images.size(0) * labels.size(1));
}

}  // namespace magkit
