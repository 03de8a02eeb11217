#include "magkit/discriminator.hpp"

#include <json.hpp>

#include "magkit/checkpoint.hpp"

namespace magkit {
namespace {

void init_critic_weights(torch::nn::Module& root) {
  torch::NoGradGuard ng;
  for (auto& m : root.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02);
      if (conv->bias.defined()) conv->bias.zero_();
    }
  }
}

}  // namespace

int64_t DiscriminatorConfig::width(int64_t layer) const {
  TORCH_CHECK(layer >= 1 && layer <= conv_layers, "layer out of range");
  auto geometric = base_channels << std::min<int64_t>(layer - 1, 2);
  return layer <= 3 ? std::min(geometric, channel_cap) : channel_cap;
}

void DiscriminatorConfig::validate() const {
  TORCH_CHECK(num_levels >= 1, "need at least one critic level");
  TORCH_CHECK(conv_layers >= 1, "need at least one conv layer");
  TORCH_CHECK(num_attributes >= 1, "num_attributes must be >= 1");
  TORCH_CHECK(base_channels >= 1, "base_channels must be >= 1");
  TORCH_CHECK(channel_cap >= base_channels, "channel_cap below base_channels");
  TORCH_CHECK((base_resolution & (base_resolution - 1)) == 0,
              "base_resolution must be a power of two");
  TORCH_CHECK(base_resolution >= (int64_t)1 << conv_layers,
              "base_resolution must be >= 2^conv_layers");
}

std::string DiscriminatorConfig::to_json() const {
  nlohmann::json j;
  j["num_levels"] = num_levels;
  j["base_resolution"] = base_resolution;
  j["conv_layers"] = conv_layers;
  j["num_attributes"] = num_attributes;
  j["base_channels"] = base_channels;
  j["channel_cap"] = channel_cap;
  return j.dump();
}

DiscriminatorConfig DiscriminatorConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  DiscriminatorConfig c;
  c.num_levels = j.at("num_levels");
  c.base_resolution = j.at("base_resolution");
  c.conv_layers = j.at("conv_layers");
  c.num_attributes = j.at("num_attributes");
  c.base_channels = j.at("base_channels");
  c.channel_cap = j.at("channel_cap");
  return c;
}

std::vector<torch::Tensor> make_pyramid(const torch::Tensor& image, const DiscriminatorConfig& cfg) {
  TORCH_CHECK(image.dim() == 4 && image.size(1) == 3, "make_pyramid expects [B, 3, R, R]");
  TORCH_CHECK(image.size(2) == cfg.input_resolution() && image.size(3) == cfg.input_resolution(),
              "pyramid input must be ", cfg.input_resolution(), " on a side");
  std::vector<torch::Tensor> levels(cfg.num_levels);
  levels[cfg.num_levels - 1] = image;
  for (int64_t i = cfg.num_levels - 2; i >= 0; --i)
    levels[i] = torch::avg_pool2d(levels[i + 1], 2);
  return levels;
}

LevelCriticImpl::LevelCriticImpl(const DiscriminatorConfig& cfg, int64_t level) {
  cfg.validate();
  TORCH_CHECK(level >= 0 && level < cfg.num_levels, "level out of range");
  expected_resolution_ = cfg.base_resolution << level;
  pool_side_ = 1 << level;

  backbone_ = torch::nn::Sequential();
  int64_t in = 3, side = expected_resolution_;
  for (int64_t l = 1; l <= cfg.conv_layers; ++l) {
    auto out = cfg.width(l);
    backbone_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    side /= 2;
    // instance norm is undefined on a 1x1 map, so the last layer drops it when
    // the stack bottoms out
    if (side > 1)
      backbone_->push_back(torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)));
    backbone_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    in = out;
  }
  register_module("backbone", backbone_);

  auto head = [&](int64_t out_ch) {
    return torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, in, 1)),
        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out_ch, 1)));
  };
  adv_head_ = register_module("adv_head", head(1));
  att_head_ = register_module("att_head", head(cfg.num_attributes));

  init_critic_weights(*this);
}

torch::Tensor LevelCriticImpl::backbone_features(const torch::Tensor& x) {
  return backbone_->forward(x);
}

CriticOutput LevelCriticImpl::forward(const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 4 && image.size(1) == 3, "critic expects [B, 3, R, R]");
  TORCH_CHECK(image.size(2) == expected_resolution_ && image.size(3) == expected_resolution_,
              "this critic level expects resolution ", expected_resolution_);
  auto f = backbone_->forward(image);
  auto adv = adv_head_->forward(torch::adaptive_avg_pool2d(f, {pool_side_, pool_side_}));
  auto att = att_head_->forward(torch::adaptive_avg_pool2d(f, {1, 1}));
  return {adv.squeeze(1), att.flatten(1)};
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (int64_t i = 0; i < cfg_.num_levels; ++i)
    levels_.push_back(register_module("level" + std::to_string(i), LevelCritic(cfg_, i)));
}

CriticOutput DiscriminatorImpl::critic_forward(const torch::Tensor& image_at_level, int64_t level) {
  TORCH_CHECK(level >= 0 && level < cfg_.num_levels, "level out of range");
  return levels_[level]->forward(image_at_level);
}

std::vector<CriticOutput> DiscriminatorImpl::ensemble_forward(const torch::Tensor& image) {
  auto pyr = make_pyramid(image, cfg_);
  std::vector<CriticOutput> out;
  out.reserve(pyr.size());
  for (int64_t i = 0; i < cfg_.num_levels; ++i) out.push_back(levels_[i]->forward(pyr[i]));
  return out;
}

void DiscriminatorImpl::save(const std::string& path, int64_t step) const {
  TensorStore store;
  store.put_string("config", cfg_.to_json());
  store.put("step", torch::tensor(step));
  store.put_module("", *this);
  store.save(path);
}

std::pair<std::shared_ptr<DiscriminatorImpl>, int64_t> DiscriminatorImpl::load(const std::string& path) {
  auto store = TensorStore::load(path);
  auto cfg = DiscriminatorConfig::from_json(store.get_string("config"));
  auto d = std::make_shared<DiscriminatorImpl>(cfg);
  store.load_module("", *d);
  return {d, store.get("step").item<int64_t>()};
}

}  // namespace magkit
