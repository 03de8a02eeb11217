#include "magkit/generator.hpp"

#include <json.hpp>

#include "magkit/checkpoint.hpp"

namespace magkit {
namespace {

void init_gan_weights(torch::nn::Module& root) {
  torch::NoGradGuard ng;
  for (auto& m : root.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = m->as<torch::nn::ConvTranspose2d>()) {
      deconv->weight.normal_(0.0, 0.02);
      if (deconv->bias.defined()) deconv->bias.zero_();
    }
  }
}

torch::Tensor layer_norm_no_affine(const torch::Tensor& x) {
  auto mean = x.mean({1, 2, 3}, /*keepdim=*/true);
  auto var = (x - mean).pow(2).mean({1, 2, 3}, /*keepdim=*/true);
  return (x - mean) / (var + 1e-5).sqrt();
}

}  // namespace

int64_t GeneratorConfig::width(int64_t layer) const {
  TORCH_CHECK(layer >= 1 && layer <= num_layers, "layer out of range");
  int64_t w = base_channels;
  for (int64_t l = 1; l < layer; ++l) w = std::min(w * 2, channel_cap);
  return std::min(w, channel_cap);
}

void GeneratorConfig::validate() const {
  TORCH_CHECK(num_layers >= 2, "generator needs at least 2 layers");
  TORCH_CHECK(base_channels >= 1, "base_channels must be >= 1");
  TORCH_CHECK(channel_cap >= base_channels, "channel_cap below base_channels");
  TORCH_CHECK(num_attributes >= 1, "num_attributes must be >= 1");
  TORCH_CHECK((input_resolution & (input_resolution - 1)) == 0, "input_resolution must be a power of two");
  TORCH_CHECK(input_resolution >= (int64_t)1 << num_layers, "input_resolution must be >= 2^num_layers");
}

std::string GeneratorConfig::to_json() const {
  nlohmann::json j;
  j["num_layers"] = num_layers;
  j["base_channels"] = base_channels;
  j["channel_cap"] = channel_cap;
  j["input_resolution"] = input_resolution;
  j["num_attributes"] = num_attributes;
  j["use_mask_conditioning"] = use_mask_conditioning;
  j["use_spade"] = use_spade;
  j["use_blend"] = use_blend;
  j["stu_identity"] = stu_identity;
  return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  GeneratorConfig c;
  c.num_layers = j.at("num_layers");
  c.base_channels = j.at("base_channels");
  c.channel_cap = j.at("channel_cap");
  c.input_resolution = j.at("input_resolution");
  c.num_attributes = j.at("num_attributes");
  c.use_mask_conditioning = j.at("use_mask_conditioning");
  c.use_spade = j.at("use_spade");
  c.use_blend = j.at("use_blend");
  c.stu_identity = j.at("stu_identity");
  return c;
}

torch::Tensor build_condition_tensor(const torch::Tensor& att_diff, const torch::Tensor& parts,
                                     const RelationMatrices& rel, int64_t target_h, int64_t target_w,
                                     bool mask_guided) {
  TORCH_CHECK(att_diff.dim() == 2, "build_condition_tensor expects batched att_diff [B, C]");
  TORCH_CHECK(target_h >= 1 && target_w >= 1, "condition tensor target must be positive");
  const auto b = att_diff.size(0), c = att_diff.size(1);
  if (!mask_guided)
    return att_diff.reshape({b, c, 1, 1}).expand({b, c, target_h, target_w}).contiguous();
  TORCH_CHECK(parts.dim() == 4 && parts.size(0) == b, "parts must be [B, P, H, W]");
  auto maps = signed_attribute_masks(att_diff, parts, rel);  // [B, C, H, W]
  if (maps.size(2) != target_h || maps.size(3) != target_w)
    maps = resize_mask(maps, target_h, target_w);
  return att_diff.reshape({b, c, 1, 1}) * maps;
}

torch::Tensor blend(const torch::Tensor& raw, const torch::Tensor& input, const torch::Tensor& preserved) {
  TORCH_CHECK(raw.sizes() == input.sizes(), "blend shape mismatch");
  TORCH_CHECK(preserved.dim() + 1 == raw.dim(), "preserved mask must be the image without its channel dim");
  auto m = preserved.unsqueeze(-3);
  return m * input + (1 - m) * raw;
}

StuCellImpl::StuCellImpl(int64_t enc_channels, int64_t state_channels, int64_t num_attributes) {
  up_ = register_module("up", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(
                                  state_channels + num_attributes, enc_channels, 4)
                                  .stride(2)
                                  .padding(1)));
  auto gate = [&](int64_t in) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, enc_channels, 3).padding(1));
  };
  reset_ = register_module("reset", gate(enc_channels * 2));
  update_ = register_module("update", gate(enc_channels * 2));
  candidate_ = register_module("candidate", gate(enc_channels * 2));
}

torch::Tensor StuCellImpl::forward(const torch::Tensor& f_enc, const torch::Tensor& state,
                                   const torch::Tensor& att) {
  const auto b = state.size(0), h = state.size(2), w = state.size(3);
  auto att_map = att.reshape({b, att.size(1), 1, 1}).expand({b, att.size(1), h, w});
  auto s_up = up_(torch::cat({state, att_map}, 1));
  auto gate_in = torch::cat({f_enc, s_up}, 1);
  auto r = torch::sigmoid(reset_(gate_in));
  auto z = torch::sigmoid(update_(gate_in));
  auto cand = torch::tanh(candidate_(torch::cat({r * s_up, f_enc}, 1)));
  return (1 - z) * f_enc + z * cand;
}

SpadeBlockImpl::SpadeBlockImpl(int64_t feature_channels, int64_t cond_channels) {
  auto conv = [&](int64_t in, int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
  };
  gamma1_ = register_module("gamma1", conv(feature_channels + cond_channels, feature_channels));
  gamma2_ = register_module("gamma2", conv(feature_channels, feature_channels));
  beta1_ = register_module("beta1", conv(feature_channels + cond_channels, feature_channels));
  beta2_ = register_module("beta2", conv(feature_channels, feature_channels));
}

torch::Tensor SpadeBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  TORCH_CHECK(x.size(2) == cond.size(2) && x.size(3) == cond.size(3),
              "condition tensor resolution mismatch at a SPADE layer");
  auto norm = layer_norm_no_affine(x);
  auto joint = torch::cat({x, cond}, 1);
  auto gamma = gamma2_(torch::relu(gamma1_(joint)));
  auto beta = beta2_(torch::relu(beta1_(joint)));
  return norm * (1 + gamma) + beta;
}

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg, RelationMatrices rel)
    : cfg_(std::move(cfg)), rel_(std::move(rel)) {
  cfg_.validate();
  rel_.validate();
  TORCH_CHECK(rel_.num_attributes() == cfg_.num_attributes,
              "relation matrices do not match num_attributes");
  const auto L = cfg_.num_layers;
  const auto C = cfg_.num_attributes;

  enc_blocks_ = register_module("encoder", torch::nn::ModuleList());
  for (int64_t l = 1; l <= L; ++l) {
    auto in = l == 1 ? 3 : cfg_.width(l - 1);
    enc_blocks_->push_back(torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, cfg_.width(l), 4).stride(2).padding(1)),
        torch::nn::BatchNorm2d(cfg_.width(l)),
        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2))));
  }

  for (int64_t l = 1; l < L; ++l) {
    auto cell = StuCell(cfg_.width(l), cfg_.width(l + 1), C);
    stu_cells_.push_back(register_module("stu" + std::to_string(l), cell));
  }

  // decoder layer l: deconv to width(l) (RGB at l=1); SPADE or BN+concat for l >= 2
  const bool concat_cond = !cfg_.use_spade;
  for (int64_t l = 1; l <= L; ++l) {
    auto in = l == L ? cfg_.width(L) : cfg_.width(l + 1) + cfg_.width(l);
    if (concat_cond && l >= 2) in += C;
    auto out = l == 1 ? 3 : cfg_.width(l);
    auto deconv = torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
    dec_convs_.push_back(register_module("decoder_conv" + std::to_string(l), deconv));
    if (l >= 2) {
      if (cfg_.use_spade)
        spades_.push_back(register_module("decoder_spade" + std::to_string(l), SpadeBlock(out, C)));
      else
        dec_norms_.push_back(
            register_module("decoder_norm" + std::to_string(l), torch::nn::BatchNorm2d(out)));
    }
  }

  init_gan_weights(*this);
  // zero-init the final modulation convs so every SPADE starts as plain layer norm
  torch::NoGradGuard ng;
  for (auto& s : spades_)
    for (auto p : s->named_parameters())
      if (p.key().rfind("gamma2.", 0) == 0 || p.key().rfind("beta2.", 0) == 0) p.value().zero_();
}

FeaturePyramid GeneratorImpl::encode(const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 4 && image.size(1) == 3, "encode expects [B, 3, R, R]");
  TORCH_CHECK(image.size(2) == cfg_.input_resolution && image.size(3) == cfg_.input_resolution,
              "input resolution must be ", cfg_.input_resolution);
  FeaturePyramid pyr;
  auto x = image;
  for (const auto& block : *enc_blocks_) {
    x = block->as<torch::nn::Sequential>()->forward(x);
    pyr.blocks.push_back(x);
  }
  return pyr;
}

FeaturePyramid GeneratorImpl::stu_transfer(const FeaturePyramid& enc, const torch::Tensor& att_diff) {
  TORCH_CHECK((int64_t)enc.blocks.size() == cfg_.num_layers, "feature pyramid layer count mismatch");
  if (cfg_.stu_identity) return enc;
  TORCH_CHECK(att_diff.dim() == 2 && att_diff.size(1) == cfg_.num_attributes,
              "stu_transfer expects att_diff [B, C]");
  const auto L = cfg_.num_layers;
  FeaturePyramid out;
  out.blocks.resize(L);
  out.blocks[L - 1] = enc.blocks[L - 1];
  auto state = enc.blocks[L - 1];
  for (int64_t l = L - 1; l >= 1; --l) {
    state = stu_cells_[l - 1]->forward(enc.blocks[l - 1], state, att_diff);
    out.blocks[l - 1] = state;
  }
  return out;
}

std::vector<torch::Tensor> GeneratorImpl::build_condition_tensors(const torch::Tensor& att_diff,
                                                                  const torch::Tensor& parts) {
  const auto L = cfg_.num_layers;
  const auto R = cfg_.input_resolution;
  std::vector<torch::Tensor> conds(L);
  for (int64_t l = 2; l <= L; ++l) {
    // SPADE consumes the deconv output (R / 2^(l-1)); the concat variant feeds
    // the deconv input (R / 2^l)
    auto side = cfg_.use_spade ? R >> (l - 1) : R >> l;
    conds[l - 1] = build_condition_tensor(att_diff, parts, rel_, side, side, cfg_.use_mask_conditioning);
  }
  return conds;
}

torch::Tensor GeneratorImpl::decode(const FeaturePyramid& transferred,
                                    const std::vector<torch::Tensor>& cond) {
  const auto L = cfg_.num_layers;
  TORCH_CHECK((int64_t)transferred.blocks.size() == L, "feature pyramid layer count mismatch");
  TORCH_CHECK((int64_t)cond.size() == L, "need one condition slot per layer");
  const bool concat_cond = !cfg_.use_spade;
  auto x = transferred.blocks[L - 1];
  for (int64_t l = L; l >= 2; --l) {
    if (l < L) x = torch::cat({x, transferred.blocks[l - 1]}, 1);
    TORCH_CHECK(cond[l - 1].defined(), "missing condition tensor for layer ", l);
    if (concat_cond) {
      TORCH_CHECK(cond[l - 1].size(2) == x.size(2) && cond[l - 1].size(3) == x.size(3),
                  "condition tensor resolution mismatch at decoder layer ", l);
      x = torch::cat({x, cond[l - 1]}, 1);
    }
    x = dec_convs_[l - 1]->forward(x);
    if (cfg_.use_spade)
      x = spades_[l - 2]->forward(x, cond[l - 1]);
    else
      x = dec_norms_[l - 2]->forward(x);
    x = torch::relu(x);
  }
  x = torch::cat({x, transferred.blocks[0]}, 1);
  return torch::tanh(dec_convs_[0]->forward(x));
}

torch::Tensor GeneratorImpl::edit(const torch::Tensor& image, const torch::Tensor& att_diff,
                                  const torch::Tensor& parts) {
  const bool single = image.dim() == 3;
  auto x = single ? image.unsqueeze(0) : image;
  auto d = att_diff.dim() == 1 ? att_diff.unsqueeze(0) : att_diff;
  auto p = parts.dim() == 3 ? parts.unsqueeze(0) : parts;
  TORCH_CHECK((d.abs() <= 1).all().item<bool>(), "attribute difference entries must lie in [-1, 1]");

  auto enc = encode(x);
  auto skips = stu_transfer(enc, d);
  auto conds = build_condition_tensors(d, p);
  auto raw = decode(skips, conds);
  auto out = raw;
  if (cfg_.use_blend) {
    auto full = p;
    if (full.size(2) != x.size(2) || full.size(3) != x.size(3))
      full = resize_mask(full, x.size(2), x.size(3));
    auto preserved = preserved_mask_batch(d, full, rel_);
    out = blend(raw, x, preserved);
  }
  return single ? out.squeeze(0) : out;
}

void GeneratorImpl::save(const std::string& path, int64_t step) const {
  TensorStore store;
  store.put_string("config", cfg_.to_json());
  store.put_string("relations", serialize_relation_config(rel_));
  store.put("step", torch::tensor(step));
  store.put_module("", *this);
  store.save(path);
}

std::pair<std::shared_ptr<GeneratorImpl>, int64_t> GeneratorImpl::load(const std::string& path) {
  auto store = TensorStore::load(path);
  auto cfg = GeneratorConfig::from_json(store.get_string("config"));
  auto rel = parse_relation_config(store.get_string("relations"));
  auto gen = std::make_shared<GeneratorImpl>(cfg, rel);
  store.load_module("", *gen);
  return {gen, store.get("step").item<int64_t>()};
}

}  // namespace magkit
