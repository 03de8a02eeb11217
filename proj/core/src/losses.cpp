#include "magkit/losses.hpp"

namespace magkit {

void LossWeights::validate() const {
  TORCH_CHECK(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && gp_lambda >= 0, "loss weights must be >= 0");
  TORCH_CHECK(cycle_weight >= 0 && cycle_weight <= 1, "cycle_weight must lie in [0, 1]");
}

torch::Tensor loss_g_mre(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& preserved) {
  TORCH_CHECK(x.sizes() == x_hat.sizes(), "loss_g_mre shape mismatch");
  TORCH_CHECK(preserved.dim() + 1 == x.dim(), "preserved mask must be the image without its channel dim");
  auto m = preserved.unsqueeze(-3);
  return (m * (x - x_hat)).abs().mean();
}

torch::Tensor loss_g_rec(const torch::Tensor& x, const torch::Tensor& x_rec) {
  TORCH_CHECK(x.sizes() == x_rec.sizes(), "loss_g_rec shape mismatch");
  return (x - x_rec).abs().mean();
}

torch::Tensor loss_g_cycle(const torch::Tensor& x, const torch::Tensor& x_cycle) {
  TORCH_CHECK(x.sizes() == x_cycle.sizes(), "loss_g_cycle shape mismatch");
  return (x - x_cycle).abs().mean();
}

torch::Tensor loss_d_adv(const CriticFn& critic, const torch::Tensor& x_real, const torch::Tensor& x_fake,
                         double gp_lambda, std::optional<torch::Generator> rng, DAdvParts* parts_out) {
  TORCH_CHECK(x_real.sizes() == x_fake.sizes(), "loss_d_adv shape mismatch");
  auto wasserstein = critic(x_fake).mean() - critic(x_real).mean();

  auto b = x_real.size(0);
  std::vector<int64_t> tshape(x_real.dim(), 1);
  tshape[0] = b;
  auto t = rng ? torch::rand(tshape, *rng, x_real.options()) : torch::rand(tshape, x_real.options());
  auto x_int = (t * x_real + (1 - t) * x_fake).detach().requires_grad_(true);
  auto scores = critic(x_int);
  auto grads = torch::autograd::grad({scores.sum()}, {x_int}, /*grad_outputs=*/{},
                                     /*retain_graph=*/true, /*create_graph=*/true)[0];
  auto norms = grads.reshape({b, -1}).norm(2, 1);
  auto penalty = gp_lambda * (norms - 1).pow(2).mean();
  if (parts_out) {
    parts_out->wasserstein = wasserstein;
    parts_out->penalty = penalty;
  }
  return wasserstein + penalty;
}

torch::Tensor loss_g_gan(const std::vector<torch::Tensor>& fake_score_maps) {
  TORCH_CHECK(!fake_score_maps.empty(), "loss_g_gan needs at least one level");
  torch::Tensor acc;
  for (const auto& m : fake_score_maps) acc = acc.defined() ? acc + m.mean() : m.mean();
  return -acc / (double)fake_score_maps.size();
}

torch::Tensor loss_d_att(const torch::Tensor& logits, const torch::Tensor& att_s) {
  TORCH_CHECK(logits.sizes() == att_s.sizes(), "attribute logit/label length mismatch");
  return torch::binary_cross_entropy_with_logits(logits, att_s.to(logits.dtype()));
}

torch::Tensor loss_g_cls(const torch::Tensor& logits, const torch::Tensor& att_t) {
  return loss_d_att(logits, att_t);
}

torch::Tensor total_g(const GParts& parts, const LossWeights& w) {
  w.validate();
  auto rec_mix = w.cycle_weight * parts.rec +
                 (1 - w.cycle_weight) * (parts.cycle.defined() ? parts.cycle : torch::zeros_like(parts.rec));
  return parts.gan + w.lambda1 * rec_mix + w.lambda2 * parts.cls + w.lambda3 * parts.mre;
}

torch::Tensor total_d(const std::vector<torch::Tensor>& per_level) {
  TORCH_CHECK(!per_level.empty(), "total_d needs at least one level");
  torch::Tensor acc;
  for (const auto& l : per_level) acc = acc.defined() ? acc + l : l.clone();
  return acc / (double)per_level.size();
}

}  // namespace magkit
