#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <vector>

namespace magkit {

struct LossWeights {
  double lambda1 = 100;    // reconstruction
  double lambda2 = 10;     // classification
  double lambda3 = 200;    // mask-guided reconstruction
  double gp_lambda = 10;   // gradient penalty
  double cycle_weight = 1; // 1 = pure reconstruction, 0 = pure cycle

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// One pyramid level's critic: image batch [B,3,h,w] -> patch score map [B,1,s,s].
using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

// Losses return 0-dim tensors so they stay on the autodiff graph; tests read
// .item<double>(). Eq. 3/6-style L1 terms are normalized by element count so the
// paper's lambda values stay resolution-independent (this rescales the effective
// lambda versus the raw-sum reading).

// mean |preserved * (x - x_hat)|, mask broadcast over channels.
// x [3,H,W] with preserved [H,W], or batched [B,3,H,W] with [B,H,W].
torch::Tensor loss_g_mre(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& preserved);

// mean |x - x_rec| where x_rec = edit(x, 0).
torch::Tensor loss_g_rec(const torch::Tensor& x, const torch::Tensor& x_rec);

// mean |x - x_cycle| where x_cycle = edit(edit(x, d), -d).
torch::Tensor loss_g_cycle(const torch::Tensor& x, const torch::Tensor& x_cycle);

// Optional breakdown of loss_d_adv for logging: total = wasserstein + penalty,
// with the stored penalty already lambda-scaled.
struct DAdvParts {
  torch::Tensor wasserstein, penalty;
};

// One level's critic objective: E[D(fake)] - E[D(real)]
// + gp_lambda E[(||grad D(x_t)||_2 - 1)^2], x_t = t real + (1-t) fake, t ~ U(0,1)
// per sample. Patch maps enter the penalty through their per-sample sum.
torch::Tensor loss_d_adv(const CriticFn& critic, const torch::Tensor& x_real, const torch::Tensor& x_fake,
                         double gp_lambda, std::optional<torch::Generator> rng = std::nullopt,
                         DAdvParts* parts_out = nullptr);

// -(1/P) sum_i mean(score map i) over pyramid levels.
torch::Tensor loss_g_gan(const std::vector<torch::Tensor>& fake_score_maps);

// Mean per-attribute binary cross-entropy, logits vs {0,1} labels ([C] or [B,C]).
torch::Tensor loss_d_att(const torch::Tensor& logits, const torch::Tensor& att_s);
torch::Tensor loss_g_cls(const torch::Tensor& logits, const torch::Tensor& att_t);

struct GParts {
  torch::Tensor gan, rec, cls, mre, cycle;
};

// gan + lambda1 (cw rec + (1-cw) cycle) + lambda2 cls + lambda3 mre.
torch::Tensor total_g(const GParts& parts, const LossWeights& w);

// (1/P) sum of per-level (att + adv) sums.
torch::Tensor total_d(const std::vector<torch::Tensor>& per_level);

}  // namespace magkit
