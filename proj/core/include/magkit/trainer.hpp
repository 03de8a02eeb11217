#pragma once

#include <torch/torch.h>

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "magkit/checkpoint.hpp"
#include "magkit/classifier.hpp"
#include "magkit/config.hpp"
#include "magkit/data.hpp"
#include "magkit/discriminator.hpp"
#include "magkit/generator.hpp"
#include "magkit/metrics.hpp"
#include "magkit/relations.hpp"

namespace magkit {

// One training step's scalar record. Component losses are unweighted; the
// totals carry the configured weights. gp is the lambda-scaled penalty and
// d_adv the plain Wasserstein gap, both from the last critic update of the
// step; d_total = d_adv + gp + d_att.
struct StepLog {
  int64_t step = 0;
  double d_adv = 0, d_att = 0, gp = 0;
  double g_gan = 0, g_rec = 0, g_cls = 0, g_mre = 0;
  double g_total = 0, d_total = 0;

  // Exactly the logging contract's keys, in a fixed order.
  static const std::vector<std::string>& keys();
  std::vector<double> values() const;
  std::string to_line() const;  // step then key=value pairs
};

// Plain Adam over an explicit parameter list. Exists instead of torch::optim
// because checkpoints must round-trip save -> load -> save byte-identically,
// which needs full control of the serialized state (m, v, t in parameter order).
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, double lr, double beta1 = 0.5, double beta2 = 0.999,
       double eps = 1e-8);

  void zero_grad();
  void step();
  int64_t t() const { return t_; }

  void save(TensorStore& store, const std::string& prefix) const;
  void load(const TensorStore& store, const std::string& prefix);

 private:
  std::vector<torch::Tensor> params_, m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Editing metrics of a generator over a dataset: an overall report plus hat /
// no-hat subgroup rows. A non-empty classifier enables the accuracy and
// Frechet-distance fields (images are resized to the classifier's resolution
// when they differ). max_samples > 0 caps the consumed samples.
std::vector<EvalReport> evaluate_editor(Generator gen, Classifier classifier, const Dataset& data,
                                        const RelationMatrices& rel, int64_t max_samples = 0,
                                        int64_t batch_size = 16);

// Reads the generator out of either checkpoint flavor: a standalone generator
// file, or a full training checkpoint (generator section + stored relations).
std::pair<std::shared_ptr<GeneratorImpl>, int64_t> load_generator_checkpoint(const std::string& path);

// Owns the models, the optimizers, the data split, and the RNG streams of one
// training run. Deterministic per seed: weight init draws from the torch
// global generator seeded at construction, gradient-penalty interpolation
// draws from a dedicated torch generator, and data order / edit-target
// shuffles come from a dedicated mt19937_64, so the three streams never
// interleave.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);
  // Construction followed by checkpoint restore; the stored config must equal
  // cfg or the error lists every mismatched field.
  Trainer(const TrainConfig& cfg, const std::string& checkpoint_path);

  // n_critic critic updates then one generator update. Aborts (with a
  // diagnostic dump next to out_dir if set) on any non-finite loss.
  StepLog train_step();

  // Runs to cfg.total_steps: appends train_log.tsv every log_every steps,
  // evaluates + checkpoints every eval_every steps and at the end, appending
  // one row per eval to curves.tsv (all under cfg.out_dir).
  void train();

  // Held-out metrics: overall report plus hat / no-hat subgroup rows.
  // max_samples > 0 caps the evaluated samples; accuracy and Frechet-distance
  // fields fill only when a classifier is attached.
  std::vector<EvalReport> evaluate(int64_t max_samples = 0);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  int64_t step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  Generator& generator() { return gen_; }
  Discriminator& critic() { return critic_; }
  const RelationMatrices& relations() const { return rel_; }
  const Dataset& train_data() const { return train_; }
  const Dataset& eval_data() const { return eval_; }

 private:
  std::vector<int64_t> next_batch();
  torch::Tensor edit_batch(const torch::Tensor& images, const torch::Tensor& diffs,
                           const torch::Tensor& parts);
  void check_finite(const StepLog& log, const torch::Tensor& images, const torch::Tensor& diffs);

  TrainConfig cfg_;
  RelationMatrices rel_;
  Dataset train_, eval_;
  Generator gen_{nullptr};
  Discriminator critic_{nullptr};
  Classifier classifier_{nullptr};  // optional, for eval only
  std::unique_ptr<Adam> g_opt_, d_opt_;
  torch::Generator gp_rng_;
  std::mt19937_64 data_rng_;
  std::vector<int64_t> order_;
  size_t order_pos_ = 0;
  int64_t step_ = 0;
};

}  // namespace magkit
