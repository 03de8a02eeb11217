#include "magkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "magkit/data.hpp"
#include "magkit/losses.hpp"
#include "magkit/masks.hpp"
#include "magkit/synth.hpp"

namespace magkit {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Keeps only the relation rows named in `wanted`, in that order.
RelationMatrices select_attributes(const RelationMatrices& rel, const std::vector<std::string>& wanted) {
  std::vector<int64_t> rows;
  for (const auto& name : wanted) {
    auto it = std::find(rel.attribute_names.begin(), rel.attribute_names.end(), name);
    TORCH_CHECK(it != rel.attribute_names.end(), "relation config has no attribute '", name, "'");
    rows.push_back(it - rel.attribute_names.begin());
  }
  auto idx = torch::tensor(rows, torch::kInt64);
  RelationMatrices out;
  out.ar_plus = rel.ar_plus.index_select(0, idx).contiguous();
  out.ar_minus = rel.ar_minus.index_select(0, idx).contiguous();
  out.attribute_names = wanted;
  out.part_names = rel.part_names;
  out.validate();
  return out;
}

void append_line(const std::string& path, const std::string& header, const std::string& line) {
  namespace fs = std::filesystem;
  bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  TORCH_CHECK(out.good(), "cannot append to ", path);
  if (fresh) out << header << '\n';
  out << line << '\n';
  TORCH_CHECK(out.good(), "failed writing ", path);
}

std::string step_tag(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld", (long long)step);
  return buf;
}

// editing_accuracy stacks kept samples in order and requests every
// single-attribute flip for one window before advancing to the next; this
// replays that walk to hand the generator each window's part masks. The
// first-image equality check pins the assumption.
class WindowedEditAdapter {
 public:
  WindowedEditAdapter(GeneratorImpl* gen, const std::vector<MreSample>* samples)
      : gen_(gen), samples_(samples), flips_per_window_((*samples)[0].att_s.size(0)) {}

  torch::Tensor operator()(const torch::Tensor& x, const torch::Tensor& d) {
    if (calls_in_window_ == flips_per_window_) {
      cursor_ += parts_.size(0);
      calls_in_window_ = 0;
    }
    if (calls_in_window_ == 0) {
      const int64_t n = x.size(0);
      TORCH_CHECK(cursor_ + n <= (int64_t)samples_->size(), "editing batch walked past the dataset");
      std::vector<torch::Tensor> stack;
      for (int64_t k = 0; k < n; ++k) stack.push_back((*samples_)[cursor_ + k].parts.probs);
      parts_ = torch::stack(stack);
      TORCH_CHECK(torch::equal(x[0], (*samples_)[cursor_].image), "editing batch order diverged from the sample list");
    }
    ++calls_in_window_;
    return gen_->edit(x, d, parts_);
  }

 private:
  GeneratorImpl* gen_;
  const std::vector<MreSample>* samples_;
  int64_t flips_per_window_;
  int64_t cursor_ = 0;
  int64_t calls_in_window_ = 0;
  torch::Tensor parts_;
};

}  // namespace

const std::vector<std::string>& StepLog::keys() {
  static const std::vector<std::string> k = {"d_adv", "d_att", "gp",      "g_gan",  "g_rec",
                                             "g_cls", "g_mre", "g_total", "d_total"};
  return k;
}

std::vector<double> StepLog::values() const {
  return {d_adv, d_att, gp, g_gan, g_rec, g_cls, g_mre, g_total, d_total};
}

std::string StepLog::to_line() const {
  std::ostringstream os;
  os.precision(10);
  os << "step=" << step;
  auto v = values();
  for (size_t i = 0; i < v.size(); ++i) os << ' ' << keys()[i] << '=' << v[i];
  return os.str();
}

Adam::Adam(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_)
    if (p.grad().defined()) p.mutable_grad().zero_();
}

void Adam::step() {
  torch::NoGradGuard ng;
  ++t_;
  const double bc1 = 1 - std::pow(beta1_, (double)t_);
  const double bc2 = 1 - std::pow(beta2_, (double)t_);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i].grad();
    if (!g.defined()) continue;
    m_[i].mul_(beta1_).add_(g, 1 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1 - beta2_);
    params_[i].add_((m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_), -lr_);
  }
}

void Adam::save(TensorStore& store, const std::string& prefix) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    store.put(prefix + "m" + std::to_string(i), m_[i]);
    store.put(prefix + "v" + std::to_string(i), v_[i]);
  }
  store.put(prefix + "t", torch::tensor(t_, torch::kInt64));
}

void Adam::load(const TensorStore& store, const std::string& prefix) {
  torch::NoGradGuard ng;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto m = store.get(prefix + "m" + std::to_string(i));
    auto v = store.get(prefix + "v" + std::to_string(i));
    TORCH_CHECK(m.sizes() == m_[i].sizes() && v.sizes() == v_[i].sizes(),
                "optimizer state shape mismatch at parameter ", i);
    m_[i].copy_(m);
    v_[i].copy_(v);
  }
  t_ = store.get(prefix + "t").item<int64_t>();
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();

  if (cfg_.dataset_dir.empty()) {
    SynthSpec spec;
    spec.resolution = cfg_.resolution;
    spec.attributes = cfg_.attributes;
    spec.seed = cfg_.seed;
    rel_ = synth_relations(spec);
    auto all = synth_generate(spec, cfg_.synth_train_count + cfg_.synth_eval_count);
    train_.attribute_names = eval_.attribute_names = cfg_.attributes;
    train_.part_names = eval_.part_names = rel_.part_names;
    eval_.samples.assign(std::make_move_iterator(all.begin() + cfg_.synth_train_count),
                         std::make_move_iterator(all.end()));
    all.resize(cfg_.synth_train_count);
    train_.samples = std::move(all);
  } else {
    rel_ = select_attributes(load_relation_config(cfg_.dataset_dir + "/relations.txt"), cfg_.attributes);
    auto full = load_dataset(cfg_.dataset_dir + "/images", cfg_.dataset_dir + "/attributes.txt",
                             cfg_.dataset_dir + "/masks", cfg_.attributes, cfg_.resolution);
    TORCH_CHECK(full.part_names == rel_.part_names, "relation parts disagree with mask parts");
    const int64_t n = full.size();
    const int64_t hold = std::max<int64_t>(1, std::min(cfg_.synth_eval_count, n / 5));
    TORCH_CHECK(n - hold >= cfg_.batch_size, "dataset too small for a train/eval split");
    train_.attribute_names = eval_.attribute_names = full.attribute_names;
    train_.part_names = eval_.part_names = full.part_names;
    eval_.samples.assign(std::make_move_iterator(full.samples.end() - hold),
                         std::make_move_iterator(full.samples.end()));
    full.samples.resize(n - hold);
    train_.samples = std::move(full.samples);
  }
  TORCH_CHECK(train_.size() >= cfg_.batch_size, "training split smaller than one batch");

  torch::manual_seed(cfg_.seed);
  GeneratorConfig gcfg;
  gcfg.num_layers = cfg_.g_num_layers;
  gcfg.base_channels = cfg_.g_base_channels;
  gcfg.channel_cap = cfg_.g_channel_cap;
  gcfg.input_resolution = cfg_.resolution;
  gcfg.num_attributes = (int64_t)cfg_.attributes.size();
  gcfg.use_mask_conditioning = cfg_.use_mask_conditioning;
  gcfg.use_spade = cfg_.use_spade;
  gcfg.use_blend = cfg_.use_blend;
  gen_ = Generator(gcfg, rel_);

  DiscriminatorConfig dcfg;
  dcfg.num_levels = cfg_.num_levels;
  dcfg.base_resolution = cfg_.resolution >> (cfg_.num_levels - 1);
  dcfg.conv_layers = cfg_.d_conv_layers;
  dcfg.num_attributes = (int64_t)cfg_.attributes.size();
  dcfg.base_channels = cfg_.d_base_channels;
  dcfg.channel_cap = cfg_.d_channel_cap;
  critic_ = Discriminator(dcfg);

  if (!cfg_.classifier_path.empty()) {
    classifier_ = Classifier(ClassifierImpl::load(cfg_.classifier_path));
    classifier_->eval();
  }

  g_opt_ = std::make_unique<Adam>(gen_->parameters(), cfg_.g_lr);
  d_opt_ = std::make_unique<Adam>(critic_->parameters(), cfg_.d_lr);

  gp_rng_ = at::detail::createCPUGenerator(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
  data_rng_.seed(cfg_.seed * 0x9e3779b97f4a7c15ULL + 1);
  order_ = train_.all_indices();
  order_pos_ = order_.size();  // forces a shuffle before the first batch
}

Trainer::Trainer(const TrainConfig& cfg, const std::string& checkpoint_path) : Trainer(cfg) {
  load_checkpoint(checkpoint_path);
}

std::vector<int64_t> Trainer::next_batch() {
  const size_t b = (size_t)cfg_.batch_size;
  TORCH_CHECK(order_.size() >= b, "batch_size exceeds the training split");
  if (order_pos_ + b > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), data_rng_);
    order_pos_ = 0;
  }
  std::vector<int64_t> idx(order_.begin() + order_pos_, order_.begin() + order_pos_ + b);
  order_pos_ += b;
  return idx;
}

torch::Tensor Trainer::edit_batch(const torch::Tensor& images, const torch::Tensor& diffs,
                                  const torch::Tensor& parts) {
  return gen_->edit(images, diffs, parts);
}

StepLog Trainer::train_step() {
  gen_->train();
  critic_->train();
  const auto& w = cfg_.weights;
  const auto& dcfg = critic_->config();
  const auto P = dcfg.num_levels;

  StepLog log;
  log.step = step_ + 1;

  for (int64_t k = 0; k < cfg_.n_critic; ++k) {
    auto idx = next_batch();
    auto x = train_.images(idx);
    auto att_s = train_.attributes(idx);
    auto parts = train_.parts(idx);
    auto d = sample_edit_targets(att_s, EditMode::kTrainShuffle, 0, data_rng_);
    torch::Tensor x_fake;
    {
      torch::NoGradGuard ng;
      x_fake = edit_batch(x, d, parts);
    }
    auto real_pyr = make_pyramid(x, dcfg);
    auto fake_pyr = make_pyramid(x_fake, dcfg);
    std::vector<torch::Tensor> per_level;
    double adv_sum = 0, gp_sum = 0, att_sum = 0;
    for (int64_t i = 0; i < P; ++i) {
      // the adversarial loss already runs the critic on the real batch; keep
      // those attribute logits instead of a second forward
      torch::Tensor real_logits;
      auto critic_fn = [&, i](const torch::Tensor& im) {
        auto out = critic_->critic_forward(im, i);
        if (im.is_same(real_pyr[i])) real_logits = out.attr_logits;
        return out.adv_map;
      };
      DAdvParts pieces;
      auto adv = loss_d_adv(critic_fn, real_pyr[i], fake_pyr[i], w.gp_lambda, gp_rng_, &pieces);
      TORCH_CHECK(real_logits.defined(), "adversarial loss never scored the real batch");
      auto att = loss_d_att(real_logits, att_s);
      per_level.push_back(att + adv);
      adv_sum += pieces.wasserstein.item<double>();
      gp_sum += pieces.penalty.item<double>();
      att_sum += att.item<double>();
    }
    auto d_loss = total_d(per_level);
    log.d_adv = adv_sum / (double)P;
    log.gp = gp_sum / (double)P;
    log.d_att = att_sum / (double)P;
    log.d_total = d_loss.item<double>();
    d_opt_->zero_grad();
    g_opt_->zero_grad();  // the critic graph does not reach G, but stay tidy
    d_loss.backward();
    d_opt_->step();
  }

  auto idx = next_batch();
  auto x = train_.images(idx);
  auto att_s = train_.attributes(idx);
  auto parts = train_.parts(idx);
  auto d = sample_edit_targets(att_s, EditMode::kTrainShuffle, 0, data_rng_);
  auto att_t = att_s + d;

  auto x_hat = edit_batch(x, d, parts);
  auto fake_pyr = make_pyramid(x_hat, dcfg);
  GParts g;
  std::vector<torch::Tensor> score_maps;
  torch::Tensor cls_sum;
  for (int64_t i = 0; i < P; ++i) {
    auto out = critic_->critic_forward(fake_pyr[i], i);
    score_maps.push_back(out.adv_map);
    auto cls_i = loss_g_cls(out.attr_logits, att_t);
    cls_sum = cls_sum.defined() ? cls_sum + cls_i : cls_i;
  }
  g.gan = loss_g_gan(score_maps);
  g.cls = cls_sum / (double)P;
  auto x_rec = edit_batch(x, torch::zeros_like(d), parts);
  g.rec = loss_g_rec(x, x_rec);
  if (w.cycle_weight < 1.0) {
    auto x_cyc = edit_batch(x_hat, -d, parts);
    g.cycle = loss_g_cycle(x, x_cyc);
  }
  if (cfg_.use_mask_loss) {
    auto preserved = preserved_mask_batch(d, parts, rel_);
    g.mre = loss_g_mre(x, x_hat, preserved);
  } else {
    g.mre = torch::zeros({}, x.options());
  }
  auto g_loss = total_g(g, w);
  log.g_gan = g.gan.item<double>();
  log.g_rec = g.rec.item<double>();
  log.g_cls = g.cls.item<double>();
  log.g_mre = g.mre.item<double>();
  log.g_total = g_loss.item<double>();
  g_opt_->zero_grad();
  d_opt_->zero_grad();
  g_loss.backward();
  g_opt_->step();

  check_finite(log, x, d);
  step_ = log.step;
  return log;
}

void Trainer::check_finite(const StepLog& log, const torch::Tensor& images, const torch::Tensor& diffs) {
  bool ok = true;
  for (double v : log.values()) ok = ok && std::isfinite(v);
  if (ok) return;
  std::string note = "no diagnostic dump (out_dir unset)";
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(cfg_.out_dir);
    TensorStore dump;
    dump.put_string("log", log.to_line());
    dump.put("images", images);
    dump.put("att_diff", diffs);
    auto path = cfg_.out_dir + "/nonfinite_step_" + step_tag(log.step) + ".diag";
    dump.save(path);
    note = "diagnostic dump at " + path;
  }
  TORCH_CHECK(false, "non-finite loss at step ", log.step, " (", log.to_line(), "); ", note);
}

namespace {

// subgroup: -1 everyone, 1 hat wearers, 0 the rest; max_samples > 0 caps the
// scanned prefix so subgroup rows stay consistent with the overall row.
std::vector<MreSample> gather_samples(const Dataset& data, int64_t max_samples, int64_t subgroup) {
  int64_t n = data.size();
  if (max_samples > 0) n = std::min(n, max_samples);
  std::vector<MreSample> out;
  for (int64_t i = 0; i < n; ++i) {
    if (subgroup >= 0 && data.samples[(size_t)i].has_hat != (subgroup == 1)) continue;
    MreSample s;
    s.image = data.images({i}).squeeze(0);
    s.att_s = data.attributes({i}).squeeze(0);
    s.parts = PartMaskStack{data.parts({i}).squeeze(0), data.part_names};
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<EvalReport> evaluate_editor(Generator gen, Classifier classifier, const Dataset& data,
                                        const RelationMatrices& rel, int64_t max_samples,
                                        int64_t batch_size) {
  gen->eval();
  if (!classifier.is_empty()) classifier->eval();

  // The classifier may live at a different resolution than the run (the
  // pyramid comparison reuses one embedder across resolutions).
  auto at_classifier_res = [&](const torch::Tensor& images) {
    const auto r = classifier->config().resolution;
    if (images.size(2) == r && images.size(3) == r) return images;
    return torch::nn::functional::interpolate(
        images,
        torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{r, r}).mode(torch::kBilinear).align_corners(false));
  };
  auto classify = [&](const torch::Tensor& images) { return classifier->forward(at_classifier_res(images)); };

  const auto C = rel.num_attributes();

  auto report_for = [&](const std::string& name, const std::vector<MreSample>& samples) {
    EvalReport r;
    r.subgroup = name;
    r.attribute_names = rel.attribute_names;
    if (samples.empty()) return r;

    // The metric walks samples in order, all flips of one image before the
    // next; tensor identity recovers which sample (and so which masks) the
    // editor is looking at.
    size_t cursor = 0;
    auto single_edit = [&](const torch::Tensor& img, const torch::Tensor& diff) {
      if (!img.is_same(samples[cursor].image)) ++cursor;
      TORCH_CHECK(cursor < samples.size() && img.is_same(samples[cursor].image),
                  "editor called out of sample order");
      return gen->edit(img, diff, samples[cursor].parts.probs);
    };
    r.mre = mre_metric(single_edit, samples, rel);

    {
      torch::NoGradGuard ng;
      double psnr_sum = 0, ssim_sum = 0;
      for (size_t start = 0; start < samples.size(); start += (size_t)batch_size) {
        const auto n = std::min(samples.size() - start, (size_t)batch_size);
        std::vector<torch::Tensor> imgs, msks;
        for (size_t k = 0; k < n; ++k) {
          imgs.push_back(samples[start + k].image);
          msks.push_back(samples[start + k].parts.probs);
        }
        auto x = torch::stack(imgs);
        auto zeros = torch::zeros({(int64_t)n, C}, x.options());
        auto x_rec = gen->edit(x, zeros, torch::stack(msks));
        for (size_t k = 0; k < n; ++k) {
          psnr_sum += psnr(x[(int64_t)k], x_rec[(int64_t)k], 2.0);
          ssim_sum += ssim_for_range(x[(int64_t)k], x_rec[(int64_t)k], 2.0);
        }
      }
      r.psnr_mean = psnr_sum / (double)samples.size();
      r.ssim_mean = ssim_sum / (double)samples.size();
    }

    if (!classifier.is_empty()) {
      WindowedEditAdapter adapter(gen.get(), &samples);
      auto acc = editing_accuracy([&](const torch::Tensor& x, const torch::Tensor& d) { return adapter(x, d); },
                                  classify, samples, batch_size);
      r.per_attribute_accuracy = acc.per_attribute;
      r.avg_accuracy = acc.average;

      // Frechet distance between clean and edited populations, one flip per
      // sample cycling through the attributes.
      torch::NoGradGuard ng;
      std::vector<torch::Tensor> real_f, fake_f;
      for (size_t start = 0; start < samples.size(); start += (size_t)batch_size) {
        const auto n = std::min(samples.size() - start, (size_t)batch_size);
        std::vector<torch::Tensor> imgs, msks, atts;
        for (size_t k = 0; k < n; ++k) {
          imgs.push_back(samples[start + k].image);
          msks.push_back(samples[start + k].parts.probs);
          atts.push_back(samples[start + k].att_s);
        }
        auto x = torch::stack(imgs);
        auto att_s = torch::stack(atts);
        auto diff = torch::zeros({(int64_t)n, C}, x.options());
        for (size_t k = 0; k < n; ++k) {
          const int64_t i = (int64_t)(start + k) % C;
          diff[(int64_t)k][i] = 1 - 2 * att_s[(int64_t)k][i];
        }
        auto edited = gen->edit(x, diff, torch::stack(msks));
        real_f.push_back(classifier->features(at_classifier_res(x)));
        fake_f.push_back(classifier->features(at_classifier_res(edited)));
      }
      if (samples.size() >= 2) {
        r.fid = fid(torch::cat(real_f), torch::cat(fake_f));
        r.fid_embedder = "attribute-classifier-features";
      }
    }
    return r;
  };

  std::vector<EvalReport> reports;
  reports.push_back(report_for("overall", gather_samples(data, max_samples, -1)));
  auto hat = gather_samples(data, max_samples, 1);
  auto no_hat = gather_samples(data, max_samples, 0);
  if (!hat.empty()) reports.push_back(report_for("hat", hat));
  if (!no_hat.empty()) reports.push_back(report_for("no_hat", no_hat));
  return reports;
}

std::pair<std::shared_ptr<GeneratorImpl>, int64_t> load_generator_checkpoint(const std::string& path) {
  auto store = TensorStore::load(path);
  if (!store.has_string("data_rng")) return GeneratorImpl::load(path);
  // training checkpoint: rebuild the generator shape from the run config
  auto cfg = TrainConfig::from_json(store.get_string("config"));
  auto rel = parse_relation_config(store.get_string("relations"));
  GeneratorConfig gcfg;
  gcfg.num_layers = cfg.g_num_layers;
  gcfg.base_channels = cfg.g_base_channels;
  gcfg.channel_cap = cfg.g_channel_cap;
  gcfg.input_resolution = cfg.resolution;
  gcfg.num_attributes = (int64_t)cfg.attributes.size();
  gcfg.use_mask_conditioning = cfg.use_mask_conditioning;
  gcfg.use_spade = cfg.use_spade;
  gcfg.use_blend = cfg.use_blend;
  auto gen = std::make_shared<GeneratorImpl>(gcfg, rel);
  store.load_module("generator.", *gen);
  return {gen, store.get("step").item<int64_t>()};
}

std::vector<EvalReport> Trainer::evaluate(int64_t max_samples) {
  critic_->eval();
  return evaluate_editor(gen_, classifier_, eval_, rel_, max_samples, cfg_.batch_size);
}

void Trainer::save_checkpoint(const std::string& path) const {
  TensorStore store;
  store.put_string("config", cfg_.to_json());
  store.put_string("relations", serialize_relation_config(rel_));
  store.put("step", torch::tensor(step_, torch::kInt64));
  {
    std::ostringstream os;
    os << data_rng_;
    store.put_string("data_rng", os.str());
  }
  store.put("gp_rng", gp_rng_.get_state());
  store.put("order", torch::tensor(order_, torch::kInt64));
  store.put("order_pos", torch::tensor((int64_t)order_pos_, torch::kInt64));
  store.put_module("generator.", *gen_);
  store.put_module("critic.", *critic_);
  g_opt_->save(store, "opt_g.");
  d_opt_->save(store, "opt_d.");
  store.save(path);
}

void Trainer::load_checkpoint(const std::string& path) {
  auto store = TensorStore::load(path);
  auto stored = TrainConfig::from_json(store.get_string("config"));
  // Run plumbing may change on resume (extend the horizon, new output dir);
  // anything touching model, optimizer, data stream or loss shape may not.
  static const std::vector<std::string> resumable = {"total_steps", "out_dir",    "eval_every",
                                                     "log_every",   "eval_subset", "classifier_path"};
  auto mismatched = cfg_.diff(stored);
  std::erase_if(mismatched, [](const std::string& f) {
    return std::find(resumable.begin(), resumable.end(), f) != resumable.end();
  });
  TORCH_CHECK(mismatched.empty(), "checkpoint config mismatch in: ", join(mismatched, ", "));
  step_ = store.get("step").item<int64_t>();
  {
    std::istringstream is(store.get_string("data_rng"));
    is >> data_rng_;
    TORCH_CHECK(!is.fail(), "bad data rng state in checkpoint");
  }
  gp_rng_.set_state(store.get("gp_rng"));
  auto order = store.get("order");
  order_.assign(order.data_ptr<int64_t>(), order.data_ptr<int64_t>() + order.numel());
  order_pos_ = (size_t)store.get("order_pos").item<int64_t>();
  store.load_module("generator.", *gen_);
  store.load_module("critic.", *critic_);
  g_opt_->load(store, "opt_g.");
  d_opt_->load(store, "opt_d.");
}

void Trainer::train() {
  TORCH_CHECK(!cfg_.out_dir.empty(), "train() needs out_dir");
  namespace fs = std::filesystem;
  fs::create_directories(cfg_.out_dir);
  cfg_.save(cfg_.out_dir + "/config.json");

  const std::string log_path = cfg_.out_dir + "/train_log.tsv";
  const std::string curve_path = cfg_.out_dir + "/curves.tsv";
  std::string log_header = "step";
  for (const auto& k : StepLog::keys()) log_header += "\t" + k;
  std::string curve_header = "step\tsubgroup\tMRE\tPSNR\tSSIM\tAvg_Acc";
  for (const auto& a : cfg_.attributes) curve_header += "\tAcc_" + a;
  curve_header += "\tFID\tFID_embedder";

  while (step_ < cfg_.total_steps) {
    auto log = train_step();
    if (log.step == 1 || log.step % cfg_.log_every == 0 || log.step == cfg_.total_steps) {
      std::ostringstream os;
      os.precision(10);
      os << log.step;
      for (double v : log.values()) os << '\t' << v;
      append_line(log_path, log_header, os.str());
    }
    if (log.step % cfg_.eval_every == 0 || log.step == cfg_.total_steps) {
      auto reports = evaluate(cfg_.eval_subset);
      const auto& r = reports.front();
      std::ostringstream os;
      os.precision(10);
      os << log.step << '\t' << r.subgroup << '\t' << r.mre << '\t' << r.psnr_mean << '\t' << r.ssim_mean
         << '\t' << r.avg_accuracy;
      for (size_t i = 0; i < cfg_.attributes.size(); ++i)
        os << '\t' << (i < r.per_attribute_accuracy.size() ? r.per_attribute_accuracy[i] : 0.0);
      os << '\t' << (r.fid ? std::to_string(*r.fid) : std::string("-"));
      os << '\t' << (r.fid ? r.fid_embedder : std::string("-"));
      append_line(curve_path, curve_header, os.str());
      save_eval_report(reports, cfg_.out_dir + "/eval_step_" + step_tag(log.step) + ".txt");
      save_checkpoint(cfg_.out_dir + "/step_" + step_tag(log.step) + ".ckpt");
      save_checkpoint(cfg_.out_dir + "/latest.ckpt");
    }
  }
}

}  // namespace magkit
