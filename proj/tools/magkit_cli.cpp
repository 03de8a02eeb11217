#include <CLI11.hpp>
#include <torch/torch.h>

#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "magkit/classifier.hpp"
#include "magkit/config.hpp"
#include "magkit/data.hpp"
#include "magkit/image_io.hpp"
#include "magkit/mask_io.hpp"
#include "magkit/masks.hpp"
#include "magkit/metrics.hpp"
#include "magkit/relations.hpp"
#include "magkit/synth.hpp"
#include "magkit/trainer.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    if (comma > start) out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

int run_synth(const std::string& out_dir, int64_t count, int64_t resolution, uint64_t seed,
              const std::string& attributes) {
  magkit::SynthSpec spec;
  spec.resolution = resolution;
  spec.seed = seed;
  if (attributes == "all")
    spec.attributes = magkit::synth_attribute_names();
  else if (!attributes.empty())
    spec.attributes = split_commas(attributes);
  spec.validate();
  magkit::emit_dataset(spec, count, out_dir);
  std::cout << "wrote " << count << " samples (" << resolution << "px, " << spec.attributes.size()
            << " attributes) to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& resume_path,
              const std::vector<std::string>& extras) {
  magkit::TrainConfig cfg;
  if (!config_path.empty()) cfg = magkit::TrainConfig::load(config_path);
  // precedence: command line beats MAGKIT_SEED beats the file
  if (const char* env = std::getenv("MAGKIT_SEED"); env && *env) cfg.apply_override("seed", env);
  for (const auto& tok : extras) {
    auto eq = tok.find('=');
    if (tok.rfind("--", 0) != 0 || eq == std::string::npos || eq <= 2)
      throw std::runtime_error("override '" + tok + "' is not of the form --key=value");
    cfg.apply_override(tok.substr(2, eq - 2), tok.substr(eq + 1));
  }
  cfg.validate();
  if (cfg.out_dir.empty()) throw std::runtime_error("train needs --out_dir=DIR (or out_dir in the config file)");

  std::unique_ptr<magkit::Trainer> trainer;
  if (resume_path.empty())
    trainer = std::make_unique<magkit::Trainer>(cfg);
  else
    trainer = std::make_unique<magkit::Trainer>(cfg, resume_path);
  std::cout << "training to " << cfg.out_dir << " (" << trainer->train_data().size() << " train / "
            << trainer->eval_data().size() << " eval samples), step " << trainer->step() << " of "
            << cfg.total_steps << "\n";
  trainer->train();
  std::cout << "finished at step " << trainer->step() << "\n";
  return 0;
}

int run_edit(const std::string& ckpt, const std::vector<std::string>& images,
             const std::vector<std::string>& masks, const std::vector<std::string>& flips,
             const std::string& out_path) {
  auto [gen_ptr, step] = magkit::load_generator_checkpoint(ckpt);
  magkit::Generator gen(gen_ptr);
  gen->eval();
  const auto& rel = gen->relations();
  const auto R = gen->config().input_resolution;
  const auto C = rel.num_attributes();
  if (masks.size() != images.size())
    throw std::runtime_error("need one --mask per --image (got " + std::to_string(masks.size()) +
                             " masks for " + std::to_string(images.size()) + " images)");

  // One column per requested flip; +Name strengthens, -Name weakens, a bare
  // name strengthens. No flips means one reconstruction column.
  std::vector<torch::Tensor> diffs;
  for (const auto& tok : flips) {
    double sign = 1.0;
    std::string name = tok;
    if (!tok.empty() && (tok[0] == '+' || tok[0] == '-')) {
      sign = tok[0] == '-' ? -1.0 : 1.0;
      name = tok.substr(1);
    }
    auto it = std::find(rel.attribute_names.begin(), rel.attribute_names.end(), name);
    if (it == rel.attribute_names.end()) {
      std::string known;
      for (const auto& n : rel.attribute_names) known += (known.empty() ? "" : ", ") + n;
      throw std::runtime_error("unknown attribute '" + name + "' (editor knows: " + known + ")");
    }
    auto d = torch::zeros({C});
    d[it - rel.attribute_names.begin()] = sign;
    diffs.push_back(d);
  }
  if (diffs.empty()) diffs.push_back(torch::zeros({C}));

  torch::NoGradGuard ng;
  std::vector<torch::Tensor> rows;
  for (size_t i = 0; i < images.size(); ++i) {
    auto x = magkit::to_unit_range(magkit::read_png(images[i]));
    if (x.size(1) != R || x.size(2) != R)
      x = torch::nn::functional::interpolate(
              x.unsqueeze(0),
              torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{R, R}).mode(torch::kBilinear).align_corners(false))
              .squeeze(0);
    auto parts = magkit::load_mask_container(masks[i]);
    if (parts.part_names != rel.part_names) {
      std::string got;
      for (const auto& n : parts.part_names) got += (got.empty() ? "" : ", ") + n;
      throw std::runtime_error(masks[i] + " holds parts {" + got + "}, which is not the editor's part list");
    }
    if (parts.probs.size(1) != R || parts.probs.size(2) != R) parts = magkit::resize_mask(parts, R, R);

    std::vector<torch::Tensor> cols{x};
    for (const auto& d : diffs) cols.push_back(gen->edit(x, d, parts.probs));
    rows.push_back(torch::cat(cols, 2));
  }
  magkit::write_png(magkit::from_unit_range(torch::cat(rows, 1)), out_path);
  std::cout << "wrote " << out_path << ": " << rows.size() << " row(s) x " << 1 + diffs.size()
            << " columns (original first), editor step " << step << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& dataset_dir, const std::string& classifier_path,
             int64_t subset, int64_t batch, const std::string& out_path) {
  auto [gen_ptr, step] = magkit::load_generator_checkpoint(ckpt);
  magkit::Generator gen(gen_ptr);
  const auto& rel = gen->relations();
  auto data = magkit::load_dataset(dataset_dir + "/images", dataset_dir + "/attributes.txt",
                                   dataset_dir + "/masks", rel.attribute_names,
                                   gen->config().input_resolution);
  if (data.part_names != rel.part_names)
    throw std::runtime_error("dataset part list does not match the editor's");

  magkit::Classifier clf{nullptr};
  if (!classifier_path.empty()) {
    clf = magkit::Classifier(magkit::ClassifierImpl::load(classifier_path));
    clf->eval();
  }
  auto reports = magkit::evaluate_editor(gen, clf, data, rel, subset, batch);
  for (size_t i = 0; i < reports.size(); ++i) {
    if (i) std::cout << "\n";
    std::cout << reports[i].to_text();
  }
  if (!out_path.empty()) {
    magkit::save_eval_report(reports, out_path);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int run_train_classifier(const std::string& dataset_dir, const std::string& out_path,
                         const std::string& attributes, int64_t resolution, int64_t base_channels,
                         int64_t conv_layers, int64_t epochs, int64_t batch, double lr, uint64_t seed,
                         int64_t train_count, int64_t holdout) {
  auto rel = magkit::load_relation_config(dataset_dir + "/relations.txt");
  auto attrs = attributes.empty() ? rel.attribute_names : split_commas(attributes);
  auto data = magkit::load_dataset(dataset_dir + "/images", dataset_dir + "/attributes.txt",
                                   dataset_dir + "/masks", attrs, resolution);
  if (data.size() < 2) throw std::runtime_error("dataset too small to split");

  auto hold = std::min<int64_t>(holdout, data.size() / 5);
  auto n_train = data.size() - hold;
  if (train_count > 0) n_train = std::min(n_train, train_count);
  std::vector<int64_t> train_idx, eval_idx;
  for (int64_t i = 0; i < n_train; ++i) train_idx.push_back(i);
  for (int64_t i = data.size() - hold; i < data.size(); ++i) eval_idx.push_back(i);

  magkit::ClassifierConfig cfg;
  cfg.resolution = resolution;
  cfg.num_attributes = (int64_t)attrs.size();
  cfg.base_channels = base_channels;
  cfg.conv_layers = conv_layers;
  magkit::Classifier clf(cfg);
  magkit::ClassifierTrainOptions opts;
  opts.epochs = epochs;
  opts.batch_size = batch;
  opts.lr = lr;
  opts.seed = seed;
  magkit::train_classifier(clf, data.images(train_idx), data.attributes(train_idx), opts);

  std::cout << "trained on " << train_idx.size() << " samples";
  if (!eval_idx.empty())
    std::cout << ", held-out accuracy "
              << magkit::classifier_accuracy(clf, data.images(eval_idx), data.attributes(eval_idx));
  std::cout << "\n";
  clf->save(out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mask-guided facial attribute editor"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "emit a synthetic face dataset with exact part masks");
  std::string synth_out, synth_attrs;
  int64_t synth_count = 1000, synth_res = 64;
  uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of samples");
  synth->add_option("--resolution", synth_res, "image side in pixels");
  synth->add_option("--seed", synth_seed, "sampler seed");
  synth->add_option("--attributes", synth_attrs, "comma list, or 'all' for the full six");

  auto* train = app.add_subcommand("train", "train an editor; any config field as --key=value");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "config file (json)")->check(CLI::ExistingFile);
  train->add_option("--resume", train_resume, "checkpoint to continue from");
  train->allow_extras();

  auto* edit = app.add_subcommand("edit", "edit images into a PNG grid, one column per flip");
  std::string edit_ckpt, edit_out = "edit.png";
  std::vector<std::string> edit_images, edit_masks, edit_flips;
  edit->add_option("--checkpoint", edit_ckpt, "editor or training checkpoint")->required();
  edit->add_option("--image", edit_images, "input PNG (repeatable)")->required();
  edit->add_option("--mask", edit_masks, "part-mask container per image (repeatable)")->required();
  edit->add_option("--flip", edit_flips, "attribute to change: Name, +Name or -Name (repeatable; none = reconstruction)");
  edit->add_option("--out", edit_out, "output grid path");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset (overall + hat/no-hat rows)");
  std::string eval_ckpt, eval_dataset, eval_classifier, eval_out;
  int64_t eval_subset = 0, eval_batch = 16;
  eval->add_option("--checkpoint", eval_ckpt, "editor or training checkpoint")->required();
  eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
  eval->add_option("--classifier", eval_classifier, "attribute classifier for accuracy and the Frechet metric");
  eval->add_option("--subset", eval_subset, "cap on evaluated samples (0 = all)");
  eval->add_option("--batch", eval_batch, "evaluation batch size");
  eval->add_option("--out", eval_out, "also write the report here");

  auto* tclf = app.add_subcommand("train-classifier", "train the held-out attribute classifier");
  std::string tclf_dataset, tclf_out, tclf_attrs;
  int64_t tclf_res = 64, tclf_base = 16, tclf_layers = 4, tclf_epochs = 20, tclf_batch = 64;
  int64_t tclf_train_count = 0, tclf_holdout = 512;
  double tclf_lr = 1e-3;
  uint64_t tclf_seed = 0;
  tclf->add_option("--dataset", tclf_dataset, "dataset directory")->required();
  tclf->add_option("--out", tclf_out, "where to write the classifier")->required();
  tclf->add_option("--attributes", tclf_attrs, "comma list (default: every attribute in the dataset)");
  tclf->add_option("--resolution", tclf_res, "classifier input side");
  tclf->add_option("--base_channels", tclf_base, "first conv width");
  tclf->add_option("--conv_layers", tclf_layers, "conv depth");
  tclf->add_option("--epochs", tclf_epochs, "training epochs");
  tclf->add_option("--batch", tclf_batch, "batch size");
  tclf->add_option("--lr", tclf_lr, "learning rate");
  tclf->add_option("--seed", tclf_seed, "shuffle/init seed");
  tclf->add_option("--train_count", tclf_train_count, "cap on training samples (0 = all)");
  tclf->add_option("--holdout", tclf_holdout, "held-out tail for the accuracy print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) return run_synth(synth_out, synth_count, synth_res, synth_seed, synth_attrs);
    if (*train) return run_train(train_config, train_resume, train->remaining());
    if (*edit) return run_edit(edit_ckpt, edit_images, edit_masks, edit_flips, edit_out);
    if (*eval) return run_eval(eval_ckpt, eval_dataset, eval_classifier, eval_subset, eval_batch, eval_out);
    if (*tclf)
      return run_train_classifier(tclf_dataset, tclf_out, tclf_attrs, tclf_res, tclf_base, tclf_layers,
                                  tclf_epochs, tclf_batch, tclf_lr, tclf_seed, tclf_train_count, tclf_holdout);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    if (auto cut = msg.find("\nException raised from"); cut != std::string::npos) msg.resize(cut);
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
