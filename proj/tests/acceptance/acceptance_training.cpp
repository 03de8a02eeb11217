// Long-horizon acceptance: trains editor variants on the synthetic dataset and
// checks the mask-guidance ablation, zero-edit reconstruction quality, and the
// critic-pyramid comparison. One pass/fail line per check.
//
// Finished runs are cached under ./acceptance_work (override with
// MAGKIT_ACCEPT_WORK); an interrupted run resumes from its latest checkpoint,
// and a run dir whose stored config no longer matches is restarted. Delete the
// work dir to retrain everything.

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "magkit/classifier.hpp"
#include "magkit/config.hpp"
#include "magkit/data.hpp"
#include "magkit/metrics.hpp"
#include "magkit/relations.hpp"
#include "magkit/synth.hpp"
#include "magkit/trainer.hpp"

using namespace magkit;
namespace fs = std::filesystem;

namespace {

#define EXPECT(cond, ...)                 \
  do {                                    \
    if (!(cond)) return fmt(__VA_ARGS__); \
  } while (0)

template <typename... Args>
std::string fmt(Args&&... args) {
  std::ostringstream os;
  os.precision(4);
  (os << ... << args);
  return os.str();
}

// Torch exception text carries a multi-line C++ backtrace; keep the message.
std::string trim_torch(const std::string& what) {
  std::string msg = what;
  if (auto cut = msg.find("\nException raised from"); cut != std::string::npos) msg.resize(cut);
  return msg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path work_root() {
  const char* env = std::getenv("MAGKIT_ACCEPT_WORK");
  auto root = fs::absolute(env && *env ? fs::path(env) : fs::path("acceptance_work"));
  fs::create_directories(root);
  return root;
}

constexpr int64_t kAblationSteps = 10000;
constexpr int64_t kPyramidSteps = 5000;

// Ablation variants share every knob except the mask-guidance switches:
// the guided variant turns on the masked-reconstruction term, mask
// conditioning, and spatial denormalization; the uniform variant runs with
// spatially uniform conditioning and no mask terms. Blending stays off in
// both so the later reconstruction check measures the generator, not the
// compositing shortcut.
TrainConfig ablation_config(bool guided, const std::string& classifier_path) {
  TrainConfig cfg;
  cfg.attributes = synth_attribute_names();
  cfg.synth_train_count = 20000;
  cfg.synth_eval_count = 512;
  cfg.resolution = 64;
  cfg.num_levels = 1;
  cfg.g_num_layers = 6;
  cfg.g_base_channels = 8;
  cfg.g_channel_cap = 64;
  cfg.d_conv_layers = 6;
  cfg.d_base_channels = 8;
  cfg.d_channel_cap = 64;
  cfg.batch_size = 16;
  cfg.total_steps = kAblationSteps;
  cfg.n_critic = 3;
  cfg.seed = 101;
  cfg.eval_every = 2000;
  cfg.log_every = 100;
  cfg.eval_subset = 128;
  cfg.classifier_path = classifier_path;
  cfg.use_mask_loss = guided;
  cfg.use_mask_conditioning = guided;
  cfg.use_spade = guided;
  cfg.use_blend = false;
  cfg.weights.lambda3 = guided ? 200 : 0;
  return cfg;
}

// The pyramid pair differs only in critic depth: one critic at the output
// resolution versus two levels whose base sits one octave below it.
TrainConfig pyramid_config(int64_t levels, const std::string& classifier_path) {
  TrainConfig cfg;
  cfg.attributes = synth_attribute_names();
  cfg.synth_train_count = 8000;
  cfg.synth_eval_count = 512;
  cfg.resolution = 128;
  cfg.num_levels = levels;
  cfg.g_num_layers = 6;
  cfg.g_base_channels = 4;
  cfg.g_channel_cap = 32;
  cfg.d_conv_layers = 6;
  cfg.d_base_channels = 4;
  cfg.d_channel_cap = 32;
  cfg.batch_size = 8;
  cfg.total_steps = kPyramidSteps;
  cfg.n_critic = 3;
  cfg.seed = 202;
  cfg.eval_every = 1000;
  cfg.log_every = 100;
  cfg.eval_subset = 64;
  cfg.classifier_path = classifier_path;
  return cfg;
}

Dataset synth_dataset(uint64_t seed, int64_t n) {
  SynthSpec spec;
  spec.resolution = 64;
  spec.attributes = synth_attribute_names();
  spec.seed = seed;
  Dataset ds;
  ds.samples = synth_generate(spec, n);
  ds.attribute_names = spec.attributes;
  ds.part_names = synth_relations(spec).part_names;
  return ds;
}

// Attribute judge for every run: trained once on its own synthetic stream,
// scored on a second independent stream of clean samples, cached on disk.
struct HeldOutClassifier {
  std::string path;
  double holdout_acc = 0;
};

const HeldOutClassifier& ensure_classifier() {
  static std::optional<HeldOutClassifier> memo;
  if (memo) return *memo;
  auto path = work_root() / "classifier64.bin";
  if (!fs::exists(path)) {
    std::cerr << "training the held-out classifier (6000 samples, 8 epochs)\n";
    auto ds = synth_dataset(777, 6000);
    auto idx = ds.all_indices();
    ClassifierConfig ccfg;
    ccfg.resolution = 64;
    ccfg.num_attributes = ds.num_attributes();
    ccfg.base_channels = 16;
    ccfg.conv_layers = 4;
    Classifier clf(ccfg);
    ClassifierTrainOptions opts;
    opts.epochs = 8;
    opts.batch_size = 64;
    opts.lr = 1e-3;
    opts.seed = 5;
    train_classifier(clf, ds.images(idx), ds.attributes(idx), opts);
    clf->save(path.string());
  }
  Classifier clf(ClassifierImpl::load(path.string()));
  auto holdout = synth_dataset(888, 512);
  auto idx = holdout.all_indices();
  double acc = classifier_accuracy(clf, holdout.images(idx), holdout.attributes(idx));
  std::cerr << "classifier holdout accuracy " << acc << " on 512 clean samples\n";
  memo = HeldOutClassifier{path.string(), acc};
  return *memo;
}

struct RunResult {
  EvalReport overall;
  int64_t final_step = 0;
};

std::string first_block(const std::string& text) {
  auto cut = text.find("\n\n");
  return cut == std::string::npos ? text : text.substr(0, cut);
}

int64_t last_curve_step(const std::string& curve_path) {
  std::ifstream in(curve_path);
  std::string line, last;
  std::getline(in, line);
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return last.empty() ? 0 : std::stoll(last);
}

// Trains cfg under <work>/<name>, or returns the cached final report if the
// run already finished with this exact config. Partial runs resume from their
// latest checkpoint; a config change restarts the directory.
RunResult run_editor(TrainConfig cfg, const std::string& name) {
  auto dir = work_root() / name;
  cfg.out_dir = dir.string();
  auto cfg_path = dir / "config.json";
  auto report_path = dir / "final_report.txt";

  if (fs::exists(cfg_path)) {
    bool same = false;
    try {
      same = TrainConfig::load(cfg_path.string()).diff(cfg).empty();
    } catch (const std::exception&) {
    }
    if (!same) {
      std::cerr << "run " << name << " has a stale config, restarting\n";
      fs::remove_all(dir);
    }
  }
  if (fs::exists(report_path)) {
    RunResult r;
    r.overall = EvalReport::from_text(first_block(slurp(report_path.string())));
    r.final_step = last_curve_step((dir / "curves.tsv").string());
    std::cerr << "run " << name << " cached at step " << r.final_step << "\n";
    return r;
  }

  std::unique_ptr<Trainer> trainer;
  auto ckpt = dir / "latest.ckpt";
  if (fs::exists(ckpt)) {
    try {
      trainer = std::make_unique<Trainer>(cfg, ckpt.string());
      std::cerr << "run " << name << " resumes from step " << trainer->step() << "\n";
    } catch (const std::exception& e) {
      std::cerr << "run " << name << " checkpoint unusable (" << trim_torch(e.what()) << "), restarting\n";
      fs::remove_all(dir);
    }
  }
  if (!trainer) trainer = std::make_unique<Trainer>(cfg);
  std::cerr << "run " << name << ": step " << trainer->step() << " -> " << cfg.total_steps << " at "
            << cfg.resolution << "px, logs under " << dir << "\n";
  trainer->train();
  auto reports = trainer->evaluate(0);
  save_eval_report(reports, report_path.string());
  return {reports.front(), trainer->step()};
}

// Every logged loss value in a finished run must be finite.
std::string scan_log_finite(const std::string& log_path, int64_t* rows_out) {
  std::ifstream in(log_path);
  if (!in.good()) return fmt("missing train log ", log_path);
  std::string line;
  std::getline(in, line);
  int64_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) {
      double v = std::stod(field);
      if (!std::isfinite(v)) return fmt("non-finite value in ", log_path, " row: ", line);
    }
    ++rows;
  }
  *rows_out = rows;
  return "";
}

// step -> overall accuracy rows of a run's curve file. Keyed by step so a
// resumed run's replayed eval points collapse to their last occurrence.
std::map<int64_t, double> curve_accuracy(const std::string& curve_path) {
  std::map<int64_t, double> out;
  std::ifstream in(curve_path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> cols;
    for (std::string f; std::getline(ls, f, '\t');) cols.push_back(f);
    if (cols.size() > 5) out[std::stoll(cols[0])] = std::stod(cols[5]);
  }
  return out;
}

// 6. Mask guidance must at least halve the masked reconstruction error while
// keeping edit accuracy both above 0.80 and within 5 points of the uniform
// variant, judged by an independently trained classifier that itself scores
// at least 0.95 on clean synthetic data.
std::string check_ablation(std::string& detail) {
  const auto& clf = ensure_classifier();
  EXPECT(clf.holdout_acc >= 0.95, "held-out classifier reached only ", clf.holdout_acc,
         " on clean synthetic data");

  auto uniform = run_editor(ablation_config(false, clf.path), "variant_uniform");
  auto guided = run_editor(ablation_config(true, clf.path), "variant_guided");
  EXPECT(uniform.final_step == kAblationSteps && guided.final_step == kAblationSteps,
         "runs ended at steps ", uniform.final_step, " / ", guided.final_step, ", wanted ",
         kAblationSteps);

  double mre_bar = 0.5 * uniform.overall.mre;
  double acc_bar = std::max(0.80, uniform.overall.avg_accuracy - 0.05);
  detail = fmt("MRE ", uniform.overall.mre, " -> ", guided.overall.mre, " (bar ", mre_bar,
               "); accuracy ", uniform.overall.avg_accuracy, " -> ", guided.overall.avg_accuracy,
               " (bar ", acc_bar, "); classifier holdout ", clf.holdout_acc);
  EXPECT(guided.overall.mre <= mre_bar, "guided MRE ", guided.overall.mre,
         " not half of uniform MRE ", uniform.overall.mre);
  EXPECT(guided.overall.avg_accuracy >= acc_bar, "guided accuracy ", guided.overall.avg_accuracy,
         " below bar ", acc_bar, " (uniform ", uniform.overall.avg_accuracy, ")");
  return "";
}

// 7. After the guided run, a zero-diff edit must reconstruct held-out inputs
// at 25 dB mean or better.
std::string check_reconstruction(std::string& detail) {
  const auto& clf = ensure_classifier();
  auto guided = run_editor(ablation_config(true, clf.path), "variant_guided");
  detail = fmt("zero-edit PSNR ", guided.overall.psnr_mean, " dB, SSIM ", guided.overall.ssim_mean,
               " on 512 held-out samples");
  EXPECT(guided.overall.psnr_mean >= 25.0, "zero-edit PSNR ", guided.overall.psnr_mean,
         " below 25 dB");
  return "";
}

// 8. The two-level critic run must finish its 5000 steps with every logged
// loss finite and end within 2 accuracy points of (or above) the single-level
// run; the paired accuracy curve lands in level_accuracy_pair.tsv.
std::string check_pyramid(std::string& detail) {
  const auto& clf = ensure_classifier();
  auto one = run_editor(pyramid_config(1, clf.path), "levels_one");
  auto two = run_editor(pyramid_config(2, clf.path), "levels_two");
  EXPECT(one.final_step == kPyramidSteps && two.final_step == kPyramidSteps,
         "runs ended at steps ", one.final_step, " / ", two.final_step, ", wanted ", kPyramidSteps);

  auto work = work_root();
  for (const char* name : {"levels_one", "levels_two"}) {
    int64_t rows = 0;
    auto err = scan_log_finite((work / name / "train_log.tsv").string(), &rows);
    if (!err.empty()) return err;
    EXPECT(rows >= kPyramidSteps / 100, "suspiciously short train log for ", name, ": ", rows,
           " rows");
  }

  auto acc_one = curve_accuracy((work / "levels_one" / "curves.tsv").string());
  auto acc_two = curve_accuracy((work / "levels_two" / "curves.tsv").string());
  EXPECT(!acc_one.empty() && acc_one.size() == acc_two.size() &&
             acc_one.rbegin()->first == kPyramidSteps && acc_two.rbegin()->first == kPyramidSteps,
         "curve files disagree: ", acc_one.size(), " vs ", acc_two.size(), " eval points");
  std::ofstream pair((work / "level_accuracy_pair.tsv").string());
  pair << "step\tsingle_level\ttwo_level\n";
  pair.precision(10);
  for (const auto& [step, acc] : acc_one) pair << step << '\t' << acc << '\t' << acc_two.at(step) << '\n';
  pair.close();

  detail = fmt(kPyramidSteps, " steps each, all logged losses finite; final accuracy ",
               one.overall.avg_accuracy, " (one level) vs ", two.overall.avg_accuracy,
               " (two levels); paired curve in level_accuracy_pair.tsv");
  EXPECT(two.overall.avg_accuracy >= one.overall.avg_accuracy - 0.02, "two-level accuracy ",
         two.overall.avg_accuracy, " more than 2 points below single-level ",
         one.overall.avg_accuracy);
  return "";
}

}  // namespace

int main() {
  torch::set_num_threads(1);
  struct Check {
    const char* name;
    std::function<std::string(std::string&)> run;
  };
  const std::vector<Check> checks = {
      {"mask-guidance-ablation", check_ablation},
      {"zero-edit-reconstruction", check_reconstruction},
      {"critic-pyramid-depth", check_pyramid},
  };

  int failures = 0;
  for (const auto& c : checks) {
    auto start = std::chrono::steady_clock::now();
    std::string detail;
    std::string err;
    try {
      err = c.run(detail);
    } catch (const std::exception& e) {
      err = fmt("exception: ", trim_torch(e.what()));
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (err.empty()) {
      std::printf("[PASS] %s: %s (%.2fs)\n", c.name, detail.c_str(), secs);
    } else {
      std::printf("[FAIL] %s: %s (%.2fs)\n", c.name, err.c_str(), secs);
      ++failures;
    }
    std::fflush(stdout);
  }
  return failures;
}
