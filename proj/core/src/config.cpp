#include "magkit/config.hpp"

#include <torch/torch.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace magkit {

namespace {

// Single source of truth for the field list: applies f(name, member) to every
// leaf. Keeps to_json / from_json / overrides / diff in lockstep.
template <typename Cfg, typename F>
void visit_fields(Cfg& c, F&& f) {
  f("dataset_dir", c.dataset_dir);
  f("attributes", c.attributes);
  f("synth_train_count", c.synth_train_count);
  f("synth_eval_count", c.synth_eval_count);
  f("resolution", c.resolution);
  f("num_levels", c.num_levels);
  f("g_num_layers", c.g_num_layers);
  f("g_base_channels", c.g_base_channels);
  f("g_channel_cap", c.g_channel_cap);
  f("d_conv_layers", c.d_conv_layers);
  f("d_base_channels", c.d_base_channels);
  f("d_channel_cap", c.d_channel_cap);
  f("batch_size", c.batch_size);
  f("total_steps", c.total_steps);
  f("n_critic", c.n_critic);
  f("g_lr", c.g_lr);
  f("d_lr", c.d_lr);
  f("weights.lambda1", c.weights.lambda1);
  f("weights.lambda2", c.weights.lambda2);
  f("weights.lambda3", c.weights.lambda3);
  f("weights.gp_lambda", c.weights.gp_lambda);
  f("weights.cycle_weight", c.weights.cycle_weight);
  f("seed", c.seed);
  f("use_mask_loss", c.use_mask_loss);
  f("use_mask_conditioning", c.use_mask_conditioning);
  f("use_spade", c.use_spade);
  f("use_blend", c.use_blend);
  f("out_dir", c.out_dir);
  f("eval_every", c.eval_every);
  f("log_every", c.log_every);
  f("eval_subset", c.eval_subset);
  f("classifier_path", c.classifier_path);
}

nlohmann::json::json_pointer pointer_for(const std::string& dotted) {
  std::string p = "/" + dotted;
  for (auto& ch : p)
    if (ch == '.') ch = '/';
  return nlohmann::json::json_pointer(p);
}

void parse_into(const std::string& key, const std::string& value, std::string& out) {
  (void)key;
  out = value;
}

void parse_into(const std::string& key, const std::string& value, std::vector<std::string>& out) {
  (void)key;
  out.clear();
  if (value.empty()) return;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
}

void parse_into(const std::string& key, const std::string& value, int64_t& out) {
  size_t used = 0;
  out = std::stoll(value, &used);
  TORCH_CHECK(used == value.size(), "config key '", key, "': not an integer: '", value, "'");
}

void parse_into(const std::string& key, const std::string& value, uint64_t& out) {
  size_t used = 0;
  out = std::stoull(value, &used);
  TORCH_CHECK(used == value.size(), "config key '", key, "': not an unsigned integer: '", value, "'");
}

void parse_into(const std::string& key, const std::string& value, double& out) {
  size_t used = 0;
  out = std::stod(value, &used);
  TORCH_CHECK(used == value.size(), "config key '", key, "': not a number: '", value, "'");
}

void parse_into(const std::string& key, const std::string& value, bool& out) {
  if (value == "true" || value == "1")
    out = true;
  else if (value == "false" || value == "0")
    out = false;
  else
    TORCH_CHECK(false, "config key '", key, "': not a boolean: '", value, "'");
}

}  // namespace

void TrainConfig::validate() const {
  weights.validate();
  TORCH_CHECK(!attributes.empty(), "attributes must be nonempty");
  TORCH_CHECK(synth_train_count >= 1 && synth_eval_count >= 1, "synthetic sample counts must be >= 1");
  TORCH_CHECK(resolution >= 2 && (resolution & (resolution - 1)) == 0, "resolution must be a power of two");
  TORCH_CHECK(num_levels >= 1, "num_levels must be >= 1");
  TORCH_CHECK((int64_t)1 << (num_levels - 1) <= resolution, "num_levels too deep for resolution");
  TORCH_CHECK(batch_size >= 1, "batch_size must be >= 1");
  TORCH_CHECK(total_steps >= 1, "total_steps must be >= 1");
  TORCH_CHECK(n_critic >= 1, "n_critic must be >= 1");
  // zero is allowed so the no-op-optimizer diagnostic (bit-identical weights
  // after any number of steps) stays expressible
  TORCH_CHECK(g_lr >= 0 && d_lr >= 0, "learning rates must not be negative");
  TORCH_CHECK(eval_every >= 1 && log_every >= 1, "cadences must be >= 1");
  TORCH_CHECK(eval_subset >= 0, "eval_subset must be >= 0");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  visit_fields(*this, [&](const char* name, const auto& v) { j[pointer_for(name)] = v; });
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  TrainConfig c;
  visit_fields(c, [&](const char* name, auto& v) {
    using T = std::decay_t<decltype(v)>;
    v = j.at(pointer_for(name)).template get<T>();
  });
  return c;
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  TORCH_CHECK(out.good(), "cannot write config: ", path);
  out << to_json() << "\n";
  TORCH_CHECK(out.good(), "failed writing config: ", path);
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  TORCH_CHECK(in.good(), "cannot read config: ", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void TrainConfig::apply_override(const std::string& key, const std::string& value) {
  bool found = false;
  visit_fields(*this, [&](const char* name, auto& v) {
    if (key != name) return;
    found = true;
    parse_into(key, value, v);
  });
  TORCH_CHECK(found, "unknown config key: '", key, "'");
}

std::vector<std::string> TrainConfig::diff(const TrainConfig& other) const {
  nlohmann::json a, b;
  visit_fields(*this, [&](const char* name, const auto& v) { a[pointer_for(name)] = v; });
  visit_fields(other, [&](const char* name, const auto& v) { b[pointer_for(name)] = v; });
  std::vector<std::string> out;
  visit_fields(*this, [&](const char* name, const auto&) {
    auto p = pointer_for(name);
    if (a.at(p) != b.at(p)) out.push_back(name);
  });
  return out;
}

}  // namespace magkit
