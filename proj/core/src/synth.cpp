#include "magkit/synth.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <random>

#include "magkit/image_io.hpp"
#include "magkit/mask_io.hpp"
#include "magkit/masks.hpp"
#include "magkit/metrics.hpp"

namespace magkit {
namespace {

constexpr double kAaPixels = 1.5;  // anti-alias feather width

struct Rgb {
  double r, g, b;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Rgb jitter(std::mt19937_64& rng, Rgb c, double amt) {
  auto clip = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  return {clip(c.r + uniform(rng, -amt, amt)), clip(c.g + uniform(rng, -amt, amt)),
          clip(c.b + uniform(rng, -amt, amt))};
}

// pixel-center coordinate grids in [0, 1]
std::pair<torch::Tensor, torch::Tensor> grids(int64_t res) {
  auto line = (torch::arange(res, torch::kFloat32) + 0.5f) / (float)res;
  return {line.view({1, res}), line.view({res, 1})};
}

torch::Tensor feather(const torch::Tensor& signed_dist_px) {
  return (signed_dist_px / kAaPixels + 0.5).clamp(0, 1);
}

torch::Tensor ellipse_alpha(const torch::Tensor& xs, const torch::Tensor& ys, double cx, double cy,
                            double rx, double ry, int64_t res) {
  auto dx = (xs - cx) / rx, dy = (ys - cy) / ry;
  auto d = (dx * dx + dy * dy).sqrt();
  return feather((1 - d) * std::min(rx, ry) * (double)res);
}

torch::Tensor rect_alpha(const torch::Tensor& xs, const torch::Tensor& ys, double x0, double x1,
                         double y0, double y1, int64_t res) {
  auto sx = torch::min(xs - x0, x1 - xs);
  auto sy = torch::min(ys - y0, y1 - ys);
  return feather(torch::min(sx, sy) * (double)res);
}

torch::Tensor ring_alpha(const torch::Tensor& xs, const torch::Tensor& ys, double cx, double cy,
                         double radius, double width, int64_t res) {
  auto dx = xs - cx, dy = ys - cy;
  auto d = (dx * dx + dy * dy).sqrt();
  return feather((width / 2 - (d - radius).abs()) * (double)res);
}

torch::Tensor paint(const std::vector<torch::Tensor>& parts, const std::vector<Rgb>& colors) {
  auto r = torch::zeros_like(parts[0]);
  auto g = torch::zeros_like(parts[0]);
  auto b = torch::zeros_like(parts[0]);
  for (size_t p = 0; p < parts.size(); ++p) {
    r += parts[p] * colors[p].r;
    g += parts[p] * colors[p].g;
    b += parts[p] * colors[p].b;
  }
  return torch::stack({r, g, b});
}

uint64_t sample_seed(uint64_t base, int64_t index) {
  uint64_t x = base + 0x9e3779b97f4a7c15ULL * (uint64_t)(index + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  return x;
}

const std::array<Rgb, 5> kHatPalette = {{{0.85, 0.12, 0.12},
                                         {0.12, 0.30, 0.85},
                                         {0.10, 0.65, 0.25},
                                         {0.92, 0.80, 0.12},
                                         {0.55, 0.12, 0.75}}};

}  // namespace

const std::vector<std::string>& synth_attribute_names() {
  static const std::vector<std::string> names = {"Bald",       "Blond_Hair", "Black_Hair",
                                                 "Brown_Hair", "Eyeglasses", "Wearing_Hat"};
  return names;
}

void SynthSpec::validate() const {
  TORCH_CHECK((resolution & (resolution - 1)) == 0 && resolution >= 8,
              "resolution must be a power of two >= 8");
  TORCH_CHECK(!attributes.empty(), "attribute set must not be empty");
  const auto& known = synth_attribute_names();
  for (const auto& a : attributes) {
    TORCH_CHECK(std::find(known.begin(), known.end(), a) != known.end(), "unknown attribute: ", a);
    TORCH_CHECK(std::count(attributes.begin(), attributes.end(), a) == 1,
                "duplicate attribute: ", a);
  }
}

RelationMatrices synth_relations(const SynthSpec& spec) {
  spec.validate();
  return synthetic_relations(spec.attributes);
}

std::vector<Sample> synth_generate(const SynthSpec& spec, int64_t n) {
  spec.validate();
  TORCH_CHECK(n >= 1, "need at least one sample");
  const auto R = spec.resolution;
  auto [xs, ys] = grids(R);

  auto rel = synth_relations(spec);  // also fixes part name order
  const auto& part_names = rel.part_names;
  auto has = [&](const char* name) {
    return std::find(spec.attributes.begin(), spec.attributes.end(), name) != spec.attributes.end();
  };

  std::vector<Sample> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(sample_seed(spec.seed, i));

    const bool bald = has("Bald") && uniform(rng, 0, 1) < 0.4;
    std::string color_label;  // empty = unlabeled shade
    Rgb hair_color{0.62, 0.22, 0.16};
    if (!bald) {
      std::vector<std::pair<std::string, Rgb>> labeled;
      if (has("Blond_Hair")) labeled.push_back({"Blond_Hair", {0.88, 0.78, 0.38}});
      if (has("Black_Hair")) labeled.push_back({"Black_Hair", {0.08, 0.08, 0.11}});
      if (has("Brown_Hair")) labeled.push_back({"Brown_Hair", {0.46, 0.28, 0.14}});
      if (labeled.size() == 3) {
        auto pick = (size_t)std::floor(uniform(rng, 0, 3));
        pick = std::min(pick, labeled.size() - 1);
        color_label = labeled[pick].first;
        hair_color = labeled[pick].second;
      } else if (!labeled.empty() && uniform(rng, 0, 1) < 0.75) {
        auto pick = (size_t)std::floor(uniform(rng, 0, (double)labeled.size()));
        pick = std::min(pick, labeled.size() - 1);
        color_label = labeled[pick].first;
        hair_color = labeled[pick].second;
      }  // otherwise the unlabeled auburn shade stands in
    }
    const bool glasses = has("Eyeglasses") && uniform(rng, 0, 1) < 0.5;
    const bool hat = has("Wearing_Hat") && uniform(rng, 0, 1) < 0.5;

    const double cx = 0.5 + uniform(rng, -0.03, 0.03);
    const double cy = 0.55 + uniform(rng, -0.03, 0.03);
    const double rx = 0.26 + uniform(rng, -0.03, 0.04);
    const double ry = 0.33 + uniform(rng, -0.03, 0.04);

    auto skin_a = ellipse_alpha(xs, ys, cx, cy, rx, ry, R);
    auto hair_a = bald ? torch::zeros({R, R})
                       : ellipse_alpha(xs, ys, cx, cy - 0.16 + uniform(rng, -0.02, 0.02),
                                       rx + 0.07 + uniform(rng, -0.02, 0.02),
                                       ry - 0.02 + uniform(rng, -0.02, 0.02), R);
    // extents chosen so the hat area ratio clears 0.1 even at worst-case jitter
    auto hat_a = hat ? rect_alpha(xs, ys, cx - 0.27 + uniform(rng, -0.03, 0.03),
                                  cx + 0.27 + uniform(rng, -0.03, 0.03),
                                  0.05 + uniform(rng, -0.02, 0.02),
                                  0.32 + uniform(rng, -0.02, 0.03), R)
                     : torch::zeros({R, R});
    const double eye_y = cy - 0.05, eye_dx = 0.11;
    const double ring_r = 0.065 + uniform(rng, -0.008, 0.012);
    auto glasses_a = glasses
                         ? (ring_alpha(xs, ys, cx - eye_dx, eye_y, ring_r, 0.022, R) +
                            ring_alpha(xs, ys, cx + eye_dx, eye_y, ring_r, 0.022, R) +
                            rect_alpha(xs, ys, cx - eye_dx, cx + eye_dx, eye_y - 0.008,
                                       eye_y + 0.008, R))
                               .clamp(0, 1)
                         : torch::zeros({R, R});

    // top-down occlusion: glasses over hat over hair over skin over background
    std::vector<torch::Tensor> parts(5);
    auto remaining = torch::ones({R, R});
    const std::array<std::pair<int, torch::Tensor>, 4> stack = {{
        {4, glasses_a}, {3, hat_a}, {2, hair_a}, {1, skin_a}}};
    for (const auto& [idx, alpha] : stack) {
      parts[idx] = alpha * remaining;
      remaining = remaining * (1 - alpha);
    }
    parts[0] = remaining;

    Rgb bg = {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)};
    double tone = uniform(rng, -0.08, 0.08);
    Rgb skin = jitter(rng, {0.82 + tone, 0.62 + tone, 0.48 + tone}, 0.03);
    Rgb hat_color = jitter(rng, kHatPalette[(size_t)std::floor(uniform(rng, 0, 5)) % 5], 0.05);
    Rgb rim = jitter(rng, {0.06, 0.06, 0.06}, 0.03);
    auto img = paint(parts, {bg, skin, jitter(rng, hair_color, 0.04), hat_color, rim});

    // facial texture rides inside the skin part so the masks stay exact
    auto eye_l = ellipse_alpha(xs, ys, cx - eye_dx, eye_y, 0.020, 0.020, R);
    auto eye_r = ellipse_alpha(xs, ys, cx + eye_dx, eye_y, 0.020, 0.020, R);
    auto mouth = ellipse_alpha(xs, ys, cx, cy + 0.15, 0.07, 0.025, R);
    auto draw_on_skin = [&](const torch::Tensor& a, Rgb color) {
      auto w = (parts[1] * a).unsqueeze(0);
      img = img * (1 - w) + w * torch::tensor({(float)color.r, (float)color.g, (float)color.b})
                                    .view({3, 1, 1});
    };
    draw_on_skin(eye_l, {0.09, 0.07, 0.06});
    draw_on_skin(eye_r, {0.09, 0.07, 0.06});
    draw_on_skin(mouth, {0.55, 0.20, 0.20});

    Sample s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld.png", (long long)i);
    s.name = buf;
    s.image_u8 = (img.clamp(0, 1) * 255).round().to(torch::kUInt8);
    s.parts_u8 = quantize_mask(torch::stack(parts));

    auto att = torch::zeros({(int64_t)spec.attributes.size()}, torch::kFloat32);
    for (size_t a = 0; a < spec.attributes.size(); ++a) {
      const auto& name = spec.attributes[a];
      bool v = (name == "Bald" && bald) || (name == "Eyeglasses" && glasses) ||
               (name == "Wearing_Hat" && hat) || (!bald && name == color_label);
      att[(int64_t)a] = v ? 1.f : 0.f;
    }
    s.att = att;

    auto stack_probs = PartMaskStack::from(dequantize_mask(s.parts_u8), part_names);
    s.has_hat = mask_area_ratio(stack_probs, "hat") > 0.1;
    out.push_back(std::move(s));
  }
  return out;
}

void emit_dataset(const SynthSpec& spec, int64_t n, const std::string& out_dir) {
  auto samples = synth_generate(spec, n);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  auto rel = synth_relations(spec);
  std::ofstream relf(fs::path(out_dir) / "relations.txt");
  relf << serialize_relation_config(rel);
  TORCH_CHECK(relf.good(), "failed writing relations.txt");

  std::ofstream table(fs::path(out_dir) / "attributes.txt");
  for (size_t a = 0; a < spec.attributes.size(); ++a)
    table << (a ? " " : "") << spec.attributes[a];
  table << "\n";
  for (const auto& s : samples) {
    write_png(s.image_u8, (fs::path(out_dir) / "images" / s.name).string());
    auto stem = fs::path(s.name).stem().string();
    save_mask_planes(s.parts_u8, rel.part_names, (fs::path(out_dir) / "masks" / (stem + ".mask")).string());
    table << s.name;
    for (int64_t a = 0; a < s.att.size(0); ++a) table << " " << (int)s.att[a].item<float>();
    table << "\n";
  }
  TORCH_CHECK(table.good(), "failed writing attributes.txt");
}

}  // namespace magkit
