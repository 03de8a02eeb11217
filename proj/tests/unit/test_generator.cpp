#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <magkit/generator.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace magkit;

namespace {

RelationMatrices rel6() {
  return synthetic_relations(
      {"Bald", "Blond_Hair", "Black_Hair", "Brown_Hair", "Eyeglasses", "Wearing_Hat"});
}

GeneratorConfig small_cfg() {
  GeneratorConfig c;
  c.num_layers = 3;
  c.base_channels = 4;
  c.channel_cap = 16;
  c.input_resolution = 16;
  c.num_attributes = 6;
  return c;
}

torch::Tensor random_parts(int64_t b, int64_t p, int64_t h, int64_t w) {
  auto logits = torch::rand({b, p, h, w}) + 0.05;
  return logits / logits.sum(1, true);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void randomize_spade_finals(GeneratorImpl& g, double stddev) {
  torch::NoGradGuard ng;
  for (auto p : g.named_parameters())
    if (p.key().find("spade") != std::string::npos) p.value().normal_(0.0, stddev);
}

}  // namespace

TEST_CASE("channel width law") {
  GeneratorConfig c;
  c.num_attributes = 6;
  std::vector<int64_t> expect{64, 128, 256, 512, 1024, 1024};
  for (int64_t l = 1; l <= 6; ++l) CHECK(c.width(l) == expect[l - 1]);

  c.base_channels = 16;
  c.channel_cap = 128;
  std::vector<int64_t> capped{16, 32, 64, 128, 128, 128};
  for (int64_t l = 1; l <= 6; ++l) CHECK(c.width(l) == capped[l - 1]);
}

TEST_CASE("config validation") {
  auto c = small_cfg();
  c.validate();
  auto bad = c;
  bad.input_resolution = 48;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.input_resolution = 4;  // < 2^3
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.num_attributes = 0;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.channel_cap = 2;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("config json round trip") {
  auto c = small_cfg();
  c.use_spade = false;
  c.use_blend = true;
  c.stu_identity = true;
  auto back = GeneratorConfig::from_json(c.to_json());
  CHECK(back == c);
  CHECK_FALSE(back == GeneratorConfig{});
}

TEST_CASE("encoder pyramid halves down to 1x1") {
  torch::manual_seed(7);
  auto c = small_cfg();
  c.num_layers = 4;  // 16 -> 8,4,2,1
  Generator gen(c, rel6());
  gen->eval();
  torch::NoGradGuard ng;
  auto pyr = gen->encode(torch::rand({2, 3, 16, 16}) * 2 - 1);
  REQUIRE(pyr.blocks.size() == 4);
  for (int64_t l = 1; l <= 4; ++l) {
    auto& b = pyr.blocks[l - 1];
    CHECK(b.size(0) == 2);
    CHECK(b.size(1) == c.width(l));
    CHECK(b.size(2) == 16 >> l);
    CHECK(b.size(3) == 16 >> l);
  }
  CHECK_THROWS(gen->encode(torch::rand({2, 3, 8, 8})));
}

TEST_CASE("stu identity hook passes features through untouched") {
  torch::manual_seed(11);
  auto c = small_cfg();
  c.stu_identity = true;
  Generator gen(c, rel6());
  gen->eval();
  torch::NoGradGuard ng;
  auto pyr = gen->encode(torch::rand({1, 3, 16, 16}) * 2 - 1);
  auto d = torch::zeros({1, 6});
  d[0][4] = 1;
  auto out = gen->stu_transfer(pyr, d);
  REQUIRE(out.blocks.size() == pyr.blocks.size());
  for (size_t i = 0; i < pyr.blocks.size(); ++i) CHECK(torch::equal(out.blocks[i], pyr.blocks[i]));
}

TEST_CASE("stu transfer depends on the requested change") {
  torch::manual_seed(13);
  auto c = small_cfg();
  Generator gen(c, rel6());
  gen->eval();
  torch::NoGradGuard ng;
  auto pyr = gen->encode(torch::rand({1, 3, 16, 16}) * 2 - 1);
  auto d1 = torch::zeros({1, 6});
  d1[0][1] = 1;
  auto d2 = torch::zeros({1, 6});
  d2[0][1] = -1;
  auto a = gen->stu_transfer(pyr, d1);
  auto b = gen->stu_transfer(pyr, d2);
  CHECK(torch::equal(a.blocks.back(), b.blocks.back()));  // deepest block passes through
  CHECK((a.blocks[0] - b.blocks[0]).abs().max().item<float>() > 0);
}

TEST_CASE("condition tensor frozen values") {
  auto rel = rel6();  // Eyeglasses: plus {skin, glasses}, minus {glasses}
  auto parts = torch::zeros({1, 5, 1, 1});
  parts[0][0][0][0] = 0.3f;  // background
  parts[0][4][0][0] = 0.7f;  // glasses
  auto d = torch::zeros({1, 6});
  d[0][4] = 1;
  auto cond = build_condition_tensor(d, parts, rel, 1, 1, true);
  CHECK(cond.sizes() == torch::IntArrayRef({1, 6, 1, 1}));
  CHECK(cond[0][4][0][0].item<float>() == doctest::Approx(0.7).epsilon(1e-6));

  parts[0][0][0][0] = 0.6f;
  parts[0][4][0][0] = 0.4f;
  d[0][4] = -0.5;
  cond = build_condition_tensor(d, parts, rel, 1, 1, true);
  CHECK(cond[0][4][0][0].item<float>() == doctest::Approx(-0.2).epsilon(1e-6));
  CHECK(cond[0][0][0][0].item<float>() == 0.f);  // untouched attribute stays zero

  auto zero = build_condition_tensor(torch::zeros({1, 6}), parts, rel, 1, 1, true);
  CHECK(torch::equal(zero, torch::zeros({1, 6, 1, 1})));

  auto du = torch::tensor({{0.25f, -1.f, 0.f, 1.f, 0.f, -0.5f}});
  auto uniform = build_condition_tensor(du, parts, rel, 4, 4, false);
  CHECK(uniform.sizes() == torch::IntArrayRef({1, 6, 4, 4}));
  CHECK(torch::equal(uniform, du.reshape({1, 6, 1, 1}).expand({1, 6, 4, 4})));

  auto resized = build_condition_tensor(d, parts, rel, 4, 4, true);
  CHECK(resized.sizes() == torch::IntArrayRef({1, 6, 4, 4}));
}

TEST_CASE("condition stacks match each variant's consumption points") {
  torch::manual_seed(17);
  auto rel = rel6();
  auto parts = random_parts(1, 5, 16, 16);
  auto d = torch::zeros({1, 6});
  d[0][5] = 1;

  auto c = small_cfg();  // L=3, R=16, SPADE
  Generator spade_gen(c, rel);
  auto conds = spade_gen->build_condition_tensors(d, parts);
  REQUIRE(conds.size() == 3);
  CHECK_FALSE(conds[0].defined());
  CHECK(conds[1].size(3) == 8);   // deconv 2 output
  CHECK(conds[2].size(3) == 4);   // deconv 3 output

  c.use_spade = false;
  Generator cat_gen(c, rel);
  conds = cat_gen->build_condition_tensors(d, parts);
  CHECK(conds[1].size(3) == 4);   // deconv 2 input
  CHECK(conds[2].size(3) == 2);   // deconv 3 input

  torch::NoGradGuard ng;
  cat_gen->eval();
  auto out = cat_gen->edit(torch::rand({1, 3, 16, 16}) * 2 - 1, d, parts);
  CHECK(out.sizes() == torch::IntArrayRef({1, 3, 16, 16}));
}

TEST_CASE("zero change with blending returns the input bit for bit") {
  torch::manual_seed(19);
  auto c = small_cfg();
  c.use_blend = true;
  Generator gen(c, rel6());
  gen->eval();
  randomize_spade_finals(*gen, 0.1);
  torch::NoGradGuard ng;
  auto x = torch::rand({2, 3, 16, 16}) * 2 - 1;
  auto out = gen->edit(x, torch::zeros({2, 6}), random_parts(2, 5, 16, 16));
  CHECK(torch::equal(out, x));
}

TEST_CASE("zero change makes raw output independent of the part masks") {
  torch::manual_seed(23);
  auto c = small_cfg();
  Generator gen(c, rel6());
  gen->eval();
  randomize_spade_finals(*gen, 0.1);
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 3, 16, 16}) * 2 - 1;
  auto d = torch::zeros({1, 6});
  auto a = gen->edit(x, d, random_parts(1, 5, 16, 16));
  auto b = gen->edit(x, d, random_parts(1, 5, 16, 16));
  CHECK(torch::equal(a, b));
}

TEST_CASE("mask conditioning is spatially local") {
  torch::manual_seed(29);
  GeneratorConfig c;
  c.num_layers = 2;
  c.base_channels = 4;
  c.channel_cap = 8;
  c.input_resolution = 32;
  c.num_attributes = 6;
  c.stu_identity = true;  // attributes reach the image only through the condition stack
  c.use_blend = false;
  Generator gen(c, rel6());
  gen->eval();
  randomize_spade_finals(*gen, 0.2);

  // hair occupies the left quarter; Blond_Hair relates to hair only
  auto parts = torch::zeros({1, 5, 32, 32});
  parts.index_put_({0, 0}, 1.0);
  parts.index_put_({0, 2, torch::indexing::Slice(), torch::indexing::Slice(0, 8)}, 1.0);
  parts.index_put_({0, 0, torch::indexing::Slice(), torch::indexing::Slice(0, 8)}, 0.0);

  auto run = [&](int64_t col) {
    auto d = torch::zeros({1, 6}, torch::requires_grad());
    {
      torch::NoGradGuard ng;
      d[0][1] = 1.0;
    }
    auto out = gen->edit(torch::full({1, 3, 32, 32}, 0.1), d, parts);
    auto pixel = out.index({0, 0, 16, col});
    return torch::autograd::grad({pixel}, {d})[0];
  };
  CHECK(run(0).abs().max().item<double>() > 0);        // inside the edited region
  CHECK(run(31).abs().max().item<double>() == 0.0);    // far side: exactly untouched
}

TEST_CASE("blend endpoints and midpoint") {
  torch::manual_seed(31);
  auto raw = torch::rand({2, 3, 4, 4}) * 2 - 1;
  auto x = torch::rand({2, 3, 4, 4}) * 2 - 1;
  CHECK(torch::equal(blend(raw, x, torch::ones({2, 4, 4})), x));
  CHECK(torch::equal(blend(raw, x, torch::zeros({2, 4, 4})), raw));
  auto m = torch::full({2, 4, 4}, 0.3);
  auto got = blend(raw, x, m);
  auto want = 0.3 * x + 0.7 * raw;
  CHECK((got - want).abs().max().item<double>() < 1e-7);
}

TEST_CASE("edit keeps shape and range, single image round trip") {
  torch::manual_seed(37);
  auto c = small_cfg();
  c.use_blend = true;
  Generator gen(c, rel6());
  gen->eval();
  randomize_spade_finals(*gen, 0.3);
  torch::NoGradGuard ng;
  auto x = torch::rand({3, 16, 16}) * 2 - 1;  // unbatched
  auto d = torch::zeros({6});
  d[5] = 1;
  auto parts = random_parts(1, 5, 16, 16).squeeze(0);
  auto out = gen->edit(x, d, parts);
  CHECK(out.sizes() == x.sizes());
  CHECK(out.max().item<float>() <= 1.f);
  CHECK(out.min().item<float>() >= -1.f);

  auto bad = torch::zeros({6});
  bad[0] = 1.5;
  CHECK_THROWS(gen->edit(x, bad, parts));
}

TEST_CASE("autograd through the full editor matches finite differences") {
  torch::manual_seed(41);
  GeneratorConfig c;
  c.num_layers = 2;
  c.base_channels = 3;
  c.channel_cap = 6;
  c.input_resolution = 8;
  c.num_attributes = 6;
  c.use_blend = true;
  Generator gen(c, rel6());
  gen->to(torch::kFloat64);
  gen->eval();
  randomize_spade_finals(*gen, 0.3);

  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto x = (torch::rand({1, 3, 8, 8}, opts) * 2 - 1) * 0.9;
  auto parts = (torch::rand({1, 5, 8, 8}, opts) + 0.05);
  parts = parts / parts.sum(1, true);
  auto d = torch::tensor({{1.0, -1.0, 0.0, 0.5, 0.0, -0.25}}, opts);
  auto proj = torch::randn({1, 3, 8, 8}, opts);

  auto value = [&]() { return (gen->edit(x, d, parts) * proj).sum(); };

  gen->zero_grad();
  value().backward();

  const double h = 1e-5;
  for (auto p : gen->named_parameters()) {
    auto flat = p.value().view(-1);
    auto grad = p.value().grad();
    REQUIRE(grad.defined());
    auto gflat = grad.view(-1);
    std::vector<int64_t> picks{0, flat.size(0) / 2, flat.size(0) - 1};
    for (auto idx : picks) {
      double orig = flat[idx].item<double>();
      double plus, minus;
      {
        torch::NoGradGuard ng;
        flat[idx] = orig + h;
        plus = value().item<double>();
        flat[idx] = orig - h;
        minus = value().item<double>();
        flat[idx] = orig;
      }
      double fd = (plus - minus) / (2 * h);
      double ad = gflat[idx].item<double>();
      CHECK(std::abs(ad - fd) < 1e-6 * std::max({1.0, std::abs(ad), std::abs(fd)}));
    }
  }
}

TEST_CASE("checkpoint round trip: behavior, step, and bytes") {
  torch::manual_seed(43);
  auto c = small_cfg();
  c.use_blend = true;
  Generator gen(c, rel6());
  gen->eval();
  randomize_spade_finals(*gen, 0.2);

  auto dir = std::filesystem::temp_directory_path();
  auto p1 = (dir / "magkit_gen_a.ckpt").string();
  auto p2 = (dir / "magkit_gen_b.ckpt").string();
  gen->save(p1, 42);

  auto [loaded, step] = GeneratorImpl::load(p1);
  CHECK(step == 42);
  CHECK(loaded->config() == c);
  CHECK(loaded->relations().attribute_names == gen->relations().attribute_names);

  loaded->eval();
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 3, 16, 16}) * 2 - 1;
  auto d = torch::zeros({1, 6});
  d[0][4] = -1;
  auto parts = random_parts(1, 5, 16, 16);
  CHECK(torch::equal(gen->edit(x, d, parts), loaded->edit(x, d, parts)));

  loaded->save(p2, 42);
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}
