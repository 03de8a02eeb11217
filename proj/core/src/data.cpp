#include "magkit/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "magkit/image_io.hpp"
#include "magkit/mask_io.hpp"
#include "magkit/masks.hpp"
#include "magkit/metrics.hpp"

namespace magkit {
namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

float parse_flag(const std::string& tok, int64_t line_no) {
  if (tok == "1" || tok == "+1") return 1.f;
  if (tok == "-1" || tok == "0") return 0.f;
  TORCH_CHECK(false, "attribute table line ", line_no, ": bad flag '", tok, "'");
}

torch::Tensor resize_image_u8(const torch::Tensor& img, int64_t res) {
  if (img.size(1) == res && img.size(2) == res) return img;
  auto f = img.to(torch::kFloat32).unsqueeze(0);
  f = torch::nn::functional::interpolate(
      f, torch::nn::functional::InterpolateFuncOptions()
             .size(std::vector<int64_t>{res, res})
             .mode(torch::kBilinear)
             .align_corners(false));
  return f.squeeze(0).round().clamp(0, 255).to(torch::kUInt8);
}

}  // namespace

AttributeTable parse_attribute_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<std::vector<std::string>, int64_t>> lines;  // tokens, line number
  int64_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = tokenize(line);
    if (!toks.empty()) lines.push_back({std::move(toks), no});
  }
  TORCH_CHECK(lines.size() >= 2, "attribute table needs a name row and at least one sample row");

  size_t first = 0;
  if (lines[0].first.size() == 1 &&
      lines[0].first[0].find_first_not_of("0123456789") == std::string::npos)
    first = 1;  // CelebA-style leading count line
  TORCH_CHECK(lines.size() > first + 1, "attribute table has no sample rows");

  AttributeTable table;
  table.names = lines[first].first;
  const auto cols = table.names.size();
  for (size_t i = first + 1; i < lines.size(); ++i) {
    const auto& [toks, line_no] = lines[i];
    TORCH_CHECK(toks.size() == cols + 1, "attribute table line ", line_no, ": expected ", cols + 1,
                " fields, got ", toks.size());
    std::vector<float> flags(cols);
    for (size_t c = 0; c < cols; ++c) flags[c] = parse_flag(toks[c + 1], line_no);
    table.rows.push_back({toks[0], std::move(flags)});
  }
  return table;
}

AttributeTable load_attribute_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  TORCH_CHECK(in.good(), "cannot open attribute table: ", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_attribute_table(ss.str());
}

int64_t Dataset::resolution() const {
  TORCH_CHECK(!samples.empty(), "empty dataset");
  return samples.front().image_u8.size(1);
}

torch::Tensor Dataset::images(const std::vector<int64_t>& idx) const {
  std::vector<torch::Tensor> batch;
  batch.reserve(idx.size());
  for (auto i : idx) batch.push_back(samples.at(i).image_u8);
  return to_unit_range(torch::stack(batch));
}

torch::Tensor Dataset::attributes(const std::vector<int64_t>& idx) const {
  std::vector<torch::Tensor> batch;
  batch.reserve(idx.size());
  for (auto i : idx) batch.push_back(samples.at(i).att);
  return torch::stack(batch);
}

torch::Tensor Dataset::parts(const std::vector<int64_t>& idx) const {
  std::vector<torch::Tensor> batch;
  batch.reserve(idx.size());
  for (auto i : idx) batch.push_back(samples.at(i).parts_u8);
  return dequantize_mask(torch::stack(batch));
}

std::vector<int64_t> Dataset::all_indices() const {
  std::vector<int64_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<int64_t> Dataset::subgroup_indices(bool hat) const {
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < size(); ++i)
    if (samples[i].has_hat == hat) idx.push_back(i);
  return idx;
}

Dataset load_dataset(const std::string& image_dir, const std::string& table_path,
                     const std::string& mask_dir, const std::vector<std::string>& attribute_subset,
                     int64_t resolution) {
  TORCH_CHECK(!attribute_subset.empty(), "attribute subset must not be empty");
  auto table = load_attribute_table(table_path);

  std::vector<size_t> cols(attribute_subset.size());
  for (size_t i = 0; i < attribute_subset.size(); ++i) {
    auto it = std::find(table.names.begin(), table.names.end(), attribute_subset[i]);
    TORCH_CHECK(it != table.names.end(), "attribute '", attribute_subset[i],
                "' not in table header");
    cols[i] = (size_t)(it - table.names.begin());
  }

  std::sort(table.rows.begin(), table.rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  Dataset ds;
  ds.attribute_names = attribute_subset;
  for (const auto& [fname, flags] : table.rows) {
    auto img_path = std::filesystem::path(image_dir) / fname;
    TORCH_CHECK(std::filesystem::exists(img_path), "image listed in table is missing: ",
                img_path.string());
    auto mask_path =
        std::filesystem::path(mask_dir) / (std::filesystem::path(fname).stem().string() + ".mask");
    if (!std::filesystem::exists(mask_path)) {
      std::fprintf(stderr, "warning: no mask for %s, skipping\n", fname.c_str());
      continue;
    }

    Sample s;
    s.name = fname;
    s.image_u8 = resize_image_u8(read_png(img_path.string()), resolution);
    auto [planes, names] = load_mask_planes(mask_path.string());
    if (ds.part_names.empty())
      ds.part_names = names;
    else
      TORCH_CHECK(ds.part_names == names, "mask part names differ across dataset at ", fname);
    if (planes.size(1) != resolution || planes.size(2) != resolution) {
      auto stack = PartMaskStack::from(dequantize_mask(planes), names);
      planes = quantize_mask(resize_mask(stack, resolution, resolution).probs);
    }
    s.parts_u8 = planes;

    auto att = torch::empty({(int64_t)cols.size()}, torch::kFloat32);
    for (size_t i = 0; i < cols.size(); ++i) att[i] = flags[cols[i]];
    s.att = att;

    auto hat_it = std::find(ds.part_names.begin(), ds.part_names.end(), "hat");
    if (hat_it != ds.part_names.end()) {
      auto stack = PartMaskStack::from(dequantize_mask(s.parts_u8), ds.part_names);
      s.has_hat = mask_area_ratio(stack, "hat") > 0.1;
    }
    ds.samples.push_back(std::move(s));
  }
  TORCH_CHECK(!ds.samples.empty(), "dataset is empty after loading");
  return ds;
}

torch::Tensor sample_edit_targets(const torch::Tensor& att_s, EditMode mode, int64_t attribute_index,
                                  std::mt19937_64& rng) {
  TORCH_CHECK(att_s.dim() == 2 && att_s.size(0) >= 1, "need a nonempty [B, C] attribute batch");
  if (mode == EditMode::kEvalSingleFlip) {
    TORCH_CHECK(attribute_index >= 0 && attribute_index < att_s.size(1),
                "attribute index out of range");
    auto diff = torch::zeros_like(att_s);
    diff.select(1, attribute_index).copy_(1 - 2 * att_s.select(1, attribute_index));
    return diff;
  }
  std::vector<int64_t> perm(att_s.size(0));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto idx = torch::tensor(perm, torch::kInt64);
  return att_s.index_select(0, idx) - att_s;
}

}  // namespace magkit
