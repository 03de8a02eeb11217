#include "magkit/relations.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace magkit {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace

void RelationMatrices::validate() const {
  TORCH_CHECK(ar_plus.dim() == 2 && ar_minus.dim() == 2, "relation matrices must be 2-D");
  TORCH_CHECK(ar_plus.sizes() == ar_minus.sizes(), "ar_plus/ar_minus shape mismatch");
  TORCH_CHECK((int64_t)attribute_names.size() == ar_plus.size(0), "attribute name count mismatch");
  TORCH_CHECK((int64_t)part_names.size() == ar_plus.size(1), "part name count mismatch");
  for (const auto& m : {ar_plus, ar_minus}) {
    auto ok = ((m == 0) | (m == 1)).all().item<bool>();
    TORCH_CHECK(ok, "relation matrix entries must be 0 or 1");
  }
}

RelationMatrices parse_relation_config(const std::string& text) {
  std::istringstream is(text);
  RelationMatrices rel;
  std::vector<std::vector<float>> plus, minus;
  std::vector<std::vector<float>>* grid = nullptr;
  int lineno = 0;
  for (std::string raw; std::getline(is, raw);) {
    ++lineno;
    std::string line = strip_comment(raw);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "attributes:") {
      rel.attribute_names.assign(toks.begin() + 1, toks.end());
      grid = nullptr;
    } else if (toks[0] == "parts:") {
      rel.part_names.assign(toks.begin() + 1, toks.end());
      grid = nullptr;
    } else if (toks[0] == "plus:") {
      grid = &plus;
    } else if (toks[0] == "minus:") {
      grid = &minus;
    } else {
      TORCH_CHECK(grid != nullptr, "relation config line ", lineno, ": unexpected row outside plus:/minus:");
      std::vector<float> row;
      for (const auto& t : toks) {
        TORCH_CHECK(t == "0" || t == "1", "relation config line ", lineno, ": non-binary entry '", t, "'");
        row.push_back(t == "1" ? 1.f : 0.f);
      }
      grid->push_back(std::move(row));
    }
  }
  const auto C = (int64_t)rel.attribute_names.size();
  const auto P = (int64_t)rel.part_names.size();
  TORCH_CHECK(C > 0 && P > 0, "relation config must list attributes and parts");
  auto to_tensor = [&](const std::vector<std::vector<float>>& g, const char* name) {
    TORCH_CHECK((int64_t)g.size() == C, "relation config: ", name, " grid must have ", C, " rows");
    auto t = torch::zeros({C, P});
    for (int64_t r = 0; r < C; ++r) {
      TORCH_CHECK((int64_t)g[r].size() == P, "relation config: ", name, " row ", r + 1, " must have ", P,
                  " entries");
      for (int64_t c = 0; c < P; ++c) t[r][c] = g[r][c];
    }
    return t;
  };
  rel.ar_plus = to_tensor(plus, "plus");
  rel.ar_minus = to_tensor(minus, "minus");
  rel.validate();
  return rel;
}

std::string serialize_relation_config(const RelationMatrices& rel) {
  rel.validate();
  std::ostringstream os;
  os << "attributes:";
  for (const auto& a : rel.attribute_names) os << ' ' << a;
  os << "\nparts:";
  for (const auto& p : rel.part_names) os << ' ' << p;
  os << '\n';
  auto grid = [&](const torch::Tensor& m, const char* name) {
    os << name << ":\n";
    for (int64_t r = 0; r < m.size(0); ++r) {
      for (int64_t c = 0; c < m.size(1); ++c) os << (c ? " " : "") << (int)m[r][c].item<float>();
      os << '\n';
    }
  };
  grid(rel.ar_plus, "plus");
  grid(rel.ar_minus, "minus");
  return os.str();
}

RelationMatrices load_relation_config(const std::string& path) {
  std::ifstream in(path);
  TORCH_CHECK(in.good(), "cannot open relation config: ", path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_relation_config(buf.str());
}

void save_relation_config(const RelationMatrices& rel, const std::string& path) {
  std::ofstream out(path);
  TORCH_CHECK(out.good(), "cannot write relation config: ", path);
  out << serialize_relation_config(rel);
}

RelationMatrices synthetic_relations(const std::vector<std::string>& attribute_names) {
  // Parts: background, skin, hair, hat, glasses. Strengthen Bald edits hair away;
  // weaken Bald regrows hair over background/skin (never over a hat). Hair colors
  // recolor the hair region both ways. Glasses appear over skin and vanish from
  // their own region. A hat covers hair and background; removing it edits the hat region.
  static const std::vector<std::string> kParts = {"background", "skin", "hair", "hat", "glasses"};
  struct Row {
    const char* name;
    std::array<float, 5> plus, minus;
  };
  static const std::vector<Row> kRows = {
      {"Bald", {0, 0, 1, 0, 0}, {1, 1, 0, 0, 0}},
      {"Blond_Hair", {0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}},
      {"Black_Hair", {0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}},
      {"Brown_Hair", {0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}},
      {"Eyeglasses", {0, 1, 0, 0, 1}, {0, 0, 0, 0, 1}},
      {"Wearing_Hat", {1, 0, 1, 0, 0}, {0, 0, 0, 1, 0}},
  };
  RelationMatrices rel;
  rel.part_names = kParts;
  rel.attribute_names = attribute_names;
  const auto C = (int64_t)attribute_names.size();
  rel.ar_plus = torch::zeros({C, 5});
  rel.ar_minus = torch::zeros({C, 5});
  for (int64_t i = 0; i < C; ++i) {
    const Row* found = nullptr;
    for (const auto& r : kRows)
      if (attribute_names[i] == r.name) found = &r;
    TORCH_CHECK(found, "no synthetic relations for attribute '", attribute_names[i], "'");
    for (int64_t p = 0; p < 5; ++p) {
      rel.ar_plus[i][p] = found->plus[p];
      rel.ar_minus[i][p] = found->minus[p];
    }
  }
  rel.validate();
  return rel;
}

}  // namespace magkit
