#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace magkit {

// Attribute-to-part relation matrices. ar_plus[c][p] = 1 when strengthening
// attribute c may edit part p, ar_minus likewise for weakening. Entries are
// binary floats, shape [C, P].
struct RelationMatrices {
  torch::Tensor ar_plus;
  torch::Tensor ar_minus;
  std::vector<std::string> attribute_names;
  std::vector<std::string> part_names;

  int64_t num_attributes() const { return ar_plus.size(0); }
  int64_t num_parts() const { return ar_plus.size(1); }
  void validate() const;
};

// Text config, round-trippable:
//   attributes: A B C
//   parts: p q r
//   plus:
//   1 0 0
//   ...
//   minus:
//   ...
// '#' starts a comment, blank lines ignored. Non-binary grid entries are rejected.
RelationMatrices parse_relation_config(const std::string& text);
std::string serialize_relation_config(const RelationMatrices& rel);
RelationMatrices load_relation_config(const std::string& path);
void save_relation_config(const RelationMatrices& rel, const std::string& path);

// Relations for the synthetic face parts {background, skin, hair, hat, glasses}
// and the attribute set {Bald, Blond_Hair, Black_Hair, Brown_Hair, Eyeglasses,
// Wearing_Hat}, restricted to `attribute_names` in the given order.
RelationMatrices synthetic_relations(const std::vector<std::string>& attribute_names);

}  // namespace magkit
