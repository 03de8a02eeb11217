#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "magkit/data.hpp"
#include "magkit/relations.hpp"

namespace magkit {

// Procedural face sampler with exact part masks. Parts are always
// {background, skin, hair, hat, glasses}; the attribute set picks which scene
// switches get labeled. The default four-attribute subset keeps every marginal
// frequency inside [0.3, 0.7]; the full six-attribute set does not (three
// mutually exclusive hair colors cannot).
struct SynthSpec {
  int64_t resolution = 64;
  std::vector<std::string> attributes = {"Bald", "Blond_Hair", "Eyeglasses", "Wearing_Hat"};
  uint64_t seed = 0;

  void validate() const;
};

// All six supported attribute names, in canonical order.
const std::vector<std::string>& synth_attribute_names();

RelationMatrices synth_relations(const SynthSpec& spec);

// Deterministic in (seed, index): generating n then 2n samples agrees on the
// shared prefix.
std::vector<Sample> synth_generate(const SynthSpec& spec, int64_t n);

// Writes out_dir/images/*.png, out_dir/masks/*.mask, out_dir/attributes.txt,
// out_dir/relations.txt; byte-identical to the in-memory samples.
void emit_dataset(const SynthSpec& spec, int64_t n, const std::string& out_dir);

}  // namespace magkit
