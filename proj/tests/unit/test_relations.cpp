#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <magkit/relations.hpp>

using namespace magkit;

static const char* kSample = R"(# toy rig
attributes: A B
parts: p q r
plus:
1 0 0
0 1 1
minus:
1 1 0
0 0 1
)";

TEST_CASE("parse round trip") {
  auto rel = parse_relation_config(kSample);
  CHECK(rel.num_attributes() == 2);
  CHECK(rel.num_parts() == 3);
  CHECK(rel.attribute_names == std::vector<std::string>{"A", "B"});
  CHECK(rel.part_names == std::vector<std::string>{"p", "q", "r"});
  CHECK(rel.ar_plus[0][0].item<float>() == 1.f);
  CHECK(rel.ar_plus[1][2].item<float>() == 1.f);
  CHECK(rel.ar_minus[0][1].item<float>() == 1.f);

  auto text = serialize_relation_config(rel);
  auto rel2 = parse_relation_config(text);
  CHECK(torch::equal(rel.ar_plus, rel2.ar_plus));
  CHECK(torch::equal(rel.ar_minus, rel2.ar_minus));
  CHECK(rel.attribute_names == rel2.attribute_names);
  CHECK(rel.part_names == rel2.part_names);
}

TEST_CASE("non-binary entries rejected") {
  std::string bad = kSample;
  auto pos = bad.find("1 0 0");
  bad.replace(pos, 5, "1 2 0");
  CHECK_THROWS(parse_relation_config(bad));

  std::string frac = kSample;
  pos = frac.find("0 1 1");
  frac.replace(pos, 5, "0 0.5 1");
  CHECK_THROWS(parse_relation_config(frac));
}

TEST_CASE("shape errors rejected") {
  CHECK_THROWS(parse_relation_config("attributes: A\nparts: p q\nplus:\n1\nminus:\n1 0\n"));
  CHECK_THROWS(parse_relation_config("attributes: A\nparts: p\nplus:\n1\n0\nminus:\n1\n"));
  CHECK_THROWS(parse_relation_config("parts: p\nplus:\nminus:\n"));
}

TEST_CASE("synthetic defaults") {
  auto rel = synthetic_relations({"Bald", "Eyeglasses", "Wearing_Hat"});
  CHECK(rel.num_attributes() == 3);
  CHECK(rel.num_parts() == 5);
  // Bald+ edits hair; Bald- regrows over background and skin but never a hat.
  CHECK(rel.ar_plus[0][2].item<float>() == 1.f);
  CHECK(rel.ar_minus[0][0].item<float>() == 1.f);
  CHECK(rel.ar_minus[0][1].item<float>() == 1.f);
  CHECK(rel.ar_minus[0][3].item<float>() == 0.f);
  CHECK_THROWS(synthetic_relations({"NoSuchAttribute"}));
}
