#include "fixtures.hpp"

#include "sseg/error.hpp"
#include "sseg/structure.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace sseg;
using fixture::aabb_box;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an sseg::Error");
  return ErrorKind::InvalidArgument;
}

void check_unions(const Hierarchy& h, NodeId id) {
  const auto& n = h.node(id);
  if (n.is_leaf()) return;
  CHECK(n.point_indices == fixture::sorted_union(h, n.children));
  for (NodeId c : n.children) check_unions(h, c);
}

}  // namespace

TEST_CASE("taxonomy round trip and lookups") {
  const auto tax = fixture::chair_taxonomy();
  CHECK(tax.size() == 8);
  CHECK(tax.name(0) == "chair");
  CHECK(Taxonomy::from_json(tax.to_json()) == tax);
  const LabelId leg = tax.id_of("leg");
  CHECK(tax.chain(leg) == std::vector<LabelId>{0, tax.id_of("base"), leg});
  CHECK(tax.entry(tax.id_of("arm_unit")).multi_instance);
  const auto leaves = tax.leaf_labels();
  CHECK(std::count(leaves.begin(), leaves.end(), tax.id_of("base")) == 0);
  CHECK(std::count(leaves.begin(), leaves.end(), leg) == 1);
  CHECK(kind_of([&] { (void)tax.id_of("sofa"); }) == ErrorKind::UnknownLabel);
  CHECK(kind_of([] { (void)Taxonomy::from_json({{"children", nlohmann::json::array()}}); }) == ErrorKind::ParseError);
}

TEST_CASE("relation set bits") {
  RelationSet s;
  CHECK(s.empty());
  s.insert(RelationType::Adjacent);
  s.insert(RelationType::Reflective);
  CHECK(s.size() == 2);
  CHECK(s.has(RelationType::Adjacent));
  CHECK_FALSE(s.has(RelationType::Rotational));
  CHECK(s.types() == std::vector<RelationType>{RelationType::Reflective, RelationType::Adjacent});
  for (int t = 0; t < kRelationTypeCount; ++t) {
    const auto type = static_cast<RelationType>(t);
    CHECK(relation_from_string(to_string(type)) == type);
  }
}

TEST_CASE("chair groups legs under base") {
  const auto tax = fixture::chair_taxonomy();
  const auto s = fixture::make_shape(tax, fixture::chair_parts());
  const auto& h = s.h;
  h.validate();
  CHECK(h.leaves().size() == 6);
  const auto& root = h.node(h.root);
  CHECK(root.semantic == 0);
  REQUIRE(root.children.size() == 3);
  const auto& base = h.node(root.children[0]);
  CHECK(base.semantic == tax.id_of("base"));
  CHECK(base.children == std::vector<NodeId>{0, 1, 2, 3});
  CHECK(h.node(root.children[1]).semantic == tax.id_of("seat"));
  CHECK(h.node(root.children[2]).semantic == tax.id_of("back"));
  for (NodeId leg = 0; leg < 4; ++leg) CHECK(h.depth(leg) == 2);
  check_unions(h, h.root);
}

TEST_CASE("four-leg fixture relations") {
  const auto tax = fixture::chair_taxonomy();
  const auto s = fixture::make_shape(tax, fixture::chair_parts());
  const auto& h = s.h;
  const NodeId base = h.parent_of(0);
  const NodeId seat = 4, back = 5;
  // Legs 0..3 sit at (x,z) = (-,-), (-,+), (+,-), (+,+).
  CHECK(h.relation(base, seat).has(RelationType::Adjacent));
  CHECK(h.relation(seat, back).has(RelationType::Adjacent));
  CHECK_FALSE(h.relation(base, back).has(RelationType::Adjacent));
  for (auto [a, b] : {std::pair{0, 1}, std::pair{2, 3}, std::pair{0, 2}, std::pair{1, 3}}) {
    CHECK(h.relation(a, b).has(RelationType::Translational));
    CHECK_FALSE(h.relation(a, b).has(RelationType::Adjacent));
  }
  CHECK(h.relation(0, 2).has(RelationType::Reflective));
  CHECK(h.relation(1, 3).has(RelationType::Reflective));
  CHECK_FALSE(h.relation(0, 1).has(RelationType::Reflective));
  // Diagonal offsets occur once each.
  CHECK_FALSE(h.relation(0, 3).has(RelationType::Translational));
  // All four legs share one circle about the base centroid.
  CHECK(h.relation(0, 3).has(RelationType::Rotational));
  for (const auto& r : h.relations) CHECK(h.parent_of(r.a) == h.parent_of(r.b));
  CHECK(h.relation(seat, back) == h.relation(back, seat));
}

TEST_CASE("two touching boxes are adjacent; a single child has no relations") {
  const auto tax = Taxonomy::from_json({{"label", "thing"}, {"children", {{{"label", "a"}}, {{"label", "b"}}}}});
  const auto s = fixture::make_shape(
      tax, {{"a", aabb_box(Vec3(0, 0, 0), Vec3(1, 1, 1))}, {"b", aabb_box(Vec3(1, 0, 0), Vec3(2, 0.5, 0.5))}});
  CHECK(s.h.relation(0, 1).has(RelationType::Adjacent));
  CHECK_FALSE(s.h.relation(0, 1).has(RelationType::Translational));

  const auto one = fixture::make_shape(tax, {{"a", aabb_box(Vec3(0, 0, 0), Vec3(1, 1, 1))}});
  CHECK(one.h.relations.empty());
  CHECK(one.h.leaves() == std::vector<NodeId>{0});
}

TEST_CASE("relation_ground_truth needs boxes") {
  const auto tax = fixture::chair_taxonomy();
  auto s = fixture::make_shape(tax, fixture::chair_parts(), false);
  s.h.node(2).box.reset();
  CHECK(kind_of([&] { relation_ground_truth(s.h); }) == ErrorKind::MissingGeometry);
}

TEST_CASE("root-labelled segment is a single leaf") {
  const auto tax = fixture::chair_taxonomy();
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<Segment> segs{{{0, 1}, 0}};
  const auto h = build_hierarchy(segs, tax, pts);
  CHECK(h.size() == 1);
  CHECK(h.root == 0);
  CHECK(h.node(0).is_leaf());
}

TEST_CASE("build_hierarchy errors") {
  const auto tax = fixture::chair_taxonomy();
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK(kind_of([&] { build_hierarchy(std::vector<Segment>{}, tax, pts); }) == ErrorKind::EmptyShape);
  CHECK(kind_of([&] { build_hierarchy(std::vector<Segment>{{{0}, 42}}, tax, pts); }) == ErrorKind::UnknownLabel);
  CHECK(kind_of([&] { build_hierarchy(std::vector<Segment>{{{0, 5}, 1}}, tax, pts); }) ==
        ErrorKind::InvalidSegmentation);
  CHECK(kind_of([&] { build_hierarchy(std::vector<Segment>{{{0}, 2}, {{0, 1}, 2}}, tax, pts); }) ==
        ErrorKind::InvalidSegmentation);
}

TEST_CASE("arms far apart make two arm units") {
  const auto tax = fixture::chair_taxonomy();
  auto parts = fixture::chair_parts();
  for (double x : {-0.4, 0.4}) {
    parts.push_back({"arm_rest", aabb_box(Vec3(x - 0.03, 0.2, -0.2), Vec3(x + 0.03, 0.23, 0.2))});
    parts.push_back({"arm_support", aabb_box(Vec3(x - 0.02, 0.05, 0.1), Vec3(x + 0.02, 0.2, 0.14))});
  }
  const auto s = fixture::make_shape(tax, parts);
  s.h.validate();
  std::vector<NodeId> units;
  for (const auto& n : s.h.nodes) {
    if (n.semantic == tax.id_of("arm_unit")) units.push_back(n.id);
  }
  REQUIRE(units.size() == 2);
  CHECK(s.h.node(units[0]).children == std::vector<NodeId>{6, 7});
  CHECK(s.h.node(units[1]).children == std::vector<NodeId>{8, 9});
  CHECK(s.h.parent_of(units[0]) == s.h.root);
  CHECK(s.h.relation(units[0], units[1]).has(RelationType::Reflective));
}

TEST_CASE("oversized subsets are split to at most ten") {
  const auto tax = Taxonomy::from_json({{"label", "rack"}, {"children", {{{"label", "slot"}}}}});
  std::vector<fixture::Part> parts;
  for (int i = 0; i < 23; ++i) {
    const double x = 0.1 * i + (i >= 12 ? 2.0 : 0.0);
    parts.push_back({"slot", aabb_box(Vec3(x, 0, 0), Vec3(x + 0.05, 0.05, 0.05))});
  }
  const auto s = fixture::make_shape(tax, parts, false);
  s.h.validate();
  CHECK(s.h.leaves().size() == 23);
  for (const auto& n : s.h.nodes) CHECK(n.children.size() <= kMaxSubsetSize);
  check_unions(s.h, s.h.root);
}

TEST_CASE("build_hierarchy is deterministic and partitions points") {
  const auto tax = fixture::chair_taxonomy();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const std::vector<std::string> labels{"leg", "seat", "back", "arm_rest", "arm_support", "chair", "base"};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<fixture::Part> parts;
    const int n = 1 + trial % 12;
    for (int i = 0; i < n; ++i) {
      const Vec3 c(u(rng), u(rng), u(rng));
      parts.push_back({labels[static_cast<std::size_t>(rng() % labels.size())], aabb_box(c, c + Vec3(0.1, 0.1, 0.1))});
    }
    const auto a = fixture::make_shape(tax, parts, false);
    const auto b = fixture::make_shape(tax, parts, false);
    a.h.validate();
    REQUIRE(a.h.size() == b.h.size());
    for (std::size_t i = 0; i < a.h.size(); ++i) {
      CHECK(a.h.nodes[i].children == b.h.nodes[i].children);
      CHECK(a.h.nodes[i].semantic == b.h.nodes[i].semantic);
    }
    std::vector<int> all(a.points.size());
    std::iota(all.begin(), all.end(), 0);
    CHECK(fixture::sorted_union(a.h, a.h.leaves()) == all);
    check_unions(a.h, a.h.root);
    const auto bfs = a.h.breadth_first();
    CHECK(bfs.front() == a.h.root);
    CHECK(std::set<NodeId>(bfs.begin(), bfs.end()).size() == a.h.size());
  }
}

TEST_CASE("validate rejects broken trees") {
  const auto tax = fixture::chair_taxonomy();
  auto s = fixture::make_shape(tax, fixture::chair_parts());
  auto bad = s.h;
  bad.set_relation(0, 4, RelationSet(1));
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
  bad = s.h;
  bad.node(0).feature = std::vector<double>(7, 0.0);
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
  bad = s.h;
  bad.node(1).parent = -1;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("single_linkage cuts at the threshold") {
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(5, 0, 0), Vec3(0.2, 0, 0), Vec3(5.1, 0, 0), Vec3(0.4, 0, 0)};
  const auto groups = single_linkage(pts, 0.25);
  CHECK(groups == std::vector<std::vector<int>>{{0, 2, 4}, {1, 3}});
  CHECK(single_linkage(pts, 10.0).size() == 1);
}
