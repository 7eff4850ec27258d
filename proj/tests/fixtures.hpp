#pragma once

#include "sseg/geom.hpp"
#include "sseg/structure.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace fixture {

using namespace sseg;

struct Part {
  std::string label;
  OrientedBox box;
};

/// Cloud, segments and a boxed hierarchy built from part boxes (a 3x3x3 grid
/// of points inside each box).
struct Shape {
  std::vector<Vec3> points;
  std::vector<Segment> segments;
  Hierarchy h;
};

inline OrientedBox aabb_box(const Vec3& lo, const Vec3& hi) { return OrientedBox(0.5 * (lo + hi), hi - lo); }

inline void fill_internal_boxes(Hierarchy& h, NodeId id) {
  auto& n = h.node(id);
  if (n.is_leaf()) return;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (NodeId c : std::vector<NodeId>(n.children)) {
    fill_internal_boxes(h, c);
    const auto [clo, chi] = h.node(c).box->aabb();
    lo = lo.cwiseMin(clo);
    hi = hi.cwiseMax(chi);
  }
  h.node(id).box = OrientedBox(0.5 * (lo + hi), (hi - lo).cwiseMax(Vec3::Constant(kExtentFloor)));
}

inline Shape make_shape(const Taxonomy& taxonomy, const std::vector<Part>& parts, bool relations = true) {
  Shape s;
  for (const auto& part : parts) {
    Segment seg;
    seg.semantic = taxonomy.id_of(part.label);
    const Mat3 r = part.box.rotation().matrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
          const Vec3 local = Vec3(i - 1, j - 1, k - 1).cwiseProduct(0.45 * part.box.scale());
          seg.point_indices.push_back(static_cast<int>(s.points.size()));
          s.points.push_back(part.box.translation() + r * local);
        }
    s.segments.push_back(std::move(seg));
  }
  s.h = build_hierarchy(s.segments, taxonomy, s.points);
  for (std::size_t i = 0; i < parts.size(); ++i) s.h.node(static_cast<NodeId>(i)).box = parts[i].box;
  fill_internal_boxes(s.h, s.h.root);
  if (relations) relation_ground_truth(s.h);
  return s;
}

inline Taxonomy chair_taxonomy() {
  return Taxonomy::from_json(
      {{"label", "chair"},
       {"children",
        {{{"label", "base"}, {"children", {{{"label", "leg"}}}}},
         {{"label", "seat"}},
         {{"label", "back"}},
         {{"label", "arm_unit"},
          {"multi_instance", true},
          {"children", {{{"label", "arm_rest"}}, {{"label", "arm_support"}}}}}}}});
}

/// Four legs at square corners, a seat on top and a back behind it.
inline std::vector<Part> chair_parts() {
  std::vector<Part> parts;
  for (double x : {-0.2, 0.2})
    for (double z : {-0.2, 0.2})
      parts.push_back({"leg", aabb_box(Vec3(x - 0.02, -0.3, z - 0.02), Vec3(x + 0.02, 0.0, z + 0.02))});
  parts.push_back({"seat", aabb_box(Vec3(-0.25, 0.0, -0.25), Vec3(0.25, 0.05, 0.25))});
  parts.push_back({"back", aabb_box(Vec3(-0.25, 0.05, -0.25), Vec3(0.25, 0.45, -0.2))});
  return parts;
}

inline std::vector<int> sorted_union(const Hierarchy& h, const std::vector<NodeId>& ids) {
  std::vector<int> out;
  for (NodeId id : ids) {
    const auto& idx = h.node(id).point_indices;
    out.insert(out.end(), idx.begin(), idx.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fixture
