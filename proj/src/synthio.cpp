#include "sseg/synthio.hpp"

#include "sseg/error.hpp"
#include "sseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace sseg {

// --- LabeledCloud ------------------------------------------------------------

void LabeledCloud::validate() const {
  if (points.empty()) throw Error(ErrorKind::EmptyPointSet, "cloud has no points");
  if (semantics.size() != points.size() || instances.size() != points.size()) {
    throw Error(ErrorKind::InvalidSegmentation, "cloud arrays differ in length: points " +
                                                    std::to_string(points.size()) + ", semantics " +
                                                    std::to_string(semantics.size()) + ", instances " +
                                                    std::to_string(instances.size()));
  }
  std::map<int, LabelId> label_of;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int inst = instances[i];
    if (inst < 0) throw Error(ErrorKind::InvalidSegmentation, "negative instance id at point " + std::to_string(i));
    auto [it, fresh] = label_of.emplace(inst, semantics[i]);
    if (!fresh && it->second != semantics[i]) {
      throw Error(ErrorKind::InvalidSegmentation, "instance " + std::to_string(inst) + " mixes semantic labels");
    }
  }
  if (label_of.rbegin()->first != static_cast<int>(label_of.size()) - 1) {
    throw Error(ErrorKind::InvalidSegmentation, "instance ids are not contiguous from 0");
  }
}

std::size_t LabeledCloud::instance_count() const {
  int top = -1;
  for (int i : instances) top = std::max(top, i);
  return static_cast<std::size_t>(top + 1);
}

std::vector<Segment> LabeledCloud::segments() const {
  validate();
  std::vector<Segment> out(instance_count());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& s = out[static_cast<std::size_t>(instances[i])];
    s.point_indices.push_back(static_cast<int>(i));
    s.semantic = semantics[i];
  }
  return out;
}

std::pair<double, Vec3> normalize_cloud(LabeledCloud& cloud) {
  if (cloud.points.empty()) throw Error(ErrorKind::EmptyPointSet, "normalize: no points");
  Vec3 lo = cloud.points.front(), hi = lo;
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double diag = (hi - lo).norm();
  const double scale = diag > 0.0 ? 1.0 / diag : 1.0;
  if (!(std::abs(diag - 1.0) < 1e-12 && center.norm() < 1e-12)) {
    for (auto& p : cloud.points) p = (p - center) * scale;
  } else {
    cloud.normalized = true;
    return {1.0, Vec3::Zero()};
  }
  cloud.normalized = true;
  return {scale, center};
}

// --- Categories --------------------------------------------------------------

std::string to_string(Category c) {
  switch (c) {
    case Category::Chair: return "toy-chair";
    case Category::Table: return "toy-table";
    case Category::Storage: return "toy-storage";
  }
  return "unknown";
}

Category category_from_string(const std::string& name) {
  if (name == "toy-chair" || name == "chair") return Category::Chair;
  if (name == "toy-table" || name == "table") return Category::Table;
  if (name == "toy-storage" || name == "storage") return Category::Storage;
  throw Error(ErrorKind::InvalidArgument, "unknown category '" + name + "'");
}

Taxonomy category_taxonomy(Category c) {
  using nlohmann::json;
  auto leaf = [](const char* name) { return json{{"label", name}}; };
  switch (c) {
    case Category::Chair:
      return Taxonomy::from_json(
          {{"label", "chair"},
           {"children",
            {{{"label", "base"}, {"children", {leaf("leg")}}},
             leaf("seat"),
             leaf("back"),
             {{"label", "arm_unit"}, {"multi_instance", true}, {"children", {leaf("arm_rest"), leaf("arm_support")}}}}}});
    case Category::Table:
      return Taxonomy::from_json(
          {{"label", "table"}, {"children", {{{"label", "base"}, {"children", {leaf("leg")}}}, leaf("top")}}});
    case Category::Storage:
      return Taxonomy::from_json(
          {{"label", "storage"},
           {"children",
            {{{"label", "frame"}, {"children", {leaf("side_panel"), leaf("cover_panel"), leaf("back_panel")}}},
             {{"label", "shelves"}, {"children", {leaf("shelf")}}},
             {{"label", "drawers"}, {"children", {leaf("drawer")}}}}}});
  }
  throw Error(ErrorKind::InvalidArgument, "unknown category");
}

// --- Generator ---------------------------------------------------------------

namespace {

struct PartSpec {
  std::string label;
  Vec3 lo;
  Vec3 hi;
};

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

PartSpec box_part(const std::string& label, const Vec3& lo, const Vec3& hi) { return {label, lo, hi}; }

std::vector<PartSpec> chair_parts(Sampler& s, const NoiseConfig& noise) {
  const double w = s.uniform(0.8, 1.2), d = s.uniform(0.8, 1.1), t = s.uniform(0.06, 0.12);
  const double h = s.uniform(0.8, 1.1), l = s.uniform(0.06, 0.12), inset = s.uniform(0.0, 0.08);
  const double b = s.uniform(0.7, 1.2), tb = s.uniform(0.06, 0.12);
  std::vector<PartSpec> parts;
  parts.push_back(box_part("seat", {-w / 2, h, -d / 2}, {w / 2, h + t, d / 2}));
  parts.push_back(box_part("back", {-w / 2, h + t, -d / 2}, {w / 2, h + t + b, -d / 2 + tb}));
  for (int sz : {-1, 1}) {
    for (int sx : {-1, 1}) {
      const double cx = sx * (w / 2 - inset - l / 2), cz = sz * (d / 2 - inset - l / 2);
      parts.push_back(box_part("leg", {cx - l / 2, 0.0, cz - l / 2}, {cx + l / 2, h, cz + l / 2}));
    }
  }
  if (s.chance(noise.arm_prob)) {
    const double a = s.uniform(0.05, 0.08), ah = s.uniform(0.2, 0.3), front = d / 2 - s.uniform(0.0, 0.1);
    for (int sx : {-1, 1}) {
      const double x0 = sx < 0 ? -w / 2 : w / 2 - a;
      parts.push_back(box_part("arm_support", {x0, h + t, front - a}, {x0 + a, h + t + ah, front}));
      parts.push_back(box_part("arm_rest", {x0, h + t + ah, -d / 2 + tb}, {x0 + a, h + t + ah + a, front}));
    }
  }
  return parts;
}

std::vector<PartSpec> table_parts(Sampler& s) {
  const double w = s.uniform(1.0, 1.6), d = s.uniform(0.6, 1.0), h = s.uniform(0.6, 0.9);
  const double t = s.uniform(0.04, 0.08), l = s.uniform(0.05, 0.1), inset = s.uniform(0.0, 0.1);
  std::vector<PartSpec> parts;
  parts.push_back(box_part("top", {-w / 2, h, -d / 2}, {w / 2, h + t, d / 2}));
  for (int sz : {-1, 1}) {
    for (int sx : {-1, 1}) {
      const double cx = sx * (w / 2 - inset - l / 2), cz = sz * (d / 2 - inset - l / 2);
      parts.push_back(box_part("leg", {cx - l / 2, 0.0, cz - l / 2}, {cx + l / 2, h, cz + l / 2}));
    }
  }
  return parts;
}

std::vector<PartSpec> storage_parts(Sampler& s) {
  const double w = s.uniform(0.8, 1.4), h = s.uniform(1.0, 1.8), d = s.uniform(0.4, 0.6);
  const double p = s.uniform(0.03, 0.06);
  const int drawers = s.integer(0, 2);
  const int shelves = s.integer(1, 3);
  std::vector<PartSpec> parts;
  parts.push_back(box_part("side_panel", {-w / 2, 0.0, -d / 2}, {-w / 2 + p, h, d / 2}));
  parts.push_back(box_part("side_panel", {w / 2 - p, 0.0, -d / 2}, {w / 2, h, d / 2}));
  parts.push_back(box_part("cover_panel", {-w / 2 + p, h - p, -d / 2}, {w / 2 - p, h, d / 2}));
  parts.push_back(box_part("cover_panel", {-w / 2 + p, 0.0, -d / 2}, {w / 2 - p, p, d / 2}));
  parts.push_back(box_part("back_panel", {-w / 2 + p, p, -d / 2}, {w / 2 - p, h - p, -d / 2 + p}));
  const double drawer_h = s.uniform(0.15, 0.22) * h;
  double y = p;
  for (int k = 0; k < drawers; ++k) {
    parts.push_back(box_part("drawer", {-w / 2 + p, y, -d / 2 + p}, {w / 2 - p, y + drawer_h, d / 2}));
    y += drawer_h;
  }
  const double top = h - p;
  for (int k = 0; k < shelves; ++k) {
    const double c = y + (k + 1) * (top - y) / (shelves + 1);
    parts.push_back(box_part("shelf", {-w / 2 + p, c - p / 2, -d / 2 + p}, {w / 2 - p, c + p / 2, d / 2}));
  }
  return parts;
}

double face_area(const Vec3& e, int axis) {
  return e[(axis + 1) % 3] * e[(axis + 2) % 3];
}

std::vector<Vec3> sample_surface(Sampler& s, const PartSpec& part, std::size_t count) {
  const Vec3 e = part.hi - part.lo;
  std::vector<double> areas;
  for (int axis = 0; axis < 3; ++axis) {
    areas.push_back(face_area(e, axis));
    areas.push_back(face_area(e, axis));
  }
  std::discrete_distribution<int> face(areas.begin(), areas.end());
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int f = face(s.engine());
    const int axis = f / 2;
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = s.uniform(part.lo[k], part.hi[k]);
    p[axis] = (f % 2 == 0) ? part.lo[axis] : part.hi[axis];
    out.push_back(p);
  }
  return out;
}

double box_distance(const Vec3& p, const PartSpec& part) {
  const Vec3 d = (part.lo - p).cwiseMax(p - part.hi).cwiseMax(Vec3::Zero());
  return d.norm();
}

bool touching(const PartSpec& a, const PartSpec& b) {
  constexpr double eps = 1e-9;
  for (int k = 0; k < 3; ++k) {
    if (a.hi[k] < b.lo[k] - eps || b.hi[k] < a.lo[k] - eps) return false;
  }
  return true;
}

// Sets up leaf boxes from the part specs and internal boxes as the bounds of
// their children, then labels relations.
void attach_boxes(Hierarchy& h, const std::vector<OrientedBox>& leaf_boxes) {
  std::function<std::pair<Vec3, Vec3>(NodeId)> visit = [&](NodeId id) -> std::pair<Vec3, Vec3> {
    auto& n = h.node(id);
    if (n.is_leaf()) {
      n.box = leaf_boxes.at(static_cast<std::size_t>(id));
      return n.box->aabb();
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (NodeId c : std::vector<NodeId>(n.children)) {
      const auto [clo, chi] = visit(c);
      lo = lo.cwiseMin(clo);
      hi = hi.cwiseMax(chi);
    }
    h.node(id).box = OrientedBox(0.5 * (lo + hi), (hi - lo).cwiseMax(Vec3::Constant(kExtentFloor)));
    return {lo, hi};
  };
  visit(h.root);
  relation_ground_truth(h);
}

}  // namespace

ShapeRecord gen_shape(Category category, std::uint64_t seed, const NoiseConfig& noise) {
  Sampler s(seed);
  const Taxonomy taxonomy = category_taxonomy(category);
  std::vector<PartSpec> parts;
  switch (category) {
    case Category::Chair: parts = chair_parts(s, noise); break;
    case Category::Table: parts = table_parts(s); break;
    case Category::Storage: parts = storage_parts(s); break;
  }

  // Surface samples, area-weighted with a floor per part.
  std::vector<double> areas;
  double total_area = 0.0;
  for (const auto& p : parts) {
    const Vec3 e = p.hi - p.lo;
    areas.push_back(2.0 * (face_area(e, 0) + face_area(e, 1) + face_area(e, 2)));
    total_area += areas.back();
  }
  std::vector<Vec3> points;
  std::vector<int> owner;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto n = std::max(noise.min_points_per_part,
                            static_cast<std::size_t>(std::lround(static_cast<double>(noise.num_points) * areas[k] /
                                                                 total_area)));
    for (const auto& p : sample_surface(s, parts[k], n)) {
      points.push_back(p);
      owner.push_back(static_cast<int>(k));
    }
  }

  // Boundary noise: points next to a touching neighbor take its instance.
  std::vector<int> instance = owner;
  if (noise.boundary_noise > 0.0) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& own = parts[static_cast<std::size_t>(owner[i])];
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (static_cast<int>(k) == owner[i] || !touching(own, parts[k])) continue;
        if (box_distance(points[i], parts[k]) < noise.boundary_noise) {
          instance[i] = static_cast<int>(k);
          break;
        }
      }
    }
  }
  if (noise.outlier_fraction > 0.0 && parts.size() > 1) {
    const int last = static_cast<int>(parts.size()) - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!s.chance(noise.outlier_fraction)) continue;
      const int k = s.integer(0, last - 1);
      instance[i] = k >= owner[i] ? k + 1 : k;
    }
  }
  // Never let a part vanish.
  std::vector<std::size_t> kept(parts.size(), 0);
  for (int v : instance) ++kept[static_cast<std::size_t>(v)];
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (kept[static_cast<std::size_t>(owner[i])] < noise.min_points_per_part / 2) instance[i] = owner[i];
  }

  // Shuffle so that point order carries no part information.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), s.engine());
  LabeledCloud cloud;
  std::vector<int> clean;
  for (std::size_t i : order) {
    cloud.points.push_back(points[i]);
    clean.push_back(instance[i]);
    cloud.semantics.push_back(taxonomy.id_of(parts[static_cast<std::size_t>(instance[i])].label));
  }
  cloud.instances = clean;

  ShapeRecord record;
  record.category = to_string(category);
  record.name = record.category + "-" + std::to_string(seed);

  if (s.chance(noise.oversegment_prob)) {
    const int k = s.integer(0, static_cast<int>(parts.size()) - 1);
    const auto& part = parts[static_cast<std::size_t>(k)];
    const Vec3 e = part.hi - part.lo;
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
      if (e[a] > e[axis]) axis = a;
    }
    const double f = s.uniform(0.2, 0.4);
    const double band = s.uniform(0.3, 0.5);
    const bool from_low = s.chance(0.5);
    const int fragment = static_cast<int>(parts.size());
    std::size_t moved = 0;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      if (clean[i] != k) continue;
      double u = (cloud.points[i][axis] - part.lo[axis]) / e[axis];
      if (!from_low) u = 1.0 - u;
      const double p = u < f - band / 2 ? 1.0 : u < f + band / 2 ? 0.5 : 0.0;
      if (s.uniform(0.0, 1.0) < p) {
        cloud.instances[i] = fragment;
        ++moved;
      }
    }
    if (moved > 0) record.gt_merges.emplace_back(fragment, k);
  }

  // Normalize points and part boxes together.
  const auto [scale, offset] = normalize_cloud(cloud);
  std::vector<OrientedBox> boxes;
  for (const auto& p : parts) {
    boxes.emplace_back((0.5 * (p.lo + p.hi) - offset) * scale, (p.hi - p.lo) * scale);
  }

  std::vector<Segment> segments(parts.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    auto& seg = segments[static_cast<std::size_t>(clean[i])];
    seg.point_indices.push_back(static_cast<int>(i));
    seg.semantic = cloud.semantics[i];
  }
  record.hierarchy = build_hierarchy(segments, taxonomy, cloud.points);
  attach_boxes(record.hierarchy, boxes);
  record.cloud = std::move(cloud);
  return record;
}

ShapeRecord perturb_shape(const ShapeRecord& record, std::uint64_t seed, double amount) {
  if (!(amount >= 0.0 && amount < 1.0)) throw Error(ErrorKind::InvalidArgument, "perturb_shape: amount outside [0, 1)");
  Sampler s(seed);
  const Vec3 k(s.uniform(1.0 - amount, 1.0 + amount), s.uniform(1.0 - amount, 1.0 + amount),
               s.uniform(1.0 - amount, 1.0 + amount));
  ShapeRecord out = record;
  out.name = record.name + "-perturbed-" + std::to_string(seed);
  std::normal_distribution<double> jitter(0.0, amount / 10.0);
  for (auto& p : out.cloud.points) {
    p = p.cwiseProduct(k);
    if (amount > 0.0) p += Vec3(jitter(s.engine()), jitter(s.engine()), jitter(s.engine()));
  }
  out.cloud.normalized = false;
  const auto [scale, offset] = normalize_cloud(out.cloud);
  for (auto& n : out.hierarchy.nodes) {
    if (!n.box) continue;
    if (!n.box->rotation().is_identity()) {
      throw Error(ErrorKind::InvalidArgument, "perturb_shape: node " + std::to_string(n.id) + " has a rotated box");
    }
    n.box = OrientedBox((n.box->translation().cwiseProduct(k) - offset) * scale, n.box->scale().cwiseProduct(k) * scale);
  }
  relation_ground_truth(out.hierarchy);
  return out;
}

ShapeRecord drop_part(const ShapeRecord& record, int instance, const Taxonomy& taxonomy) {
  if (!record.gt_merges.empty()) throw Error(ErrorKind::InvalidArgument, "drop_part: record has gt merges");
  const auto count = static_cast<int>(record.cloud.instance_count());
  if (instance < 0 || instance >= count) {
    throw Error(ErrorKind::UnknownNode, "drop_part: no instance " + std::to_string(instance));
  }
  if (count < 2) throw Error(ErrorKind::EmptyShape, "drop_part: cannot remove the only part");
  ShapeRecord out;
  out.name = record.name + "-without-" + std::to_string(instance);
  out.category = record.category;
  const auto& c = record.cloud;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.instances[i] == instance) continue;
    out.cloud.points.push_back(c.points[i]);
    out.cloud.semantics.push_back(c.semantics[i]);
    out.cloud.instances.push_back(c.instances[i] > instance ? c.instances[i] - 1 : c.instances[i]);
  }
  std::vector<OrientedBox> boxes;
  for (int k = 0; k < count; ++k) {
    if (k == instance) continue;
    const auto& leaf = record.hierarchy.node(k);
    if (!leaf.is_leaf() || !leaf.box) throw Error(ErrorKind::InvalidArgument, "drop_part: leaf boxes missing");
    boxes.push_back(*leaf.box);
  }
  out.hierarchy = build_hierarchy(out.cloud.segments(), taxonomy, out.cloud.points);
  attach_boxes(out.hierarchy, boxes);
  return out;
}

// --- JSON --------------------------------------------------------------------

namespace {

using nlohmann::json;

const json& field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, ctx + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::ParseError, ctx + ": missing field '" + key + "'");
  return *it;
}

template <class T>
T as(const json& j, const std::string& ctx) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, ctx + ": " + e.what());
  }
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& ctx) {
  const auto v = as<std::vector<double>>(j, ctx);
  if (v.size() != 3) throw Error(ErrorKind::ParseError, ctx + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

json box_json(const OrientedBox& b) {
  const auto& q = b.rotation();
  return {{"t", vec_json(b.translation())}, {"s", vec_json(b.scale())}, {"q", {q.w(), q.x(), q.y(), q.z()}}};
}

OrientedBox box_from(const json& j, const std::string& ctx) {
  const Vec3 t = vec_from(field(j, "t", ctx), ctx + ".t");
  const Vec3 s = vec_from(field(j, "s", ctx), ctx + ".s");
  const auto q = as<std::vector<double>>(field(j, "q", ctx), ctx + ".q");
  if (q.size() != 4) throw Error(ErrorKind::ParseError, ctx + ".q: expected 4 numbers");
  try {
    return OrientedBox(t, s, UnitQuaternion(q[0], q[1], q[2], q[3]));
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, ctx + ": " + e.what());
  }
}

}  // namespace

nlohmann::json hierarchy_to_json(const Hierarchy& h) {
  std::function<json(NodeId)> emit = [&](NodeId id) {
    const auto& n = h.node(id);
    json j;
    j["id"] = n.id;
    j["label"] = n.semantic;
    if (n.box) j["box"] = box_json(*n.box);
    j["children"] = json::array();
    for (NodeId c : n.children) j["children"].push_back(emit(c));
    j["relations"] = json::array();
    for (const auto& r : h.relations_of(id)) {
      json types = json::array();
      for (RelationType t : r.types.types()) types.push_back(std::string(to_string(t)));
      j["relations"].push_back({{"a", r.a}, {"b", r.b}, {"types", types}});
    }
    if (n.is_leaf()) j["points"] = n.point_indices;
    return j;
  };
  if (h.root < 0) throw Error(ErrorKind::EmptyShape, "hierarchy has no root");
  return emit(h.root);
}

Hierarchy hierarchy_from_json(const nlohmann::json& j) {
  Hierarchy h;
  std::vector<Relation> relations;
  // Preorder walk; explicit ids are honored when every node carries one.
  std::vector<std::pair<const json*, std::string>> order;
  std::function<void(const json&, const std::string&)> collect = [&](const json& n, const std::string& ctx) {
    order.emplace_back(&n, ctx);
    const auto& children = field(n, "children", ctx);
    if (!children.is_array()) throw Error(ErrorKind::ParseError, ctx + ".children: expected an array");
    for (std::size_t i = 0; i < children.size(); ++i) collect(children[i], ctx + ".children[" + std::to_string(i) + "]");
  };
  collect(j, "hierarchy");
  const bool explicit_ids = std::all_of(order.begin(), order.end(), [](const auto& o) { return o.first->contains("id"); });
  std::map<const json*, NodeId> id_of;
  std::set<NodeId> used;
  for (std::size_t k = 0; k < order.size(); ++k) {
    NodeId id = static_cast<NodeId>(k);
    if (explicit_ids) {
      id = as<int>(order[k].first->at("id"), order[k].second + ".id");
      if (id < 0 || static_cast<std::size_t>(id) >= order.size() || !used.insert(id).second) {
        throw Error(ErrorKind::ParseError, order[k].second + ".id: invalid or duplicate id " + std::to_string(id));
      }
    }
    id_of[order[k].first] = id;
  }
  h.nodes.resize(order.size());
  for (const auto& [ptr, ctx] : order) {
    const json& n = *ptr;
    PartNode& node = h.nodes[static_cast<std::size_t>(id_of[ptr])];
    node.id = id_of[ptr];
    node.semantic = as<int>(field(n, "label", ctx), ctx + ".label");
    if (n.contains("box") && !n.at("box").is_null()) node.box = box_from(n.at("box"), ctx + ".box");
    for (const auto& c : n.at("children")) {
      node.children.push_back(id_of.at(&c));
      h.nodes[static_cast<std::size_t>(id_of.at(&c))].parent = node.id;
    }
    if (n.contains("points")) {
      node.point_indices = as<std::vector<int>>(n.at("points"), ctx + ".points");
      std::sort(node.point_indices.begin(), node.point_indices.end());
    }
    if (n.contains("relations")) {
      const auto& rels = n.at("relations");
      for (std::size_t i = 0; i < rels.size(); ++i) {
        const std::string rctx = ctx + ".relations[" + std::to_string(i) + "]";
        Relation r;
        r.a = as<int>(field(rels[i], "a", rctx), rctx + ".a");
        r.b = as<int>(field(rels[i], "b", rctx), rctx + ".b");
        for (const auto& t : as<std::vector<std::string>>(field(rels[i], "types", rctx), rctx + ".types")) {
          try {
            r.types.insert(relation_from_string(t));
          } catch (const Error& e) {
            throw Error(ErrorKind::ParseError, rctx + ": " + e.what());
          }
        }
        relations.push_back(r);
      }
    }
  }
  h.root = id_of[order.front().first];
  h.nodes[static_cast<std::size_t>(h.root)].parent = -1;
  // Internal point sets are the union of their leaves.
  std::function<void(NodeId)> fill = [&](NodeId id) {
    auto& n = h.nodes[static_cast<std::size_t>(id)];
    if (n.is_leaf()) return;
    std::vector<int> all;
    for (NodeId c : n.children) {
      fill(c);
      const auto& cp = h.nodes[static_cast<std::size_t>(c)].point_indices;
      all.insert(all.end(), cp.begin(), cp.end());
    }
    std::sort(all.begin(), all.end());
    h.nodes[static_cast<std::size_t>(id)].point_indices = std::move(all);
  };
  fill(h.root);
  for (const auto& r : relations) {
    if (r.a < 0 || r.b < 0 || static_cast<std::size_t>(r.a) >= h.size() || static_cast<std::size_t>(r.b) >= h.size()) {
      throw Error(ErrorKind::ParseError, "hierarchy: relation references unknown node");
    }
    h.set_relation(r.a, r.b, r.types);
  }
  try {
    h.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  return h;
}

nlohmann::json record_to_json(const ShapeRecord& r) {
  json j;
  j["name"] = r.name;
  j["category"] = r.category;
  j["normalized"] = r.cloud.normalized;
  json pts = json::array();
  for (const auto& p : r.cloud.points) pts.push_back(vec_json(p));
  j["points"] = std::move(pts);
  j["semantics"] = r.cloud.semantics;
  j["instances"] = r.cloud.instances;
  json merges = json::array();
  for (const auto& [s, t] : r.gt_merges) merges.push_back({s, t});
  j["gt_merges"] = std::move(merges);
  j["hierarchy"] = hierarchy_to_json(r.hierarchy);
  return j;
}

ShapeRecord record_from_json(const nlohmann::json& j) {
  const std::string ctx = "record";
  ShapeRecord r;
  if (j.contains("name")) r.name = as<std::string>(j.at("name"), ctx + ".name");
  if (j.contains("category")) r.category = as<std::string>(j.at("category"), ctx + ".category");
  if (j.contains("normalized")) r.cloud.normalized = as<bool>(j.at("normalized"), ctx + ".normalized");
  const auto& pts = field(j, "points", ctx);
  if (!pts.is_array()) throw Error(ErrorKind::ParseError, ctx + ".points: expected an array");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    r.cloud.points.push_back(vec_from(pts[i], ctx + ".points[" + std::to_string(i) + "]"));
  }
  r.cloud.semantics = as<std::vector<int>>(field(j, "semantics", ctx), ctx + ".semantics");
  r.cloud.instances = as<std::vector<int>>(field(j, "instances", ctx), ctx + ".instances");
  try {
    r.cloud.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, ctx + ": " + e.what());
  }
  if (j.contains("gt_merges")) {
    for (const auto& m : as<std::vector<std::vector<int>>>(j.at("gt_merges"), ctx + ".gt_merges")) {
      if (m.size() != 2) throw Error(ErrorKind::ParseError, ctx + ".gt_merges: expected [source, target] pairs");
      r.gt_merges.emplace_back(m[0], m[1]);
    }
  }
  r.hierarchy = hierarchy_from_json(field(j, "hierarchy", ctx));
  return r;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j, int indent) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << j.dump(indent) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

ShapeRecord load_shape(const std::string& path) {
  try {
    return record_from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError && std::string(e.what()).rfind(path, 0) != 0) {
      throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
    throw;
  }
}

void save_shape(const ShapeRecord& r, const std::string& path) { write_json_file(path, record_to_json(r)); }

Hierarchy load_hierarchy(const std::string& path) {
  const json j = read_json_file(path);
  try {
    if (j.contains("points") && j.contains("hierarchy")) return hierarchy_from_json(j.at("hierarchy"));
    if (j.contains("hierarchy")) return hierarchy_from_json(j.at("hierarchy"));
    return hierarchy_from_json(j);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

void save_hierarchy(const Hierarchy& h, const std::string& path) {
  write_json_file(path, {{"hierarchy", hierarchy_to_json(h)}});
}

// --- Datasets ----------------------------------------------------------------

std::vector<DatasetEntry> Dataset::split(const std::string& name) const {
  std::vector<DatasetEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

std::string Dataset::path_of(const DatasetEntry& e) const { return (fs::path(directory) / e.file).string(); }

std::string split_for_index(std::size_t index) { return index % 5 == 4 ? "test" : "train"; }

void save_manifest(const Dataset& d) {
  fs::create_directories(d.directory);
  d.taxonomy.save((fs::path(d.directory) / "taxonomy.json").string());
  json records = json::array();
  for (const auto& e : d.entries) records.push_back({{"file", e.file}, {"split", e.split}});
  write_json_file((fs::path(d.directory) / "manifest.json").string(),
                  {{"category", d.category}, {"taxonomy", "taxonomy.json"}, {"records", records}}, 2);
}

Dataset load_dataset(const std::string& directory) {
  const std::string manifest = (fs::path(directory) / "manifest.json").string();
  const json j = read_json_file(manifest);
  Dataset d;
  d.directory = directory;
  d.category = as<std::string>(field(j, "category", manifest), manifest + ".category");
  const auto tax = as<std::string>(field(j, "taxonomy", manifest), manifest + ".taxonomy");
  d.taxonomy = Taxonomy::load((fs::path(directory) / tax).string());
  const auto& records = field(j, "records", manifest);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string ctx = manifest + ".records[" + std::to_string(i) + "]";
    d.entries.push_back({as<std::string>(field(records[i], "file", ctx), ctx + ".file"),
                         as<std::string>(field(records[i], "split", ctx), ctx + ".split")});
  }
  return d;
}

Dataset generate_dataset(const std::string& directory, const GenerateOptions& options) {
  Dataset d;
  d.directory = directory;
  d.category = to_string(options.category);
  d.taxonomy = category_taxonomy(options.category);
  fs::create_directories(directory);
  std::vector<DatasetEntry> entries(options.count);
  parallel_for(options.count, options.jobs, [&](std::size_t i) {
    char name[64];
    std::snprintf(name, sizeof name, "shape_%04zu.json", i);
    ShapeRecord r = gen_shape(options.category, options.seed * 1000003ULL + i, options.noise);
    save_shape(r, (fs::path(directory) / name).string());
    entries[i] = {name, split_for_index(i)};
  });
  d.entries = std::move(entries);
  save_manifest(d);
  return d;
}

// --- Import ------------------------------------------------------------------

ShapeRecord import_partnet(const std::string& cloud_file, const std::string& annotation_file,
                           const Taxonomy& taxonomy) {
  std::ifstream in(cloud_file);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + cloud_file);
  LabeledCloud cloud;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z()) || !p.allFinite()) {
      throw Error(ErrorKind::ParseError, cloud_file + ":" + std::to_string(lineno) + ": expected three numbers");
    }
    cloud.points.push_back(p);
  }
  if (cloud.points.empty()) throw Error(ErrorKind::EmptyPointSet, cloud_file + ": no points");

  const json ann = read_json_file(annotation_file);
  const auto& parts = field(ann, "parts", annotation_file);
  const std::size_t n = cloud.points.size();
  cloud.semantics.assign(n, -1);
  cloud.instances.assign(n, -1);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::string ctx = annotation_file + ".parts[" + std::to_string(k) + "]";
    const auto label = as<std::string>(field(parts[k], "label", ctx), ctx + ".label");
    const LabelId id = taxonomy.id_of(label);
    for (int p : as<std::vector<int>>(field(parts[k], "points", ctx), ctx + ".points")) {
      if (p < 0 || static_cast<std::size_t>(p) >= n) {
        throw Error(ErrorKind::InvalidSegmentation, ctx + ": point index " + std::to_string(p) + " out of range");
      }
      if (cloud.instances[static_cast<std::size_t>(p)] >= 0) {
        throw Error(ErrorKind::InvalidSegmentation, ctx + ": point " + std::to_string(p) + " annotated twice");
      }
      cloud.instances[static_cast<std::size_t>(p)] = static_cast<int>(k);
      cloud.semantics[static_cast<std::size_t>(p)] = id;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cloud.instances[i] < 0) {
      throw Error(ErrorKind::InvalidSegmentation, annotation_file + ": point " + std::to_string(i) + " has no annotation");
    }
  }
  cloud.validate();
  normalize_cloud(cloud);

  ShapeRecord r;
  r.name = fs::path(cloud_file).stem().string();
  r.cloud = std::move(cloud);
  r.hierarchy = build_hierarchy(r.cloud.segments(), taxonomy, r.cloud.points);
  for (auto& node : r.hierarchy.nodes) {
    std::vector<Vec3> pts;
    for (int i : node.point_indices) pts.push_back(r.cloud.points[static_cast<std::size_t>(i)]);
    node.box = pca_obb(pts);
  }
  relation_ground_truth(r.hierarchy);
  return r;
}

ImportReport import_directory(const std::string& source, const std::string& out, const Taxonomy& taxonomy,
                              const std::string& category) {
  ImportReport report;
  std::vector<fs::path> clouds;
  if (fs::is_directory(source)) {
    for (const auto& e : fs::directory_iterator(source)) {
      if (e.is_regular_file() && e.path().extension() == ".pts") clouds.push_back(e.path());
    }
  } else {
    report.notes.push_back("source is not a directory: " + source);
  }
  std::sort(clouds.begin(), clouds.end());
  if (clouds.empty()) report.notes.push_back("no shapes found in " + source);

  Dataset d;
  d.directory = out;
  d.category = category;
  d.taxonomy = taxonomy;
  fs::create_directories(out);
  for (const auto& cloud : clouds) {
    const std::string name = cloud.stem().string();
    fs::path ann = cloud;
    ann.replace_extension(".json");
    if (!fs::exists(ann)) {
      report.skipped.emplace_back(name, "missing annotation file");
      continue;
    }
    try {
      ShapeRecord r = import_partnet(cloud.string(), ann.string(), taxonomy);
      r.category = category;
      const std::string file = name + ".json";
      save_shape(r, (fs::path(out) / file).string());
      d.entries.push_back({file, split_for_index(d.entries.size())});
      report.imported.push_back(name);
    } catch (const Error& e) {
      report.skipped.emplace_back(name, std::string(to_string(e.kind())) + ": " + e.what());
    }
  }
  save_manifest(d);
  return report;
}

}  // namespace sseg
