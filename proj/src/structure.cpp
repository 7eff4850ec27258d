#include "sseg/structure.hpp"

#include "sseg/error.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <set>

namespace sseg {

// --- Taxonomy ---------------------------------------------------------------

LabelId Taxonomy::add(const nlohmann::json& j, LabelId parent) {
  if (!j.is_object() || !j.contains("label") || !j["label"].is_string()) {
    throw Error(ErrorKind::ParseError, "taxonomy node requires a string field 'label'");
  }
  const std::string label = j["label"].get<std::string>();
  for (const auto& e : entries_) {
    if (e.label == label) throw Error(ErrorKind::ParseError, "taxonomy: duplicate label '" + label + "'");
  }
  const auto id = static_cast<LabelId>(entries_.size());
  Entry entry;
  entry.label = label;
  entry.multi_instance = j.value("multi_instance", false);
  entry.parent = parent;
  entries_.push_back(entry);
  if (j.contains("children")) {
    if (!j["children"].is_array()) throw Error(ErrorKind::ParseError, "taxonomy: 'children' must be an array");
    for (const auto& child : j["children"]) {
      const LabelId cid = add(child, id);
      entries_[static_cast<std::size_t>(id)].children.push_back(cid);
    }
  }
  return id;
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
  Taxonomy t;
  t.add(j, -1);
  return t;
}

Taxonomy Taxonomy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open taxonomy file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json Taxonomy::to_json() const {
  std::function<nlohmann::json(LabelId)> emit = [&](LabelId id) {
    const auto& e = entry(id);
    nlohmann::json j;
    j["label"] = e.label;
    j["multi_instance"] = e.multi_instance;
    j["children"] = nlohmann::json::array();
    for (LabelId c : e.children) j["children"].push_back(emit(c));
    return j;
  };
  return entries_.empty() ? nlohmann::json::object() : emit(0);
}

void Taxonomy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write taxonomy file " + path);
  out << to_json().dump(2) << '\n';
}

const Taxonomy::Entry& Taxonomy::entry(LabelId id) const {
  if (!contains(id)) throw Error(ErrorKind::UnknownLabel, "unknown label id " + std::to_string(id));
  return entries_[static_cast<std::size_t>(id)];
}

LabelId Taxonomy::id_of(std::string_view label) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].label == label) return static_cast<LabelId>(i);
  }
  throw Error(ErrorKind::UnknownLabel, "unknown label '" + std::string(label) + "'");
}

std::vector<LabelId> Taxonomy::chain(LabelId id) const {
  std::vector<LabelId> out;
  for (LabelId cur = id; cur >= 0; cur = entry(cur).parent) out.push_back(cur);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<LabelId> Taxonomy::leaf_labels() const {
  std::vector<LabelId> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].children.empty()) out.push_back(static_cast<LabelId>(i));
  }
  return out;
}

bool operator==(const Taxonomy& a, const Taxonomy& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.label != y.label || x.multi_instance != y.multi_instance || x.parent != y.parent ||
        x.children != y.children) {
      return false;
    }
  }
  return true;
}

// --- Relations ----------------------------------------------------------------

std::string_view to_string(RelationType t) {
  switch (t) {
    case RelationType::Translational: return "translational";
    case RelationType::Rotational: return "rotational";
    case RelationType::Reflective: return "reflective";
    case RelationType::Adjacent: return "adjacent";
  }
  return "unknown";
}

RelationType relation_from_string(std::string_view s) {
  for (int k = 0; k < kRelationTypeCount; ++k) {
    const auto t = static_cast<RelationType>(k);
    if (to_string(t) == s) return t;
  }
  throw Error(ErrorKind::ParseError, "unknown relation type '" + std::string(s) + "'");
}

int RelationSet::size() const {
  int n = 0;
  for (int k = 0; k < kRelationTypeCount; ++k) n += (bits_ >> k) & 1;
  return n;
}

std::vector<RelationType> RelationSet::types() const {
  std::vector<RelationType> out;
  for (int k = 0; k < kRelationTypeCount; ++k) {
    if ((bits_ >> k) & 1) out.push_back(static_cast<RelationType>(k));
  }
  return out;
}

// --- Hierarchy ----------------------------------------------------------------

int Hierarchy::depth(NodeId id) const {
  int d = 0;
  for (NodeId cur = node(id).parent; cur >= 0; cur = node(cur).parent) {
    if (++d > static_cast<int>(nodes.size())) throw Error(ErrorKind::InvalidArgument, "hierarchy has a cycle");
  }
  return d;
}

std::vector<NodeId> Hierarchy::leaves() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes) {
    if (n.is_leaf()) out.push_back(n.id);
  }
  return out;
}

std::vector<NodeId> Hierarchy::breadth_first() const {
  std::vector<NodeId> out;
  if (root < 0) return out;
  out.push_back(root);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (NodeId c : node(out[i]).children) out.push_back(c);
  }
  return out;
}

std::vector<Relation> Hierarchy::relations_of(NodeId parent) const {
  std::vector<Relation> out;
  for (const auto& r : relations) {
    if (node(r.a).parent == parent) out.push_back(r);
  }
  return out;
}

RelationSet Hierarchy::relation(NodeId a, NodeId b) const {
  if (a > b) std::swap(a, b);
  for (const auto& r : relations) {
    if (r.a == a && r.b == b) return r.types;
  }
  return {};
}

void Hierarchy::set_relation(NodeId a, NodeId b, RelationSet types) {
  if (a > b) std::swap(a, b);
  auto it = std::find_if(relations.begin(), relations.end(),
                         [&](const Relation& r) { return r.a == a && r.b == b; });
  if (types.empty()) {
    if (it != relations.end()) relations.erase(it);
    return;
  }
  if (it != relations.end()) {
    it->types = types;
  } else {
    relations.push_back({a, b, types});
  }
}

void Hierarchy::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, "hierarchy: " + msg); };
  if (root < 0 || static_cast<std::size_t>(root) >= nodes.size()) fail("missing root");
  if (node(root).parent != -1) fail("root has a parent");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.id != static_cast<NodeId>(i)) fail("node id does not match its slot");
    if (static_cast<NodeId>(i) != root && n.parent < 0) fail("second root " + std::to_string(i));
    if (n.children.size() > kMaxSubsetSize) fail("subset larger than 10 under node " + std::to_string(i));
    if (n.is_leaf() && n.point_indices.empty()) fail("leaf without points " + std::to_string(i));
    if (n.feature && n.feature->size() != static_cast<std::size_t>(kFeatureWidth)) fail("feature width");
    for (NodeId c : n.children) {
      if (c < 0 || static_cast<std::size_t>(c) >= nodes.size() || node(c).parent != n.id) {
        fail("inconsistent parent link at node " + std::to_string(i));
      }
    }
  }
  if (breadth_first().size() != nodes.size()) fail("unreachable nodes or cycle");
  for (const auto& r : relations) {
    if (r.a == r.b || node(r.a).parent != node(r.b).parent) fail("relation between non-siblings");
  }
}

// --- Construction -------------------------------------------------------------

std::vector<std::vector<int>> single_linkage(std::span<const Vec3> positions, double cut) {
  const int n = static_cast<int>(positions.size());
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((positions[i] - positions[j]).norm() <= cut) {
        const int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& [_, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

namespace {

// Splits `items` into groups of at most kMaxSubsetSize by repeatedly cutting
// the longest minimum-spanning-tree edge inside an oversized component.
std::vector<std::vector<int>> split_oversized(std::span<const Vec3> positions) {
  const int n = static_cast<int>(positions.size());
  struct Edge {
    int a, b;
    double length;
  };
  std::vector<Edge> mst;
  std::vector<bool> in_tree(static_cast<std::size_t>(n), false);
  std::vector<double> best(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<int> from(static_cast<std::size_t>(n), -1);
  best[0] = 0.0;
  for (int step = 0; step < n; ++step) {
    int u = -1;
    for (int i = 0; i < n; ++i) {
      if (!in_tree[i] && (u < 0 || best[i] < best[u])) u = i;
    }
    in_tree[u] = true;
    if (from[u] >= 0) mst.push_back({from[u], u, best[u]});
    for (int v = 0; v < n; ++v) {
      const double d = (positions[u] - positions[v]).norm();
      if (!in_tree[v] && d < best[v]) {
        best[v] = d;
        from[v] = u;
      }
    }
  }

  std::vector<bool> removed(mst.size(), false);
  auto components = [&]() {
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    for (std::size_t e = 0; e < mst.size(); ++e) {
      if (!removed[e]) {
        const int a = find(mst[e].a), b = find(mst[e].b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& [_, g] : groups) out.push_back(std::move(g));
    return out;
  };

  for (;;) {
    auto groups = components();
    const auto big = std::find_if(groups.begin(), groups.end(),
                                  [](const auto& g) { return g.size() > kMaxSubsetSize; });
    if (big == groups.end()) {
      std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
      return groups;
    }
    const std::set<int> members(big->begin(), big->end());
    std::size_t cut = mst.size();
    for (std::size_t e = 0; e < mst.size(); ++e) {
      if (removed[e] || !members.count(mst[e].a)) continue;
      if (cut == mst.size() || mst[e].length > mst[cut].length) cut = e;
    }
    removed[cut] = true;
  }
}

class Builder {
 public:
  Builder(std::span<const Segment> segments, const Taxonomy& taxonomy, std::span<const Vec3> points)
      : segments_(segments), taxonomy_(taxonomy), points_(points) {}

  Hierarchy run() {
    if (segments_.empty()) throw Error(ErrorKind::EmptyShape, "build_hierarchy: no segments");
    validate_segments();
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      PartNode leaf;
      leaf.id = static_cast<NodeId>(i);
      leaf.semantic = segments_[i].semantic;
      leaf.point_indices = segments_[i].point_indices;
      std::sort(leaf.point_indices.begin(), leaf.point_indices.end());
      h_.nodes.push_back(std::move(leaf));
    }
    std::vector<Vec3> all;
    all.reserve(points_.size());
    for (const auto& s : segments_) {
      for (int p : s.point_indices) all.push_back(points_[static_cast<std::size_t>(p)]);
    }
    cut_ = kClusterCut * aabb_diagonal(all);

    std::vector<int> everything(segments_.size());
    std::iota(everything.begin(), everything.end(), 0);
    if (segments_.size() == 1 && segments_[0].semantic == 0) {
      h_.root = 0;
    } else {
      std::vector<NodeId> children;
      std::vector<int> below;
      for (int s : everything) {
        if (segments_[static_cast<std::size_t>(s)].semantic == 0) {
          children.push_back(s);
        } else {
          below.push_back(s);
        }
      }
      append(children, grouped_children(0, below));
      h_.root = make_internal(0, std::move(children));
    }
    return std::move(h_);
  }

 private:
  void validate_segments() const {
    std::vector<bool> seen(points_.size(), false);
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& s = segments_[i];
      if (!taxonomy_.contains(s.semantic)) {
        throw Error(ErrorKind::UnknownLabel, "segment " + std::to_string(i) + " has unknown label " +
                                                 std::to_string(s.semantic));
      }
      if (s.point_indices.empty()) {
        throw Error(ErrorKind::InvalidSegmentation, "segment " + std::to_string(i) + " is empty");
      }
      for (int p : s.point_indices) {
        if (p < 0 || static_cast<std::size_t>(p) >= points_.size()) {
          throw Error(ErrorKind::InvalidSegmentation, "segment " + std::to_string(i) + " index out of range");
        }
        if (seen[static_cast<std::size_t>(p)]) {
          throw Error(ErrorKind::InvalidSegmentation, "point " + std::to_string(p) + " appears in two segments");
        }
        seen[static_cast<std::size_t>(p)] = true;
      }
    }
  }

  static void append(std::vector<NodeId>& dst, const std::vector<NodeId>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  }

  // Nodes for the children of label `parent` given the segments strictly below it.
  std::vector<NodeId> grouped_children(LabelId parent, const std::vector<int>& below) {
    std::vector<NodeId> out;
    const int depth = static_cast<int>(taxonomy_.chain(parent).size());
    for (LabelId child : taxonomy_.entry(parent).children) {
      std::vector<int> mine;
      for (int s : below) {
        const auto chain = taxonomy_.chain(segments_[static_cast<std::size_t>(s)].semantic);
        if (static_cast<int>(chain.size()) > depth && chain[static_cast<std::size_t>(depth)] == child) {
          mine.push_back(s);
        }
      }
      if (!mine.empty()) append(out, instances_of(child, mine));
    }
    return out;
  }

  // Nodes standing for label `label`: one leaf per exactly-labelled segment and
  // one internal node per spatial cluster of deeper segments.
  std::vector<NodeId> instances_of(LabelId label, const std::vector<int>& segs) {
    std::vector<NodeId> out;
    std::vector<int> below;
    for (int s : segs) {
      if (segments_[static_cast<std::size_t>(s)].semantic == label) {
        out.push_back(s);
      } else {
        below.push_back(s);
      }
    }
    if (!below.empty()) {
      std::vector<std::vector<int>> clusters;
      if (taxonomy_.entry(label).multi_instance) {
        std::vector<Vec3> centers;
        for (int s : below) centers.push_back(segment_centroid(s));
        for (const auto& c : single_linkage(centers, cut_)) {
          std::vector<int> members;
          for (int k : c) members.push_back(below[static_cast<std::size_t>(k)]);
          clusters.push_back(std::move(members));
        }
      } else {
        clusters.push_back(below);
      }
      for (const auto& cluster : clusters) {
        out.push_back(make_internal(label, grouped_children(label, cluster)));
      }
    }
    std::sort(out.begin(), out.end(), [&](NodeId a, NodeId b) { return min_leaf(a) < min_leaf(b); });
    return out;
  }

  Vec3 segment_centroid(int s) const {
    Vec3 sum = Vec3::Zero();
    const auto& idx = segments_[static_cast<std::size_t>(s)].point_indices;
    for (int p : idx) sum += points_[static_cast<std::size_t>(p)];
    return sum / static_cast<double>(idx.size());
  }

  Vec3 node_centroid(NodeId id) const {
    Vec3 sum = Vec3::Zero();
    const auto& idx = h_.node(id).point_indices;
    for (int p : idx) sum += points_[static_cast<std::size_t>(p)];
    return sum / static_cast<double>(idx.size());
  }

  int min_leaf(NodeId id) const {
    const auto& n = h_.node(id);
    if (n.is_leaf()) return n.id;
    int best = std::numeric_limits<int>::max();
    for (NodeId c : n.children) best = std::min(best, min_leaf(c));
    return best;
  }

  NodeId make_internal(LabelId label, std::vector<NodeId> children) {
    std::sort(children.begin(), children.end(), [&](NodeId a, NodeId b) { return min_leaf(a) < min_leaf(b); });
    while (children.size() > kMaxSubsetSize) {
      std::vector<Vec3> centers;
      for (NodeId c : children) centers.push_back(node_centroid(c));
      std::vector<NodeId> regrouped;
      for (const auto& group : split_oversized(centers)) {
        if (group.size() == 1) {
          regrouped.push_back(children[static_cast<std::size_t>(group.front())]);
          continue;
        }
        std::vector<NodeId> members;
        for (int k : group) members.push_back(children[static_cast<std::size_t>(k)]);
        regrouped.push_back(new_node(label, std::move(members)));
      }
      children = std::move(regrouped);
    }
    return new_node(label, std::move(children));
  }

  NodeId new_node(LabelId label, std::vector<NodeId> children) {
    PartNode n;
    n.id = static_cast<NodeId>(h_.nodes.size());
    n.semantic = label;
    for (NodeId c : children) {
      const auto& idx = h_.node(c).point_indices;
      n.point_indices.insert(n.point_indices.end(), idx.begin(), idx.end());
    }
    std::sort(n.point_indices.begin(), n.point_indices.end());
    for (NodeId c : children) h_.node(c).parent = n.id;
    n.children = std::move(children);
    h_.nodes.push_back(std::move(n));
    return h_.nodes.back().id;
  }

  std::span<const Segment> segments_;
  const Taxonomy& taxonomy_;
  std::span<const Vec3> points_;
  double cut_ = 0.0;
  Hierarchy h_;
};

}  // namespace

Hierarchy build_hierarchy(std::span<const Segment> segments, const Taxonomy& taxonomy,
                          std::span<const Vec3> points) {
  return Builder(segments, taxonomy, points).run();
}

// --- Relation ground truth ----------------------------------------------------

namespace {

bool same_frame(const OrientedBox& a, const OrientedBox& b, double tol) {
  return (a.rotation().matrix() - b.rotation().matrix()).cwiseAbs().maxCoeff() <= tol;
}

bool corners_match(const std::array<Vec3, 8>& a, const std::array<Vec3, 8>& b, double tol) {
  for (const auto& p : a) {
    const bool hit = std::any_of(b.begin(), b.end(), [&](const Vec3& q) { return (p - q).norm() <= tol; });
    if (!hit) return false;
  }
  return true;
}

Vec3 sorted_extents(const OrientedBox& b) {
  Vec3 s = b.scale();
  std::sort(s.data(), s.data() + 3);
  return s;
}

// Canonical orientation of an offset: first significant component positive.
Vec3 canonical_offset(Vec3 d, double tol) {
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) > tol) return d[k] < 0.0 ? Vec3(-d) : d;
  }
  return d;
}

}  // namespace

void relation_ground_truth(Hierarchy& h, double tol) {
  for (auto& n : h.nodes) {
    if (!n.box) throw Error(ErrorKind::MissingGeometry, "relation_ground_truth: node " + std::to_string(n.id) + " has no box");
  }
  h.relations.clear();
  for (const auto& parent : h.nodes) {
    const auto& kids = parent.children;
    if (kids.size() < 2) continue;

    std::vector<OrientedBox> boxes;
    for (NodeId c : kids) boxes.push_back(*h.node(c).box);
    Vec3 center = Vec3::Zero();
    Vec3 lo = boxes.front().translation(), hi = lo;
    for (const auto& b : boxes) {
      center += b.translation();
      lo = lo.cwiseMin(b.translation());
      hi = hi.cwiseMax(b.translation());
    }
    center /= static_cast<double>(boxes.size());
    int axis = 0;
    const Vec3 spread = hi - lo;
    for (int k = 1; k < 3; ++k) {
      if (spread[k] > spread[axis]) axis = k;
    }
    const Vec3 normal = Vec3::Unit(axis);

    const std::size_t m = kids.size();
    // Translational candidates: identical geometry up to translation.
    std::vector<std::tuple<std::size_t, std::size_t, Vec3>> congruent;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        if (same_frame(boxes[i], boxes[j], tol) &&
            (boxes[i].scale() - boxes[j].scale()).cwiseAbs().maxCoeff() <= tol) {
          congruent.emplace_back(i, j, canonical_offset(boxes[j].translation() - boxes[i].translation(), tol));
        }
      }
    }

    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        const auto& a = boxes[i];
        const auto& b = boxes[j];
        RelationSet types;

        if (box_iou(a, b) > 0.0 || box_gap(a, b) < tol) types.insert(RelationType::Adjacent);

        auto reflect = [&](const Vec3& p) { return Vec3(p - 2.0 * (p - center).dot(normal) * normal); };
        auto ca = a.corners();
        for (auto& p : ca) p = reflect(p);
        if ((a.translation() - b.translation()).norm() > tol && corners_match(ca, b.corners(), tol)) {
          types.insert(RelationType::Reflective);
        }

        for (const auto& [p, q, offset] : congruent) {
          if (p != i || q != j) continue;
          int shared = 0;
          for (const auto& other : congruent) {
            if ((std::get<2>(other) - offset).norm() <= tol) ++shared;
          }
          if (shared >= 2) types.insert(RelationType::Translational);
        }

        const double ra = (a.translation() - center).norm();
        const double rb = (b.translation() - center).norm();
        if (ra > tol && std::abs(ra - rb) <= tol &&
            (sorted_extents(a) - sorted_extents(b)).cwiseAbs().maxCoeff() <= tol &&
            (a.translation() - b.translation()).norm() > tol) {
          types.insert(RelationType::Rotational);
        }

        if (!types.empty()) h.set_relation(kids[i], kids[j], types);
      }
    }
  }
  std::sort(h.relations.begin(), h.relations.end(),
            [](const Relation& x, const Relation& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
}

}  // namespace sseg
