#pragma once

#include "sseg/geom.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sseg {

using LabelId = int;
using NodeId = int;

inline constexpr int kFeatureWidth = 128;
inline constexpr std::size_t kMaxSubsetSize = 10;
/// Single-linkage cut for spatial disambiguation, relative to the shape diagonal.
inline constexpr double kClusterCut = 0.25;
inline constexpr double kRelationTolerance = 0.01;

/// Rooted label tree. Ids are assigned in preorder, so the root is always 0.
class Taxonomy {
 public:
  struct Entry {
    std::string label;
    bool multi_instance = false;
    LabelId parent = -1;
    std::vector<LabelId> children;
  };

  Taxonomy() = default;
  /// Schema: {"label": str, "multi_instance": bool (optional), "children": [...]}.
  static Taxonomy from_json(const nlohmann::json& j);
  static Taxonomy load(const std::string& path);
  nlohmann::json to_json() const;
  void save(const std::string& path) const;

  std::size_t size() const { return entries_.size(); }
  bool contains(LabelId id) const { return id >= 0 && id < static_cast<LabelId>(entries_.size()); }
  const Entry& entry(LabelId id) const;
  const std::string& name(LabelId id) const { return entry(id).label; }
  LabelId id_of(std::string_view label) const;
  /// Labels from the root down to `id` inclusive.
  std::vector<LabelId> chain(LabelId id) const;
  std::vector<LabelId> leaf_labels() const;

  friend bool operator==(const Taxonomy& a, const Taxonomy& b);

 private:
  LabelId add(const nlohmann::json& j, LabelId parent);
  std::vector<Entry> entries_;
};

struct Segment {
  std::vector<int> point_indices;
  LabelId semantic = 0;
};

enum class RelationType : std::uint8_t { Translational = 0, Rotational = 1, Reflective = 2, Adjacent = 3 };
inline constexpr int kRelationTypeCount = 4;
std::string_view to_string(RelationType t);
RelationType relation_from_string(std::string_view s);

class RelationSet {
 public:
  RelationSet() = default;
  explicit RelationSet(std::uint8_t bits) : bits_(bits & 0xF) {}
  void insert(RelationType t) { bits_ |= static_cast<std::uint8_t>(1u << static_cast<int>(t)); }
  bool has(RelationType t) const { return (bits_ >> static_cast<int>(t)) & 1u; }
  bool empty() const { return bits_ == 0; }
  int size() const;
  std::uint8_t bits() const { return bits_; }
  std::vector<RelationType> types() const;
  friend bool operator==(RelationSet, RelationSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct Relation {
  NodeId a = -1;
  NodeId b = -1;
  RelationSet types;
};

struct PartNode {
  NodeId id = -1;
  LabelId semantic = 0;
  std::optional<OrientedBox> box;
  std::vector<int> point_indices;  // sorted
  std::optional<std::vector<double>> feature;
  NodeId parent = -1;
  std::vector<NodeId> children;

  bool is_leaf() const { return children.empty(); }
};

/// Part tree: node table indexed by id, parent links, sibling relations.
class Hierarchy {
 public:
  std::vector<PartNode> nodes;
  NodeId root = -1;
  std::vector<Relation> relations;

  const PartNode& node(NodeId id) const { return nodes.at(static_cast<std::size_t>(id)); }
  PartNode& node(NodeId id) { return nodes.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes.size(); }
  NodeId parent_of(NodeId id) const { return node(id).parent; }
  int depth(NodeId id) const;
  /// Leaf ids in ascending order.
  std::vector<NodeId> leaves() const;
  /// Nodes in breadth-first order from the root.
  std::vector<NodeId> breadth_first() const;
  /// Relations among the children of `parent`.
  std::vector<Relation> relations_of(NodeId parent) const;
  /// Throws InvalidArgument describing the first violated invariant.
  void validate() const;
  /// Relation set for an unordered pair, empty when absent.
  RelationSet relation(NodeId a, NodeId b) const;
  void set_relation(NodeId a, NodeId b, RelationSet types);
};

/// Groups segments under their taxonomy parents. Leaf ids equal the segment
/// positions; internal nodes follow in creation order.
Hierarchy build_hierarchy(std::span<const Segment> segments, const Taxonomy& taxonomy,
                          std::span<const Vec3> points);

/// Fills sibling relations from the node boxes with geometric predicates.
void relation_ground_truth(Hierarchy& h, double tol = kRelationTolerance);

/// Single-linkage clusters (connected components at `cut`) of the given
/// positions, ordered by smallest member index.
std::vector<std::vector<int>> single_linkage(std::span<const Vec3> positions, double cut);

}  // namespace sseg
