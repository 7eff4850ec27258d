#include "sseg/nn/pipeline.hpp"

#include "sseg/error.hpp"
#include "sseg/parallel.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <numeric>

namespace sseg::nn {

namespace {

std::vector<Vec3> gather(std::span<const Vec3> points, const std::vector<int>& indices, std::size_t limit) {
  std::vector<Vec3> out;
  if (limit == 0 || indices.size() <= limit) {
    out.reserve(indices.size());
    for (int i : indices) out.push_back(points[static_cast<std::size_t>(i)]);
    return out;
  }
  out.reserve(limit);
  for (std::size_t k = 0; k < limit; ++k) {
    out.push_back(points[static_cast<std::size_t>(indices[k * indices.size() / limit])]);
  }
  return out;
}

Tensor feature_tensor(const PartNode& n) {
  if (!n.feature) {
    throw Error(ErrorKind::InvalidArgument, "node " + std::to_string(n.id) + " carries no inferred feature");
  }
  return Tensor::vector(*n.feature);
}

}  // namespace

StructureForward forward_structure(Graph& g, const Hierarchy& skeleton, std::span<const Vec3> points,
                                   const InferenceConfig& config) {
  if (skeleton.root < 0) throw Error(ErrorKind::EmptyShape, "forward_structure: empty hierarchy");
  const std::size_t n = skeleton.size();
  StructureForward out;
  out.encoded.resize(n);
  out.refined.resize(n);
  out.boxes.resize(n);

  std::function<Var(NodeId)> encode = [&](NodeId id) -> Var {
    const auto& node = skeleton.node(id);
    Var x;
    if (node.is_leaf()) {
      if (node.point_indices.empty()) {
        throw Error(ErrorKind::EmptyPointSet, "leaf " + std::to_string(id) + " has no points");
      }
      x = encode_part(g, g.constant(points_tensor(gather(points, node.point_indices, config.max_part_points))));
    } else {
      std::vector<Var> children;
      for (NodeId c : node.children) children.push_back(encode(c));
      x = aggregate_children(g, children);
    }
    out.encoded[static_cast<std::size_t>(id)] = x;
    return x;
  };
  encode(skeleton.root);

  out.refined[static_cast<std::size_t>(skeleton.root)] = out.encoded[static_cast<std::size_t>(skeleton.root)];
  for (NodeId parent : skeleton.breadth_first()) {
    const auto& children = skeleton.node(parent).children;
    if (children.empty()) continue;
    std::vector<Var> ctx;
    for (NodeId c : children) {
      ctx.push_back(inject_parent_context(g, out.encoded[static_cast<std::size_t>(c)],
                                          out.refined[static_cast<std::size_t>(parent)]));
    }
    std::vector<KeptEdge> edges;
    for (std::size_t i = 0; i < children.size(); ++i) {
      for (std::size_t j = i + 1; j < children.size(); ++j) {
        const auto rel = classify_relations(g, ctx[i], ctx[j]);
        out.pairs.push_back({std::min(children[i], children[j]), std::max(children[i], children[j]), rel.probs});
        if (edge_kept(rel.probs.value())) edges.push_back({i, j, rel.edge});
      }
    }
    const auto updated = message_pass(g, ctx, edges);
    for (std::size_t i = 0; i < children.size(); ++i) out.refined[static_cast<std::size_t>(children[i])] = updated[i];
  }

  for (std::size_t id = 0; id < n; ++id) {
    const auto& node = skeleton.node(static_cast<NodeId>(id));
    const auto pts = gather(points, node.point_indices, 0);
    out.boxes[id] = decode_box(g, out.refined[id], pts, config.shape_diagonal);
  }
  return out;
}

Hierarchy infer_structure(const ModelParams& params, const Hierarchy& skeleton, std::span<const Vec3> points,
                          const InferenceConfig& config) {
  Graph g(params);
  const auto fwd = forward_structure(g, skeleton, points, config);
  Hierarchy h = skeleton;
  h.relations.clear();
  for (auto& node : h.nodes) {
    const auto id = static_cast<std::size_t>(node.id);
    node.box = fwd.boxes[id].box();
    const Tensor& f = fwd.refined[id].value();
    node.feature = std::vector<double>(f.values().begin(), f.values().end());
  }
  for (const auto& p : fwd.pairs) {
    RelationSet types;
    const Tensor& probs = p.probs.value();
    for (int t = 0; t < kRelationTypeCount; ++t) {
      if (probs[static_cast<std::size_t>(t)] > kEdgeKeepThreshold) types.insert(static_cast<RelationType>(t));
    }
    if (!types.empty()) h.set_relation(p.a, p.b, types);
  }
  return h;
}

Hierarchy rule_based_structure(const Hierarchy& skeleton, std::span<const Vec3> points) {
  Hierarchy h = skeleton;
  h.relations.clear();
  for (auto& node : h.nodes) node.box = pca_obb(gather(points, node.point_indices, 0));
  return h;
}

Var score_candidate(Graph& g, const Hierarchy& inferred, std::span<const Vec3> points, NodeId source,
                    NodeId target, const InferenceConfig& config) {
  auto side = [&](NodeId id) {
    const auto& node = inferred.node(id);
    Var c = encode_candidate(g, gather(points, node.point_indices, config.max_part_points), node.semantic);
    return fuse_node_feature(g, c, g.constant(feature_tensor(node)));
  };
  Var ci = side(source);
  Var cj = side(target);
  Var m = build_merge_feature(g, ci, cj);
  Var code = fuse_structure_code(g, m, g.constant(feature_tensor(inferred.node(inferred.root))));
  return predict_merge(g, code);
}

std::vector<MergeDecision> score_candidates(const ModelParams& params, const Hierarchy& inferred,
                                            std::span<const Vec3> points, const CandidateMatrix& candidates,
                                            const InferenceConfig& config) {
  std::vector<MergeDecision> out;
  for (const auto& e : candidates.entries) {
    Graph g(params);
    const double score = score_candidate(g, inferred, points, e.source, e.target, config).item();
    out.push_back({e.source, e.target, score, false});
  }
  return out;
}

PipelineOutput run_pipeline(const ModelParams& params, const LabeledCloud& cloud, const Taxonomy& taxonomy,
                            const InferenceConfig& config) {
  PipelineOutput out;
  const auto segments = cloud.segments();
  const Hierarchy skeleton = build_hierarchy(segments, taxonomy, cloud.points);
  out.initial = infer_structure(params, skeleton, cloud.points, config);
  out.candidates = detect_conflicts(out.initial, config.iou_threshold, config.iou);
  const auto decisions = score_candidates(params, out.initial, cloud.points, out.candidates, config);
  out.merged = apply_merges(cloud.points, segments, out.initial, decisions, taxonomy, config.merge_threshold);
  const bool changed = std::any_of(out.merged.decisions.begin(), out.merged.decisions.end(),
                                   [](const MergeDecision& d) { return d.applied; });
  out.final = changed ? infer_structure(params, out.merged.hierarchy, cloud.points, config) : out.initial;
  return out;
}

std::vector<int> true_parts(const ShapeRecord& record) {
  std::vector<int> parent(record.cloud.instance_count());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (const auto& [s, t] : record.gt_merges) {
    if (s < 0 || t < 0 || static_cast<std::size_t>(s) >= parent.size() || static_cast<std::size_t>(t) >= parent.size()) {
      throw Error(ErrorKind::UnknownNode, "gt merge references unknown instance");
    }
    const int a = find(s), b = find(t);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<int> out(parent.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = find(static_cast<int>(i));
  return out;
}

int merge_label(const std::vector<int>& parts, NodeId source, NodeId target) {
  return parts.at(static_cast<std::size_t>(source)) == parts.at(static_cast<std::size_t>(target)) ? 1 : 0;
}

namespace {

std::vector<ScoredSegment> scored(const std::vector<Segment>& segments) {
  std::vector<ScoredSegment> out;
  for (const auto& s : segments) out.push_back({s.point_indices, s.semantic, 1.0});
  return out;
}

}  // namespace

PipelineMetrics evaluate_pipeline(const ModelParams& params, std::span<const ShapeRecord> records,
                                  const Taxonomy& taxonomy, const InferenceConfig& config, int jobs) {
  struct Item {
    ShapeMetrics shape;
    double map_before = 0.0;
    long candidates = 0;
    long correct = 0;
  };
  std::vector<Item> items(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const auto& r = records[i];
    const auto out = run_pipeline(params, r.cloud, taxonomy, config);
    const auto gt_segments = leaf_segments(r.hierarchy);
    Item& it = items[i];
    it.shape.name = r.name;
    it.shape.ap_25 = part_ap(out.final, r.hierarchy, kPartIouThreshold, config.iou);
    it.shape.edge_error = edge_error(out.final, r.hierarchy, config.iou);
    it.shape.map = segmentation_map(leaf_segments(out.final), gt_segments, r.cloud.size()).mean;
    it.map_before = segmentation_map(scored(r.cloud.segments()), gt_segments, r.cloud.size()).mean;
    const auto parts = true_parts(r);
    for (const auto& d : out.merged.decisions) {
      ++it.candidates;
      if ((d.applied ? 1 : 0) == merge_label(parts, d.source, d.target)) ++it.correct;
    }
  });
  PipelineMetrics m;
  std::vector<double> before;
  for (const auto& it : items) {
    m.report.per_shape.push_back(it.shape);
    before.push_back(it.map_before);
    m.candidates += it.candidates;
    m.correct += it.correct;
  }
  m.report.finalize();
  m.map_before = before.empty() ? 0.0 : compensated_sum(before) / static_cast<double>(before.size());
  return m;
}

MetricReport evaluate_rule_based(std::span<const ShapeRecord> records, const Taxonomy& taxonomy, int jobs) {
  MetricReport report;
  report.per_shape.resize(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const auto& r = records[i];
    const auto segments = r.cloud.segments();
    const Hierarchy pred = rule_based_structure(build_hierarchy(segments, taxonomy, r.cloud.points), r.cloud.points);
    ShapeMetrics& s = report.per_shape[i];
    s.name = r.name;
    s.ap_25 = part_ap(pred, r.hierarchy);
    s.edge_error = edge_error(pred, r.hierarchy);
    s.map = segmentation_map(leaf_segments(pred), leaf_segments(r.hierarchy), r.cloud.size()).mean;
  });
  report.finalize();
  return report;
}

}  // namespace sseg::nn
