#include "sseg/metrics.hpp"

#include "sseg/error.hpp"
#include "sseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace sseg {

double compensated_sum(const std::vector<double>& values) {
  double sum = 0.0;
  double c = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      c += (sum - t) + v;
    } else {
      c += (v - t) + sum;
    }
    sum = t;
  }
  return sum + c;
}

double part_ap(const Hierarchy& pred, const Hierarchy& gt, double iou_thresh, const IouConfig& iou) {
  const auto m = match_leaves(pred, gt, MatchCost::Iou, iou);
  long tp = 0;
  for (const auto& [p, g] : m.pairs) {
    if (box_iou(*pred.node(p).box, *gt.node(g).box, iou) >= iou_thresh) ++tp;
  }
  const long fp = static_cast<long>(pred.leaves().size()) - tp;
  const long fn = static_cast<long>(gt.leaves().size()) - tp;
  const long denom = tp + fp + fn;
  return denom > 0 ? static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
}

double edge_error_from_counts(const EdgeCounts& counts) {
  if (counts.pred_total == 0 && counts.gt_total == 0) return 0.0;
  const double ep = counts.precision();
  const double er = counts.recall();
  if (ep + er == 0.0) return 1.0;
  return 1.0 - 2.0 * (er * ep / (er + ep));
}

EdgeCounts edge_counts(const Hierarchy& pred, const Hierarchy& gt, const IouConfig& iou) {
  EdgeCounts counts;
  for (const auto& r : pred.relations) counts.pred_total += r.types.size();
  for (const auto& r : gt.relations) counts.gt_total += r.types.size();
  if (pred.relations.empty()) return counts;

  const auto m = match_same_semantics(pred, gt, iou);
  for (const auto& r : pred.relations) {
    const int ga = m.gt_of(r.a);
    const int gb = m.gt_of(r.b);
    if (ga < 0 || gb < 0 || ga == gb) continue;
    const RelationSet target = gt.relation(ga, gb);
    for (RelationType t : r.types.types()) {
      if (target.has(t)) ++counts.true_pos;
    }
  }
  return counts;
}

double edge_error(const Hierarchy& pred, const Hierarchy& gt, const IouConfig& iou) {
  return edge_error_from_counts(edge_counts(pred, gt, iou));
}

double average_precision(const std::vector<double>& recall, const std::vector<double>& precision) {
  std::vector<double> mrec{0.0};
  std::vector<double> mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

namespace {

std::vector<int> sorted_indices(const ScoredSegment& s, std::size_t num_points, const char* side) {
  std::vector<int> idx = s.point_indices;
  for (int p : idx) {
    if (p < 0 || static_cast<std::size_t>(p) >= num_points) {
      throw Error(ErrorKind::InvalidSegmentation, std::string(side) + " segment index out of range: " +
                                                      std::to_string(p));
    }
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

double point_iou(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace

SegmentationAp segmentation_map(const std::vector<ScoredSegment>& pred, const std::vector<ScoredSegment>& gt,
                                std::size_t num_points, double iou_thresh) {
  std::vector<std::vector<int>> pred_idx, gt_idx;
  for (const auto& s : pred) pred_idx.push_back(sorted_indices(s, num_points, "pred"));
  for (const auto& s : gt) gt_idx.push_back(sorted_indices(s, num_points, "gt"));

  std::set<LabelId> classes;
  for (const auto& s : gt) classes.insert(s.semantic);

  SegmentationAp out;
  std::vector<double> aps;
  for (LabelId c : classes) {
    std::vector<std::size_t> preds, gts;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i].semantic == c) preds.push_back(i);
    }
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (gt[j].semantic == c) gts.push_back(j);
    }
    std::stable_sort(preds.begin(), preds.end(),
                     [&](std::size_t a, std::size_t b) { return pred[a].confidence > pred[b].confidence; });

    std::vector<bool> taken(gts.size(), false);
    std::vector<double> recall, precision;
    long tp = 0;
    long seen = 0;
    for (std::size_t i : preds) {
      double best = -1.0;
      std::size_t best_k = gts.size();
      for (std::size_t k = 0; k < gts.size(); ++k) {
        if (taken[k]) continue;
        const double v = point_iou(pred_idx[i], gt_idx[gts[k]]);
        if (v > best) {
          best = v;
          best_k = k;
        }
      }
      ++seen;
      if (best_k < gts.size() && best >= iou_thresh) {
        taken[best_k] = true;
        ++tp;
      }
      recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    }
    const double ap = preds.empty() ? 0.0 : average_precision(recall, precision);
    out.per_class[c] = ap;
    aps.push_back(ap);
  }
  out.mean = aps.empty() ? 0.0 : compensated_sum(aps) / static_cast<double>(aps.size());
  return out;
}

int structure_difference(const Hierarchy& a, const Hierarchy& b) {
  const auto m = match_same_semantics(a, b);
  int matched = 0;
  for (const auto& [p, g] : m.pairs) {
    if (a.node(p).is_leaf() && b.node(g).is_leaf()) ++matched;
  }
  return static_cast<int>(a.leaves().size() + b.leaves().size()) - 2 * matched;
}

std::vector<ScoredSegment> leaf_segments(const Hierarchy& h) {
  std::vector<ScoredSegment> out;
  for (NodeId l : h.leaves()) {
    const auto& n = h.node(l);
    out.push_back({n.point_indices, n.semantic, 1.0});
  }
  return out;
}

void MetricReport::finalize() {
  std::vector<double> ap, ee, mp;
  for (const auto& s : per_shape) {
    ap.push_back(s.ap_25);
    ee.push_back(s.edge_error);
    mp.push_back(s.map);
  }
  const double n = per_shape.empty() ? 1.0 : static_cast<double>(per_shape.size());
  ap_25 = compensated_sum(ap) / n;
  edge_error = compensated_sum(ee) / n;
  map = compensated_sum(mp) / n;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["ap_25"] = ap_25;
  j["edge_error"] = edge_error;
  j["map"] = map;
  j["shapes"] = per_shape.size();
  j["per_shape"] = nlohmann::json::array();
  for (const auto& s : per_shape) {
    j["per_shape"].push_back({{"name", s.name}, {"ap_25", s.ap_25}, {"edge_error", s.edge_error}, {"map", s.map}});
  }
  return j;
}

std::string MetricReport::to_table(bool ap, bool ee, bool seg_map) const {
  std::size_t width = 5;
  for (const auto& s : per_shape) width = std::max(width, s.name.size());
  std::ostringstream out;
  char buf[64];
  auto row = [&](const std::string& name, double a, double e, double m) {
    out << name << std::string(width - name.size(), ' ');
    if (ap) std::snprintf(buf, sizeof buf, "  %8.4f", a), out << buf;
    if (ee) std::snprintf(buf, sizeof buf, "  %8.4f", e), out << buf;
    if (seg_map) std::snprintf(buf, sizeof buf, "  %8.4f", m), out << buf;
    out << '\n';
  };
  out << "shape" << std::string(width - 5, ' ');
  if (ap) std::snprintf(buf, sizeof buf, "  %8s", "AP@0.25"), out << buf;
  if (ee) std::snprintf(buf, sizeof buf, "  %8s", "EE"), out << buf;
  if (seg_map) std::snprintf(buf, sizeof buf, "  %8s", "mAP@0.5"), out << buf;
  out << '\n';
  for (const auto& s : per_shape) row(s.name, s.ap_25, s.edge_error, s.map);
  row("mean", ap_25, edge_error, map);
  return out.str();
}

RetrievalMode retrieval_mode_from_string(const std::string& name) {
  if (name == "structure") return RetrievalMode::Structure;
  if (name == "chamfer") return RetrievalMode::Chamfer;
  throw Error(ErrorKind::InvalidArgument, "unknown retrieval mode '" + name + "' (structure|chamfer)");
}

std::string to_string(RetrievalMode mode) { return mode == RetrievalMode::Structure ? "structure" : "chamfer"; }

std::vector<RetrievalHit> retrieve(const RetrievalEntry& query, std::span<const RetrievalEntry> corpus,
                                   RetrievalMode mode, std::size_t topk, int jobs) {
  if (query.hierarchy == nullptr) throw Error(ErrorKind::InvalidArgument, "retrieve: query has no hierarchy");
  std::vector<RetrievalHit> hits(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const auto& c = corpus[i];
    if (c.hierarchy == nullptr) throw Error(ErrorKind::InvalidArgument, "retrieve: corpus entry " + c.name + " has no hierarchy");
    hits[i] = {i, c.name, structure_difference(*query.hierarchy, *c.hierarchy), chamfer_sq(query.points, c.points)};
  });
  auto key = [mode](const RetrievalHit& h) {
    return mode == RetrievalMode::Structure ? std::make_tuple(h.structure_distance, h.chamfer, h.index)
                                            : std::make_tuple(0, h.chamfer, h.index);
  };
  std::sort(hits.begin(), hits.end(), [&](const RetrievalHit& a, const RetrievalHit& b) { return key(a) < key(b); });
  if (hits.size() > topk) hits.resize(topk);
  return hits;
}

}  // namespace sseg
