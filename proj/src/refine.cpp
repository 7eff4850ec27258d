#include "sseg/refine.hpp"

#include "sseg/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <string>

namespace sseg {

bool CandidateMatrix::contains(NodeId source, NodeId target) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const CandidateEntry& e) { return e.source == source && e.target == target; });
}

CandidateMatrix detect_conflicts(const Hierarchy& h, double iou_threshold, const IouConfig& iou) {
  const auto leaves = h.leaves();
  for (NodeId l : leaves) {
    if (!h.node(l).box) {
      throw Error(ErrorKind::MissingGeometry, "detect_conflicts: leaf " + std::to_string(l) + " has no box");
    }
  }
  const std::size_t n = leaves.size();
  std::vector<double> score(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = box_iou(*h.node(leaves[i]).box, *h.node(leaves[j]).box, iou);
      score[i * n + j] = v;
      score[j * n + i] = v;
    }
  }
  CandidateMatrix out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !is_conflict(score[i * n + j], iou_threshold)) continue;
      if (best == n || score[i * n + j] > score[i * n + best]) best = j;
    }
    if (best < n) out.entries.push_back({leaves[i], leaves[best], score[i * n + best]});
  }
  return out;
}

MergeResult apply_merges(std::span<const Vec3> points, std::span<const Segment> segments, const Hierarchy& h,
                         const std::vector<MergeDecision>& decisions, const Taxonomy& taxonomy,
                         double merge_threshold) {
  const int n = static_cast<int>(segments.size());
  auto check_leaf = [&](NodeId id) {
    if (id < 0 || id >= n || static_cast<std::size_t>(id) >= h.size() || !h.node(id).is_leaf()) {
      throw Error(ErrorKind::UnknownNode, "merge references unknown leaf " + std::to_string(id));
    }
  };
  std::set<NodeId> sources;
  for (const auto& d : decisions) {
    check_leaf(d.source);
    check_leaf(d.target);
    if (d.source == d.target) {
      throw Error(ErrorKind::InvalidArgument, "merge of leaf " + std::to_string(d.source) + " into itself");
    }
    if (!sources.insert(d.source).second) {
      throw Error(ErrorKind::DuplicateSource, "leaf " + std::to_string(d.source) + " is a source twice");
    }
  }

  MergeResult result;
  std::vector<int> next(static_cast<std::size_t>(n), -1);
  for (auto d : decisions) {
    d.applied = is_merge(d.score, merge_threshold);
    if (d.applied) next[static_cast<std::size_t>(d.source)] = d.target;
    result.decisions.push_back(d);
  }

  // Chase targets to a fixed point; a cycle collapses onto its lowest id.
  std::vector<int> rep(static_cast<std::size_t>(n), -1);
  for (int start = 0; start < n; ++start) {
    std::vector<int> path;
    std::map<int, std::size_t> position;
    int cur = start;
    int found = -1;
    while (true) {
      if (rep[cur] >= 0) {
        found = rep[cur];
        break;
      }
      if (auto it = position.find(cur); it != position.end()) {
        found = *std::min_element(path.begin() + static_cast<std::ptrdiff_t>(it->second), path.end());
        break;
      }
      position[cur] = path.size();
      path.push_back(cur);
      if (next[cur] < 0) {
        found = cur;
        break;
      }
      cur = next[cur];
    }
    for (int p : path) rep[p] = found;
  }

  std::map<int, int> slot;
  for (int i = 0; i < n; ++i) {
    if (rep[i] == i) {
      slot[i] = static_cast<int>(result.segments.size());
      result.segments.push_back({{}, segments[static_cast<std::size_t>(i)].semantic});
    }
  }
  result.segment_map.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int s = slot.at(rep[i]);
    result.segment_map[static_cast<std::size_t>(i)] = s;
    auto& dst = result.segments[static_cast<std::size_t>(s)].point_indices;
    const auto& src = segments[static_cast<std::size_t>(i)].point_indices;
    dst.insert(dst.end(), src.begin(), src.end());
  }
  for (auto& s : result.segments) std::sort(s.point_indices.begin(), s.point_indices.end());
  result.hierarchy = build_hierarchy(result.segments, taxonomy, points);
  return result;
}

void write_decisions(std::ostream& out, const std::vector<MergeDecision>& decisions) {
  for (const auto& d : decisions) {
    nlohmann::json j;
    j["source"] = d.source;
    j["target"] = d.target;
    j["score"] = d.score;
    j["applied"] = d.applied;
    out << j.dump() << '\n';
  }
}

std::vector<MergeDecision> read_decisions(std::istream& in) {
  std::vector<MergeDecision> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MergeDecision d;
      d.source = j.at("source").get<int>();
      d.target = j.at("target").get<int>();
      d.score = j.at("score").get<double>();
      d.applied = j.value("applied", false);
      out.push_back(d);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, "decision line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sseg
