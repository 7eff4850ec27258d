#pragma once

#include "sseg/structure.hpp"

#include <istream>
#include <ostream>
#include <vector>

namespace sseg {

inline constexpr double kConflictIouThreshold = 0.09;
inline constexpr double kMergeThreshold = 0.7;

struct CandidateEntry {
  NodeId source = -1;
  NodeId target = -1;
  double conflict_score = 0.0;
};

/// Directional merge candidates: at most one target per source leaf.
struct CandidateMatrix {
  std::vector<CandidateEntry> entries;  // sorted by source

  bool contains(NodeId source, NodeId target) const;
};

struct MergeDecision {
  NodeId source = -1;
  NodeId target = -1;
  double score = 0.0;
  bool applied = false;
};

/// For every leaf keep the overlapping leaf with the largest box IoU strictly
/// above `iou_threshold` (ties to the lower target id).
CandidateMatrix detect_conflicts(const Hierarchy& h, double iou_threshold = kConflictIouThreshold,
                                 const IouConfig& iou = {});

/// Candidacy rule shared with detect_conflicts.
inline bool is_conflict(double score, double iou_threshold) { return score > iou_threshold; }
/// Execution rule shared with apply_merges.
inline bool is_merge(double score, double merge_threshold) { return score > merge_threshold; }

struct MergeResult {
  std::vector<Segment> segments;
  Hierarchy hierarchy;
  /// Decisions with `applied` filled in.
  std::vector<MergeDecision> decisions;
  /// For every input segment, the index of the output segment holding its points.
  std::vector<int> segment_map;
};

/// Attaches each applied source segment to its (chased) target and rebuilds
/// the hierarchy. Boxes on the rebuilt hierarchy are left empty.
MergeResult apply_merges(std::span<const Vec3> points, std::span<const Segment> segments, const Hierarchy& h,
                         const std::vector<MergeDecision>& decisions, const Taxonomy& taxonomy,
                         double merge_threshold = kMergeThreshold);

/// JSON lines: {"source":int,"target":int,"score":float}
void write_decisions(std::ostream& out, const std::vector<MergeDecision>& decisions);
std::vector<MergeDecision> read_decisions(std::istream& in);

}  // namespace sseg
