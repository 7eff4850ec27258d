#pragma once

#include "sseg/structure.hpp"

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace sseg {

/// Sentinel cost for forbidden pairs.
inline constexpr double kForbidden = 1e9;

using CostMatrix = Eigen::MatrixXd;

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (pred, gt), sorted by pred
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_gt;
  double total_cost = 0.0;

  /// gt index matched to `pred`, or -1.
  int gt_of(int pred) const;
  int pred_of(int gt) const;
};

/// Minimum-cost assignment of min(n, m) pairs. Among optimal assignments the
/// one that is lexicographically smallest in (row, col) on the shorter side is
/// returned. Pairs with cost >= kForbidden / 2 are reported unmatched and do
/// not count toward total_cost.
Assignment hungarian(const CostMatrix& cost);

/// How leaves are paired for supervision and AP.
enum class MatchCost {
  Iou,     // 1 - box IoU, zero-IoU pairs forbidden
  Corner,  // mean squared distance between nearest corners
};

/// Leaf correspondence on box geometry. Ids in the result are node ids.
Assignment match_leaves(const Hierarchy& pred, const Hierarchy& gt, MatchCost cost = MatchCost::Iou,
                        const IouConfig& iou = {});

/// Per-depth correspondence restricted to equal labels (cost 1 - IoU, or the
/// corner distance). Ids in the result are node ids.
Assignment match_same_semantics(const Hierarchy& pred, const Hierarchy& gt, const IouConfig& iou = {},
                                MatchCost cost = MatchCost::Iou);

/// Mean squared distance from each corner of `pred` to the gt corner in the
/// same octant of the gt frame.
double corner_distance(const OrientedBox& pred, const OrientedBox& gt);

}  // namespace sseg
