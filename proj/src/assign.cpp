#include "sseg/assign.hpp"

#include "sseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace sseg {

int Assignment::gt_of(int pred) const {
  for (const auto& [p, g] : pairs) {
    if (p == pred) return g;
  }
  return -1;
}

int Assignment::pred_of(int gt) const {
  for (const auto& [p, g] : pairs) {
    if (g == gt) return p;
  }
  return -1;
}

namespace {

// Shortest augmenting path with potentials; requires rows <= cols.
// Returns the column assigned to each row.
std::vector<int> solve_rows(const CostMatrix& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  }
  return col_of;
}

double value_of(const CostMatrix& a, const std::vector<int>& col_of) {
  double total = 0.0;
  for (std::size_t i = 0; i < col_of.size(); ++i) total += a(static_cast<Eigen::Index>(i), col_of[i]);
  return total;
}

CostMatrix submatrix(const CostMatrix& a, const std::vector<int>& rows, const std::vector<int>& cols) {
  CostMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = a(rows[r], cols[c]);
  }
  return out;
}

// Lexicographically smallest optimal assignment for rows <= cols.
std::vector<int> lexicographic_rows(const CostMatrix& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  std::vector<int> result(n, -1);
  std::vector<int> free_cols(m);
  for (int j = 0; j < m; ++j) free_cols[j] = j;

  for (int i = 0; i < n; ++i) {
    std::vector<int> rows;
    for (int r = i; r < n; ++r) rows.push_back(r);
    const CostMatrix rest = submatrix(a, rows, free_cols);
    const auto sol = solve_rows(rest);
    const double target = value_of(rest, sol);
    const double tol = 1e-9 + 1e-12 * std::abs(target);
    int chosen = free_cols[sol[0]];
    for (int j : free_cols) {
      if (j >= chosen) break;
      double remainder = 0.0;
      if (i + 1 < n) {
        std::vector<int> tail_rows(rows.begin() + 1, rows.end());
        std::vector<int> tail_cols;
        for (int c : free_cols) {
          if (c != j) tail_cols.push_back(c);
        }
        const CostMatrix tail = submatrix(a, tail_rows, tail_cols);
        remainder = value_of(tail, solve_rows(tail));
      }
      if (a(i, j) + remainder <= target + tol) {
        chosen = j;
        break;
      }
    }
    result[i] = chosen;
    free_cols.erase(std::find(free_cols.begin(), free_cols.end(), chosen));
  }
  return result;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  for (Eigen::Index i = 0; i < cost.size(); ++i) {
    if (!std::isfinite(cost.data()[i])) throw Error(ErrorKind::InvalidCost, "hungarian: non-finite cost entry");
  }
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const bool transposed = n > m;
  const CostMatrix a = transposed ? CostMatrix(cost.transpose()) : cost;

  std::vector<std::pair<int, int>> raw;
  if (a.rows() > 0 && a.cols() > 0) {
    const auto cols = lexicographic_rows(a);
    for (std::size_t r = 0; r < cols.size(); ++r) {
      const int row = static_cast<int>(r);
      raw.emplace_back(transposed ? cols[r] : row, transposed ? row : cols[r]);
    }
  }

  Assignment out;
  std::vector<bool> pred_used(n, false), gt_used(m, false);
  for (const auto& [p, g] : raw) {
    if (cost(p, g) >= kForbidden / 2) continue;
    out.pairs.emplace_back(p, g);
    out.total_cost += cost(p, g);
    pred_used[p] = true;
    gt_used[g] = true;
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (int i = 0; i < n; ++i) {
    if (!pred_used[i]) out.unmatched_pred.push_back(i);
  }
  for (int j = 0; j < m; ++j) {
    if (!gt_used[j]) out.unmatched_gt.push_back(j);
  }
  return out;
}

double corner_distance(const OrientedBox& pred, const OrientedBox& gt) {
  const Mat3 rt = gt.rotation().matrix().transpose();
  const Vec3 half = 0.5 * gt.scale();
  double total = 0.0;
  for (const auto& p : pred.corners()) {
    const Vec3 local = rt * (p - gt.translation());
    const Vec3 nearest(local.x() < 0.0 ? -half.x() : half.x(), local.y() < 0.0 ? -half.y() : half.y(),
                       local.z() < 0.0 ? -half.z() : half.z());
    total += (local - nearest).squaredNorm();
  }
  return total / 8.0;
}

namespace {

const OrientedBox& require_box(const Hierarchy& h, NodeId id, const char* side) {
  const auto& n = h.node(id);
  if (!n.box) {
    throw Error(ErrorKind::MissingGeometry,
                std::string(side) + " node " + std::to_string(id) + " has no bounding box");
  }
  return *n.box;
}

Assignment relabel(const Assignment& local, const std::vector<NodeId>& rows, const std::vector<NodeId>& cols) {
  Assignment out;
  for (const auto& [p, g] : local.pairs) out.pairs.emplace_back(rows[p], cols[g]);
  for (int p : local.unmatched_pred) out.unmatched_pred.push_back(rows[p]);
  for (int g : local.unmatched_gt) out.unmatched_gt.push_back(cols[g]);
  out.total_cost = local.total_cost;
  return out;
}

}  // namespace

Assignment match_leaves(const Hierarchy& pred, const Hierarchy& gt, MatchCost cost, const IouConfig& iou) {
  const auto rows = pred.leaves();
  const auto cols = gt.leaves();
  CostMatrix c(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = require_box(pred, rows[i], "pred");
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& b = require_box(gt, cols[j], "gt");
      if (cost == MatchCost::Iou) {
        const double v = box_iou(a, b, iou);
        c(i, j) = v > 0.0 ? 1.0 - v : kForbidden;
      } else {
        c(i, j) = corner_distance(a, b);
      }
    }
  }
  if (rows.empty()) {
    for (NodeId g : cols) require_box(gt, g, "gt");
  }
  return relabel(hungarian(c), rows, cols);
}

Assignment match_same_semantics(const Hierarchy& pred, const Hierarchy& gt, const IouConfig& iou,
                                MatchCost cost) {
  for (NodeId l : pred.leaves()) require_box(pred, l, "pred");
  for (NodeId l : gt.leaves()) require_box(gt, l, "gt");

  std::map<int, std::vector<NodeId>> pred_levels, gt_levels;
  for (NodeId id : pred.breadth_first()) pred_levels[pred.depth(id)].push_back(id);
  for (NodeId id : gt.breadth_first()) gt_levels[gt.depth(id)].push_back(id);
  for (auto& [_, ids] : pred_levels) std::sort(ids.begin(), ids.end());
  for (auto& [_, ids] : gt_levels) std::sort(ids.begin(), ids.end());

  Assignment out;
  int max_depth = 0;
  if (!pred_levels.empty()) max_depth = std::max(max_depth, pred_levels.rbegin()->first);
  if (!gt_levels.empty()) max_depth = std::max(max_depth, gt_levels.rbegin()->first);
  for (int d = 0; d <= max_depth; ++d) {
    const auto& rows = pred_levels[d];
    const auto& cols = gt_levels[d];
    CostMatrix c(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& pn = pred.node(rows[i]);
      for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto& gn = gt.node(cols[j]);
        if (pn.semantic != gn.semantic) {
          c(i, j) = kForbidden;
          continue;
        }
        if (cost == MatchCost::Corner) {
          c(i, j) = (pn.box && gn.box) ? corner_distance(*pn.box, *gn.box) : 1.0;
          continue;
        }
        const double v = (pn.box && gn.box) ? box_iou(*pn.box, *gn.box, iou) : 0.0;
        c(i, j) = 1.0 - v;
      }
    }
    const auto level = relabel(hungarian(c), rows, cols);
    out.pairs.insert(out.pairs.end(), level.pairs.begin(), level.pairs.end());
    out.unmatched_pred.insert(out.unmatched_pred.end(), level.unmatched_pred.begin(), level.unmatched_pred.end());
    out.unmatched_gt.insert(out.unmatched_gt.end(), level.unmatched_gt.begin(), level.unmatched_gt.end());
    out.total_cost += level.total_cost;
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  std::sort(out.unmatched_pred.begin(), out.unmatched_pred.end());
  std::sort(out.unmatched_gt.begin(), out.unmatched_gt.end());
  return out;
}

}  // namespace sseg
