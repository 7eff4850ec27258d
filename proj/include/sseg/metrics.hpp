#pragma once

#include "sseg/assign.hpp"
#include "sseg/structure.hpp"

#include <json.hpp>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace sseg {

inline constexpr double kPartIouThreshold = 0.25;
inline constexpr double kSegmentationIouThreshold = 0.5;

struct EdgeCounts {
  long true_pos = 0;
  long pred_total = 0;
  long gt_total = 0;

  double precision() const { return pred_total > 0 ? static_cast<double>(true_pos) / pred_total : 0.0; }
  double recall() const { return gt_total > 0 ? static_cast<double>(true_pos) / gt_total : 0.0; }
};

/// One minus F1 of edge precision and recall. Both sides empty gives 0, any
/// other zero-F1 case gives 1.
double edge_error_from_counts(const EdgeCounts& counts);

/// Class-agnostic per-shape AP: TP / (TP + FP + FN) over Hungarian-matched leaves.
double part_ap(const Hierarchy& pred, const Hierarchy& gt, double iou_thresh = kPartIouThreshold,
               const IouConfig& iou = {});

EdgeCounts edge_counts(const Hierarchy& pred, const Hierarchy& gt, const IouConfig& iou = {});
double edge_error(const Hierarchy& pred, const Hierarchy& gt, const IouConfig& iou = {});

struct ScoredSegment {
  std::vector<int> point_indices;
  LabelId semantic = 0;
  double confidence = 1.0;
};

struct SegmentationAp {
  std::map<LabelId, double> per_class;
  double mean = 0.0;
};

/// Class-wise AP at a point-set IoU threshold (greedy matching by confidence,
/// all-points interpolation); the mean runs over classes present in gt.
SegmentationAp segmentation_map(const std::vector<ScoredSegment>& pred, const std::vector<ScoredSegment>& gt,
                                std::size_t num_points, double iou_thresh = kSegmentationIouThreshold);

/// Area under a precision/recall curve with all-points interpolation.
double average_precision(const std::vector<double>& recall, const std::vector<double>& precision);

/// |leaves(a)| + |leaves(b)| - 2 * (leaf pairs matched by semantics).
int structure_difference(const Hierarchy& a, const Hierarchy& b);

/// Leaves of a hierarchy as scored segments (confidence 1).
std::vector<ScoredSegment> leaf_segments(const Hierarchy& h);

struct ShapeMetrics {
  std::string name;
  double ap_25 = 0.0;
  double edge_error = 0.0;
  double map = 0.0;
};

struct MetricReport {
  double ap_25 = 0.0;
  double edge_error = 0.0;
  double map = 0.0;
  std::vector<ShapeMetrics> per_shape;

  /// Recomputes the averages from per_shape with compensated summation.
  void finalize();
  nlohmann::json to_json() const;
  /// Aligned-column table, one row per shape plus a mean row.
  std::string to_table(bool ap = true, bool ee = true, bool seg_map = true) const;
};

/// Neumaier-compensated sum.
double compensated_sum(const std::vector<double>& values);

// --- Retrieval ---------------------------------------------------------------

enum class RetrievalMode { Structure, Chamfer };
RetrievalMode retrieval_mode_from_string(const std::string& name);
std::string to_string(RetrievalMode mode);

/// Borrowed view of one shape: structure plus its point cloud.
struct RetrievalEntry {
  std::string name;
  const Hierarchy* hierarchy = nullptr;
  std::span<const Vec3> points;
};

struct RetrievalHit {
  std::size_t index = 0;  // position in the corpus
  std::string name;
  int structure_distance = 0;
  double chamfer = 0.0;
};

/// Ranks the corpus against the query. Structure mode: ascending
/// structure_difference, ties by chamfer_sq; chamfer mode: ascending
/// chamfer_sq. Remaining ties go to the lower corpus index. Both distances
/// are reported either way.
std::vector<RetrievalHit> retrieve(const RetrievalEntry& query, std::span<const RetrievalEntry> corpus,
                                   RetrievalMode mode, std::size_t topk, int jobs = 1);

}  // namespace sseg
