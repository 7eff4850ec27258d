#pragma once

#include "sseg/metrics.hpp"
#include "sseg/nn/model.hpp"
#include "sseg/refine.hpp"
#include "sseg/structure.hpp"
#include "sseg/synthio.hpp"

#include <span>
#include <vector>

namespace sseg::nn {

struct InferenceConfig {
  /// Points per part fed to the set encoders (evenly strided subset).
  std::size_t max_part_points = 128;
  double shape_diagonal = 1.0;
  double iou_threshold = kConflictIouThreshold;
  double merge_threshold = kMergeThreshold;
  IouConfig iou;
};

struct PairPrediction {
  NodeId a = -1;
  NodeId b = -1;
  Var probs;
};

/// Differentiable pass over a hierarchy skeleton: leaf encoding, bottom-up
/// aggregation, top-down context, per-subset relations and message passing,
/// and a box for every node. Vectors are indexed by node id.
struct StructureForward {
  std::vector<Var> encoded;
  std::vector<Var> refined;
  std::vector<BoxVars> boxes;
  std::vector<PairPrediction> pairs;
};

StructureForward forward_structure(Graph& g, const Hierarchy& skeleton, std::span<const Vec3> points,
                                   const InferenceConfig& config = {});

/// Copy of `skeleton` with predicted boxes, relations (types above 0.5) and
/// node features x' filled in.
Hierarchy infer_structure(const ModelParams& params, const Hierarchy& skeleton, std::span<const Vec3> points,
                          const InferenceConfig& config = {});

/// PCA boxes on every node, no relations.
Hierarchy rule_based_structure(const Hierarchy& skeleton, std::span<const Vec3> points);

/// Merge probability for a directed candidate, reading x' from node features.
Var score_candidate(Graph& g, const Hierarchy& inferred, std::span<const Vec3> points, NodeId source,
                    NodeId target, const InferenceConfig& config = {});

/// Scores every candidate of `candidates` (decisions not yet applied).
std::vector<MergeDecision> score_candidates(const ModelParams& params, const Hierarchy& inferred,
                                            std::span<const Vec3> points, const CandidateMatrix& candidates,
                                            const InferenceConfig& config = {});

struct PipelineOutput {
  Hierarchy initial;
  CandidateMatrix candidates;
  MergeResult merged;
  /// Structure inferred on the merged segmentation.
  Hierarchy final;
};

/// Segments -> hierarchy -> boxes -> conflicts -> merges -> final hierarchy.
PipelineOutput run_pipeline(const ModelParams& params, const LabeledCloud& cloud, const Taxonomy& taxonomy,
                            const InferenceConfig& config = {});

/// Instance -> ground-truth part, following gt_merges.
std::vector<int> true_parts(const ShapeRecord& record);
/// 1 when both instances belong to the same ground-truth part.
int merge_label(const std::vector<int>& parts, NodeId source, NodeId target);

struct PipelineMetrics {
  MetricReport report;  // final structure: AP@0.25, EE, mAP after refinement
  double map_before = 0.0;
  long candidates = 0;
  long correct = 0;

  double merge_accuracy() const { return candidates > 0 ? static_cast<double>(correct) / candidates : 1.0; }
};

/// Runs the full pipeline on every record and scores it against its ground truth.
PipelineMetrics evaluate_pipeline(const ModelParams& params, std::span<const ShapeRecord> records,
                                  const Taxonomy& taxonomy, const InferenceConfig& config = {}, int jobs = 1);

/// Rule-based path on the records' own segmentation.
MetricReport evaluate_rule_based(std::span<const ShapeRecord> records, const Taxonomy& taxonomy, int jobs = 1);

}  // namespace sseg::nn
