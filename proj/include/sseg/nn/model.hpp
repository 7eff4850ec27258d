#pragma once

#include "sseg/geom.hpp"
#include "sseg/nn/tape.hpp"
#include "sseg/nn/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sseg::nn {

inline constexpr std::size_t kNodeWidth = 128;
inline constexpr std::size_t kEdgeWidth = 256;
inline constexpr std::size_t kCandidateWidth = 256;
inline constexpr int kMessageIterations = 2;
inline constexpr double kEdgeKeepThreshold = 0.5;
inline constexpr double kOffsetFraction = 0.1;

/// Named parameter tensors. Linear layers are stored as "<layer>.w" (in x out)
/// and "<layer>.b" (out).
class ModelParams {
 public:
  std::map<std::string, Tensor> tensors;

  /// Fresh parameters for a taxonomy with `num_labels` labels.
  static ModelParams initialize(std::size_t num_labels, std::uint64_t seed);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) > 0; }
  /// Label count the candidate encoder was built for.
  std::size_t num_labels() const;
  std::size_t parameter_count() const;
  /// Same names and shapes, all zeros (gradient buffers).
  ModelParams zeros_like() const;
  void fill(double v);
  /// True when any value is NaN or infinite.
  bool has_nonfinite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

/// A tape with parameters bound by name. Gradients flow into `grads` when it
/// is given; names matching none of `trainable` prefixes are bound as
/// constants (an empty list trains everything).
class Graph {
 public:
  explicit Graph(const ModelParams& params, ModelParams* grads = nullptr, std::vector<std::string> trainable = {});
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tape tape;

  Var param(const std::string& name);
  Var constant(Tensor t) { return tape.constant(std::move(t)); }
  Var dense(const std::string& layer, Var x) { return linear(x, param(layer + ".w"), param(layer + ".b")); }
  const ModelParams& params() const { return params_; }

 private:
  const ModelParams& params_;
  ModelParams* grads_;
  std::vector<std::string> trainable_;
  std::map<std::string, Var> bound_;
};

/// Rows of a k x 3 tensor from points.
Tensor points_tensor(std::span<const Vec3> points);

// --- Structure inference networks --------------------------------------------

Var encode_part(Graph& g, Var points);
Var aggregate_children(Graph& g, const std::vector<Var>& children);
Var inject_parent_context(Graph& g, Var child, Var parent);

struct RelationOutput {
  Var probs;  // 4, ordered as RelationType
  Var edge;   // y_ij, 256
};
RelationOutput classify_relations(Graph& g, Var xi, Var xj);
/// Any probability strictly above 0.5.
bool edge_kept(const Tensor& probs);

struct KeptEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  Var edge;  // y_ij
};
/// Updated features for one sibling subset. Edges are undirected.
std::vector<Var> message_pass(Graph& g, const std::vector<Var>& feats, const std::vector<KeptEdge>& edges);

struct BoxVars {
  Var t;  // 3
  Var s;  // 3
  Var q;  // 4, unit norm
  Var r;  // 3 x 3 rotation of q

  OrientedBox box() const;
};
/// Box head on a node feature and the node's points. `shape_diagonal`
/// bounds the center offset.
BoxVars decode_box(Graph& g, Var x, std::span<const Vec3> points, double shape_diagonal = 1.0);

// --- Refinement networks -----------------------------------------------------

/// One-hot label appended per point, per-point encoder, max-pool -> 256.
Var encode_candidate(Graph& g, std::span<const Vec3> points, int label);
Var fuse_node_feature(Graph& g, Var c, Var x);
Var build_merge_feature(Graph& g, Var ci, Var cj);
Var fuse_structure_code(Graph& g, Var m, Var x_root);
/// Merge probability in (0, 1), shape {1}.
Var predict_merge(Graph& g, Var m_tilde);

// --- Losses ------------------------------------------------------------------

inline constexpr double kBoxWeight = 20.0;
inline constexpr double kNormWeight = 10.0;
inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kFocalAlpha = 0.15;
inline constexpr double kFocalGamma = 2.0;

/// Mean squared distance over the 8 corners, each matched to the gt corner in
/// the same octant of the gt frame.
Var box_loss(Graph& g, const BoxVars& pred, const OrientedBox& gt);
/// Sum over predicted axes of 1 - max |<pred axis, gt axis>|.
Var norm_loss(Graph& g, const BoxVars& pred, const OrientedBox& gt);
/// Mean binary cross-entropy over the rows of `probs` (pairs x 4) and labels.
Var edge_loss(Graph& g, Var probs, const Tensor& labels);
/// 20 * box + 10 * norm + edge (+ consistency, fixed at zero).
Var total_loss(Var box, Var norm, Var edge);

double box_loss(const OrientedBox& pred, const OrientedBox& gt);
double norm_loss(const OrientedBox& pred, const OrientedBox& gt);
double edge_loss(std::span<const double> probs, std::span<const int> labels);

/// -alpha_t (1 - p_t)^gamma log p_t with the score clamped to [1e-7, 1 - 1e-7].
/// Scores outside [0, 1] throw InvalidProbability.
double focal_loss(double score, int label, double alpha = kFocalAlpha, double gamma = kFocalGamma);
Var focal_loss(Var score, int label, double alpha = kFocalAlpha, double gamma = kFocalGamma);

/// Sum of focal losses over candidate scores with 0/1 labels.
double merge_loss(std::span<const double> scores, std::span<const int> labels, double alpha = kFocalAlpha,
                  double gamma = kFocalGamma);
Var merge_loss(Graph& g, const std::vector<Var>& scores, std::span<const int> labels, double alpha = kFocalAlpha,
               double gamma = kFocalGamma);

// --- Optimizer ---------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay = 0.8;
  long decay_every = 500;
};

class OptimState {
 public:
  explicit OptimState(const ModelParams& params, AdamConfig config = {});

  /// One Adam step on every tensor whose name starts with one of `prefixes`
  /// (all tensors when empty). Gradients are scaled by `grad_scale` first.
  void step(ModelParams& params, const ModelParams& grads, double grad_scale = 1.0,
            const std::vector<std::string>& prefixes = {});
  double current_rate() const;
  long steps() const { return steps_; }
  const ModelParams& first_moment() const { return m_; }
  const ModelParams& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  ModelParams m_;
  ModelParams v_;
  long steps_ = 0;
};

/// Layer name prefixes of the two networks.
const std::vector<std::string>& structure_prefixes();
const std::vector<std::string>& refinement_prefixes();

}  // namespace sseg::nn
