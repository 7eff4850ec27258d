#pragma once

#include "sseg/assign.hpp"
#include "sseg/nn/model.hpp"
#include "sseg/nn/pipeline.hpp"
#include "sseg/synthio.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sseg::nn {

struct TrainConfig {
  std::uint64_t seed = 0;
  /// Rounds of one structure epoch followed by one refinement epoch.
  int epochs = 40;
  std::size_t batch_size = 16;
  AdamConfig structure_optim{5e-4};
  AdamConfig refine_optim{1e-4};
  /// Passes over the candidate set per refinement epoch.
  int refine_passes = 4;
  MatchCost match_cost = MatchCost::Corner;
  InferenceConfig inference;
  /// Held-out evaluation period in epochs (0 = final epoch only).
  int eval_every = 5;
  /// Stops after this many optimizer steps in total (0 = no limit).
  long max_steps = 0;
  /// Where a failing batch is described when the loss stops being finite.
  std::string diagnostic_path;
  /// Worker threads for held-out evaluation only.
  int jobs = 1;

  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct EpochMetrics {
  int epoch = 0;
  double structure_loss = 0.0;
  double refine_loss = 0.0;
  bool evaluated = false;
  double ap_25 = 0.0;
  double edge_error = 0.0;
  double merge_accuracy = 0.0;
  double map_before = 0.0;
  double map_after = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> curves;
  /// Loss after every optimizer step, structure and refinement interleaved.
  std::vector<double> step_losses;
};

using TrainLogger = std::function<void(const std::string&)>;
/// Called after every epoch with its metrics and the current parameters.
using EpochHook = std::function<void(const EpochMetrics&, const ModelParams&)>;

/// Per-shape structure loss on a ground-truth hierarchy; gradients reach
/// `g`'s sinks after backward.
struct StructureLoss {
  Var total;
  double box = 0.0;
  double norm = 0.0;
  double edge = 0.0;
};
StructureLoss structure_loss(Graph& g, const ShapeRecord& record, const TrainConfig& config);

TrainResult train_toy(std::span<const ShapeRecord> train, std::span<const ShapeRecord> test, const Taxonomy& taxonomy,
                      const TrainConfig& config, const TrainLogger& log = {}, const EpochHook& on_epoch = {});

void write_curves_csv(std::ostream& out, const std::vector<EpochMetrics>& curves);

}  // namespace sseg::nn
