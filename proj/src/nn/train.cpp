#include "sseg/nn/train.hpp"

#include "sseg/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

namespace sseg::nn {

namespace {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "config: expected an object");
  TrainConfig c;
  read_opt(j, "seed", c.seed);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "lr_structure", c.structure_optim.learning_rate);
  read_opt(j, "lr_refine", c.refine_optim.learning_rate);
  double decay = c.structure_optim.decay;
  long every = c.structure_optim.decay_every;
  read_opt(j, "lr_decay", decay);
  read_opt(j, "decay_every", every);
  c.structure_optim.decay = c.refine_optim.decay = decay;
  c.structure_optim.decay_every = c.refine_optim.decay_every = every;
  read_opt(j, "refine_passes", c.refine_passes);
  if (j.contains("match_cost")) {
    const auto m = j.at("match_cost").get<std::string>();
    if (m == "corner") {
      c.match_cost = MatchCost::Corner;
    } else if (m == "iou") {
      c.match_cost = MatchCost::Iou;
    } else {
      throw Error(ErrorKind::ParseError, "config field 'match_cost': expected \"corner\" or \"iou\"");
    }
  }
  read_opt(j, "max_part_points", c.inference.max_part_points);
  read_opt(j, "iou_threshold", c.inference.iou_threshold);
  read_opt(j, "merge_threshold", c.inference.merge_threshold);
  read_opt(j, "iou_resolution", c.inference.iou.resolution);
  read_opt(j, "eval_every", c.eval_every);
  read_opt(j, "max_steps", c.max_steps);
  read_opt(j, "diagnostic_path", c.diagnostic_path);
  read_opt(j, "jobs", c.jobs);
  if (c.batch_size == 0) throw Error(ErrorKind::ParseError, "config field 'batch_size' must be positive");
  if (c.epochs < 0) throw Error(ErrorKind::ParseError, "config field 'epochs' must be nonnegative");
  if (c.structure_optim.decay_every <= 0) throw Error(ErrorKind::ParseError, "config field 'decay_every' must be positive");
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"seed", seed},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"lr_structure", structure_optim.learning_rate},
          {"lr_refine", refine_optim.learning_rate},
          {"lr_decay", structure_optim.decay},
          {"decay_every", structure_optim.decay_every},
          {"refine_passes", refine_passes},
          {"match_cost", match_cost == MatchCost::Corner ? "corner" : "iou"},
          {"max_part_points", inference.max_part_points},
          {"iou_threshold", inference.iou_threshold},
          {"merge_threshold", inference.merge_threshold},
          {"iou_resolution", inference.iou.resolution},
          {"eval_every", eval_every},
          {"max_steps", max_steps}};
}

StructureLoss structure_loss(Graph& g, const ShapeRecord& record, const TrainConfig& config) {
  const Hierarchy& gt = record.hierarchy;
  const auto fwd = forward_structure(g, gt, record.cloud.points, config.inference);

  Hierarchy pred = gt;
  for (auto& node : pred.nodes) node.box = fwd.boxes[static_cast<std::size_t>(node.id)].box();
  const auto m = match_same_semantics(pred, gt, config.inference.iou, config.match_cost);

  std::vector<Var> box_terms, norm_terms;
  for (const auto& [p, q] : m.pairs) {
    const auto& b = fwd.boxes[static_cast<std::size_t>(p)];
    box_terms.push_back(box_loss(g, b, *gt.node(q).box));
    norm_terms.push_back(norm_loss(g, b, *gt.node(q).box));
  }
  auto average = [&](const std::vector<Var>& terms) {
    if (terms.empty()) return g.constant(Tensor::vector({0.0}));
    return mean(concat(terms));
  };
  Var lbox = average(box_terms);
  Var lnorm = average(norm_terms);

  Var ledge = g.constant(Tensor::vector({0.0}));
  if (!fwd.pairs.empty()) {
    std::vector<Var> rows;
    Tensor labels({fwd.pairs.size(), static_cast<std::size_t>(kRelationTypeCount)});
    for (std::size_t k = 0; k < fwd.pairs.size(); ++k) {
      const auto& p = fwd.pairs[k];
      rows.push_back(p.probs);
      const int ga = m.gt_of(p.a), gb = m.gt_of(p.b);
      if (ga < 0 || gb < 0 || ga == gb || gt.node(ga).parent != gt.node(gb).parent) continue;
      const RelationSet rel = gt.relation(ga, gb);
      for (int t = 0; t < kRelationTypeCount; ++t) {
        labels.at(k, static_cast<std::size_t>(t)) = rel.has(static_cast<RelationType>(t)) ? 1.0 : 0.0;
      }
    }
    ledge = edge_loss(g, stack_rows(rows), labels);
  }
  return {total_loss(lbox, lnorm, ledge), lbox.item(), lnorm.item(), ledge.item()};
}

namespace {

struct CandidateSample {
  std::size_t record = 0;
  std::shared_ptr<const Hierarchy> inferred;
  NodeId source = -1;
  NodeId target = -1;
  int label = 0;
};

[[noreturn]] void numeric_failure(const TrainConfig& config, const std::string& phase, int epoch, long step,
                                  const std::vector<std::string>& names, const nlohmann::json& detail) {
  nlohmann::json dump{{"phase", phase}, {"epoch", epoch}, {"step", step}, {"shapes", names}, {"detail", detail}};
  std::string where = "not written";
  if (!config.diagnostic_path.empty()) {
    std::ofstream out(config.diagnostic_path);
    if (out) {
      out << dump.dump(2) << '\n';
      where = config.diagnostic_path;
    }
  }
  std::string shapes;
  for (const auto& n : names) shapes += (shapes.empty() ? "" : ",") + n;
  throw Error(ErrorKind::NumericFailure, "non-finite " + phase + " loss at epoch " + std::to_string(epoch) +
                                             " step " + std::to_string(step) + " (shapes " + shapes +
                                             "); diagnostic dump " + where);
}

}  // namespace

TrainResult train_toy(std::span<const ShapeRecord> train, std::span<const ShapeRecord> test, const Taxonomy& taxonomy,
                      const TrainConfig& config, const TrainLogger& log, const EpochHook& on_epoch) {
  if (train.empty()) throw Error(ErrorKind::InvalidArgument, "train_toy: empty training split");
  TrainResult result;
  result.params = ModelParams::initialize(taxonomy.size(), config.seed);
  ModelParams& params = result.params;
  ModelParams grads = params.zeros_like();
  OptimState structure_opt(params, config.structure_optim);
  OptimState refine_opt(params, config.refine_optim);
  std::mt19937_64 rng(config.seed + 1);
  long steps = 0;
  auto budget_left = [&] { return config.max_steps <= 0 || steps < config.max_steps; };

  std::vector<std::vector<int>> parts;
  for (const auto& r : train) parts.push_back(true_parts(r));

  for (int epoch = 1; epoch <= config.epochs && budget_left(); ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochMetrics em;
    em.epoch = epoch;

    // Structure inference epoch on clean partitions.
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double structure_total = 0.0;
    for (std::size_t begin = 0; begin < order.size() && budget_left(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      grads.fill(0.0);
      double batch_loss = 0.0;
      std::vector<std::string> names;
      nlohmann::json detail = nlohmann::json::array();
      for (std::size_t k = begin; k < end; ++k) {
        const auto& r = train[order[k]];
        names.push_back(r.name);
        Graph g(params, &grads, structure_prefixes());
        const auto loss = structure_loss(g, r, config);
        detail.push_back({{"shape", r.name}, {"box", loss.box}, {"norm", loss.norm}, {"edge", loss.edge}});
        if (!std::isfinite(loss.total.item())) numeric_failure(config, "structure", epoch, steps, names, detail);
        g.tape.backward(loss.total);
        batch_loss += loss.total.item();
      }
      const double n = static_cast<double>(end - begin);
      structure_opt.step(params, grads, 1.0 / n, structure_prefixes());
      if (params.has_nonfinite()) numeric_failure(config, "structure", epoch, steps, names, detail);
      ++steps;
      result.step_losses.push_back(batch_loss / n);
      structure_total += batch_loss;
    }
    em.structure_loss = structure_total / static_cast<double>(train.size());

    // Refinement epoch: candidates from the current structure network.
    std::vector<CandidateSample> samples;
    for (std::size_t i = 0; i < train.size() && budget_left(); ++i) {
      const auto& r = train[i];
      if (r.gt_merges.empty()) continue;
      const auto segments = r.cloud.segments();
      auto inferred = std::make_shared<const Hierarchy>(
          infer_structure(params, build_hierarchy(segments, taxonomy, r.cloud.points), r.cloud.points, config.inference));
      for (const auto& e : detect_conflicts(*inferred, config.inference.iou_threshold, config.inference.iou).entries) {
        samples.push_back({i, inferred, e.source, e.target, merge_label(parts[i], e.source, e.target)});
      }
    }
    double refine_total = 0.0;
    long refine_count = 0;
    for (int pass = 0; pass < config.refine_passes && !samples.empty() && budget_left(); ++pass) {
      std::shuffle(samples.begin(), samples.end(), rng);
      for (std::size_t begin = 0; begin < samples.size() && budget_left(); begin += config.batch_size) {
        const std::size_t end = std::min(samples.size(), begin + config.batch_size);
        grads.fill(0.0);
        Graph g(params, &grads, refinement_prefixes());
        std::vector<Var> scores;
        std::vector<int> labels;
        std::vector<std::string> names;
        for (std::size_t k = begin; k < end; ++k) {
          const auto& s = samples[k];
          const auto& r = train[s.record];
          names.push_back(r.name + ":" + std::to_string(s.source) + "->" + std::to_string(s.target));
          scores.push_back(score_candidate(g, *s.inferred, r.cloud.points, s.source, s.target, config.inference));
          labels.push_back(s.label);
        }
        Var loss = merge_loss(g, scores, labels);
        if (!std::isfinite(loss.item())) {
          numeric_failure(config, "refinement", epoch, steps, names, {{"loss", loss.item()}});
        }
        g.tape.backward(loss);
        refine_opt.step(params, grads, 1.0, refinement_prefixes());
        if (params.has_nonfinite()) numeric_failure(config, "refinement", epoch, steps, names, {});
        ++steps;
        result.step_losses.push_back(loss.item());
        refine_total += loss.item();
        refine_count += static_cast<long>(end - begin);
      }
    }
    em.refine_loss = refine_count > 0 ? refine_total / static_cast<double>(refine_count) : 0.0;

    const bool last = epoch == config.epochs || !budget_left();
    if (!test.empty() && (last || (config.eval_every > 0 && epoch % config.eval_every == 0))) {
      const auto m = evaluate_pipeline(params, test, taxonomy, config.inference, config.jobs);
      em.evaluated = true;
      em.ap_25 = m.report.ap_25;
      em.edge_error = m.report.edge_error;
      em.map_after = m.report.map;
      em.map_before = m.map_before;
      em.merge_accuracy = m.merge_accuracy();
    }
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.curves.push_back(em);
    if (on_epoch) on_epoch(em, params);
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "epoch %d: structure %.5f refine %.5f", epoch, em.structure_loss,
                    em.refine_loss);
      std::string line = buf;
      if (em.evaluated) {
        std::snprintf(buf, sizeof buf, " | ap %.4f ee %.4f merge-acc %.4f map %.4f->%.4f", em.ap_25, em.edge_error,
                      em.merge_accuracy, em.map_before, em.map_after);
        line += buf;
      }
      std::snprintf(buf, sizeof buf, " (%.1fs)", em.seconds);
      log(line + buf);
    }
  }
  return result;
}

void write_curves_csv(std::ostream& out, const std::vector<EpochMetrics>& curves) {
  out << "epoch,structure_loss,refine_loss,ap_25,edge_error,merge_accuracy,map_before,map_after,seconds\n";
  char buf[512];
  for (const auto& e : curves) {
    if (e.evaluated) {
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.structure_loss,
                    e.refine_loss, e.ap_25, e.edge_error, e.merge_accuracy, e.map_before, e.map_after, e.seconds);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,,,,,,%.3f\n", e.epoch, e.structure_loss, e.refine_loss, e.seconds);
    }
    out << buf;
  }
}

}  // namespace sseg::nn
