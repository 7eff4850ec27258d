#include "sseg/error.hpp"
#include "sseg/metrics.hpp"
#include "sseg/nn/model.hpp"
#include "sseg/nn/pipeline.hpp"
#include "sseg/nn/train.hpp"
#include "sseg/parallel.hpp"
#include "sseg/refine.hpp"
#include "sseg/synthio.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sseg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string quoted(const std::string& s) { return json(s).dump(); }

void setup_logging() {
  auto logger = spdlog::stderr_logger_st("sseg");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SSEG_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      throw Error(ErrorKind::InvalidArgument, "SSEG_LOG: unknown level '" + std::string(env) + "'");
    }
    spdlog::set_level(level);
  }
}

// --- Inputs --------------------------------------------------------------------

struct ShapeFile {
  std::string path;
  std::string key;  // file name, used to pair predictions with ground truth
};

/// Records of a dataset directory (manifest order) or every record-like JSON
/// file of a plain directory (name order).
std::vector<ShapeFile> list_shapes(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, "not a directory: " + dir);
  std::vector<ShapeFile> out;
  if (fs::exists(fs::path(dir) / "manifest.json")) {
    const Dataset d = load_dataset(dir);
    for (const auto& e : d.entries) out.push_back({d.path_of(e), fs::path(e.file).filename().string()});
    return out;
  }
  static const std::set<std::string> reserved{"manifest.json", "taxonomy.json", "report.json"};
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && entry.path().extension() == ".json" && !reserved.contains(name)) {
      out.push_back({entry.path().string(), name});
    }
  }
  std::sort(out.begin(), out.end(), [](const ShapeFile& a, const ShapeFile& b) { return a.key < b.key; });
  return out;
}

Taxonomy resolve_taxonomy(const std::string& explicit_path, const std::string& model_path, const std::string& category) {
  if (!explicit_path.empty()) return Taxonomy::load(explicit_path);
  if (!model_path.empty()) {
    const auto sibling = fs::path(model_path).parent_path() / "taxonomy.json";
    if (fs::exists(sibling)) return Taxonomy::load(sibling.string());
  }
  try {
    return category_taxonomy(category_from_string(category));
  } catch (const Error&) {
    throw Error(ErrorKind::InvalidArgument,
                "no taxonomy for category '" + category + "'; pass --taxonomy or keep taxonomy.json next to the model");
  }
}

nn::ModelParams load_model(const std::string& path, const Taxonomy& taxonomy) {
  auto params = nn::load_checkpoint(path);
  if (params.num_labels() != taxonomy.size()) {
    throw Error(ErrorKind::InvalidArgument, "model " + path + " expects " + std::to_string(params.num_labels()) +
                                                " labels, taxonomy has " + std::to_string(taxonomy.size()));
  }
  return params;
}

/// Normalized copy of a cloud plus the map back to the input frame.
struct Frame {
  double scale = 1.0;
  Vec3 offset = Vec3::Zero();

  OrientedBox to_input(const OrientedBox& b) const {
    return OrientedBox(b.translation() / scale + offset, b.scale() / scale, b.rotation());
  }
  void to_input(Hierarchy& h) const {
    for (auto& n : h.nodes) {
      if (n.box) n.box = to_input(*n.box);
    }
  }
};

Frame normalized_copy(const LabeledCloud& in, LabeledCloud& out) {
  out = in;
  if (in.normalized) return {};
  const auto [scale, offset] = normalize_cloud(out);
  return {scale, offset};
}

// --- Subcommands ---------------------------------------------------------------

struct GenArgs {
  std::string category = "toy-chair";
  std::size_t count = 10;
  std::optional<std::uint64_t> seed;
  double oversample_prob = 0.0;
  double arm_prob = 0.0;
  double boundary_noise = NoiseConfig{}.boundary_noise;
  double outlier_fraction = NoiseConfig{}.outlier_fraction;
  std::size_t points = NoiseConfig{}.num_points;
  std::string out;
};

int run_gen(const GenArgs& a, int jobs) {
  GenerateOptions o;
  o.category = category_from_string(a.category);
  o.count = a.count;
  o.seed = *a.seed;
  o.noise.oversegment_prob = a.oversample_prob;
  o.noise.arm_prob = a.arm_prob;
  o.noise.boundary_noise = a.boundary_noise;
  o.noise.outlier_fraction = a.outlier_fraction;
  o.noise.num_points = a.points;
  o.jobs = jobs;
  const auto d = generate_dataset(a.out, o);
  spdlog::info("generated {} {} shapes in {}", d.entries.size(), d.category, a.out);
  return 0;
}

struct InferArgs {
  std::string model;
  bool rule_based = false;
  std::string shape;
  std::string out;
  std::string taxonomy;
  std::size_t max_part_points = nn::InferenceConfig{}.max_part_points;
};

Hierarchy infer_one(const InferArgs& a, const ShapeRecord& record, const Taxonomy& taxonomy,
                    const nn::ModelParams* params) {
  LabeledCloud cloud;
  const Frame frame = normalized_copy(record.cloud, cloud);
  cloud.validate();
  const Hierarchy skeleton = build_hierarchy(cloud.segments(), taxonomy, cloud.points);
  Hierarchy h;
  if (params == nullptr) {
    h = nn::rule_based_structure(skeleton, cloud.points);
  } else {
    nn::InferenceConfig cfg;
    cfg.max_part_points = a.max_part_points;
    h = nn::infer_structure(*params, skeleton, cloud.points, cfg);
  }
  frame.to_input(h);
  return h;
}

int run_infer(const InferArgs& a, int jobs) {
  std::vector<ShapeFile> inputs;
  const bool batch = fs::is_directory(a.shape);
  if (batch) {
    inputs = list_shapes(a.shape);
    fs::create_directories(a.out);
  } else {
    inputs.push_back({a.shape, fs::path(a.shape).filename().string()});
  }
  if (inputs.empty()) throw Error(ErrorKind::IoError, "no shapes found in " + a.shape);
  std::optional<Taxonomy> taxonomy;
  std::optional<nn::ModelParams> params;
  std::vector<ShapeRecord> records(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) { records[i] = load_shape(inputs[i].path); });
  taxonomy = resolve_taxonomy(a.taxonomy, a.model, records.front().category);
  if (!a.rule_based) params = load_model(a.model, *taxonomy);
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    const Hierarchy h = infer_one(a, records[i], *taxonomy, params ? &*params : nullptr);
    save_hierarchy(h, batch ? (fs::path(a.out) / inputs[i].key).string() : a.out);
  });
  spdlog::info("inferred {} shape(s) with the {} path", inputs.size(), a.rule_based ? "rule-based" : "learned");
  return 0;
}

struct RefineArgs {
  std::string model;
  std::string shape;
  std::string hierarchy;
  double iou_thresh = kConflictIouThreshold;
  double merge_thresh = kMergeThreshold;
  std::string out;
  std::string taxonomy;
};

int run_refine(const RefineArgs& a) {
  const ShapeRecord record = load_shape(a.shape);
  const Taxonomy taxonomy = resolve_taxonomy(a.taxonomy, a.model, record.category);
  const auto params = load_model(a.model, taxonomy);
  LabeledCloud cloud;
  const Frame frame = normalized_copy(record.cloud, cloud);
  cloud.validate();

  Hierarchy given = load_hierarchy(a.hierarchy);
  if (given.leaves().size() != cloud.instance_count()) {
    throw Error(ErrorKind::InvalidSegmentation, "hierarchy has " + std::to_string(given.leaves().size()) +
                                                    " leaves, shape has " + std::to_string(cloud.instance_count()) +
                                                    " instances");
  }
  // Boxes come from the given hierarchy (mapped into the normalized frame);
  // node features are recomputed with the model on the same skeleton.
  nn::InferenceConfig cfg;
  cfg.iou_threshold = a.iou_thresh;
  cfg.merge_threshold = a.merge_thresh;
  const Hierarchy inferred = nn::infer_structure(params, given, cloud.points, cfg);
  Hierarchy working = inferred;
  for (auto& n : working.nodes) {
    const auto& src = given.node(n.id);
    if (src.box) {
      n.box = OrientedBox((src.box->translation() - frame.offset) * frame.scale, src.box->scale() * frame.scale,
                          src.box->rotation());
    }
  }
  const auto candidates = detect_conflicts(working, cfg.iou_threshold, cfg.iou);
  const auto decisions = nn::score_candidates(params, working, cloud.points, candidates, cfg);
  const auto segments = cloud.segments();
  const auto merged = apply_merges(cloud.points, segments, working, decisions, taxonomy, cfg.merge_threshold);
  Hierarchy rebuilt = nn::infer_structure(params, merged.hierarchy, cloud.points, cfg);
  frame.to_input(rebuilt);

  ShapeRecord refined = record;
  refined.gt_merges.clear();
  for (std::size_t s = 0; s < merged.segments.size(); ++s) {
    for (int p : merged.segments[s].point_indices) {
      refined.cloud.instances[static_cast<std::size_t>(p)] = static_cast<int>(s);
      refined.cloud.semantics[static_cast<std::size_t>(p)] = merged.segments[s].semantic;
    }
  }
  refined.hierarchy = rebuilt;

  fs::create_directories(a.out);
  save_shape(refined, (fs::path(a.out) / "refined_shape.json").string());
  save_hierarchy(rebuilt, (fs::path(a.out) / "hierarchy.json").string());
  std::ofstream log((fs::path(a.out) / "decisions.jsonl").string());
  if (!log) throw Error(ErrorKind::IoError, "cannot write decisions.jsonl in " + a.out);
  write_decisions(log, merged.decisions);
  const auto applied = std::count_if(merged.decisions.begin(), merged.decisions.end(),
                                     [](const MergeDecision& d) { return d.applied; });
  spdlog::info("{} candidates, {} merges applied, {} -> {} segments", merged.decisions.size(), applied,
               segments.size(), merged.segments.size());
  return 0;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string metrics = "ap,ee,map";
  std::string out;
};

int run_eval(const EvalArgs& a, int jobs) {
  std::set<std::string> wanted;
  std::stringstream ss(a.metrics);
  for (std::string m; std::getline(ss, m, ',');) {
    if (m != "ap" && m != "ee" && m != "map") {
      throw Error(ErrorKind::InvalidArgument, "unknown metric '" + m + "' (ap, ee, map)");
    }
    wanted.insert(m);
  }
  if (wanted.empty()) throw Error(ErrorKind::InvalidArgument, "--metrics selects nothing");

  std::vector<ShapeFile> pairs;
  std::vector<std::string> missing;
  for (const auto& g : list_shapes(a.gt)) {
    if (fs::exists(fs::path(a.pred) / g.key)) {
      pairs.push_back(g);
    } else {
      missing.push_back(g.key);
    }
  }
  if (pairs.empty()) throw Error(ErrorKind::IoError, "no predictions in " + a.pred + " match shapes in " + a.gt);

  MetricReport report;
  report.per_shape.resize(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const auto gt = load_shape(pairs[i].path);
    const auto pred = load_hierarchy((fs::path(a.pred) / pairs[i].key).string());
    auto& s = report.per_shape[i];
    s.name = pairs[i].key;
    if (wanted.contains("ap")) s.ap_25 = part_ap(pred, gt.hierarchy);
    if (wanted.contains("ee")) s.edge_error = edge_error(pred, gt.hierarchy);
    if (wanted.contains("map")) {
      s.map = segmentation_map(leaf_segments(pred), leaf_segments(gt.hierarchy), gt.cloud.size()).mean;
    }
  });
  report.finalize();

  json j = report.to_json();
  static const std::map<std::string, std::string> key_of{{"ap", "ap_25"}, {"ee", "edge_error"}, {"map", "map"}};
  for (const auto& [m, key] : key_of) {
    if (wanted.contains(m)) continue;
    j.erase(key);
    if (j.contains("per_shape")) {
      for (auto& row : j["per_shape"]) row.erase(key);
    }
  }
  j["metrics"] = std::vector<std::string>(wanted.begin(), wanted.end());
  j["missing_predictions"] = missing;
  const std::string out = a.out.empty() ? (fs::path(a.pred) / "report.json").string() : a.out;
  write_json_file(out, j, 2);
  std::cout << report.to_table(wanted.contains("ap"), wanted.contains("ee"), wanted.contains("map"));
  if (!missing.empty()) spdlog::warn("{} ground-truth shapes have no prediction", missing.size());
  return 0;
}

struct RetrieveArgs {
  std::string query;
  std::string corpus;
  std::string mode = "structure";
  std::size_t topk = 5;
  std::string out;
};

int run_retrieve(const RetrieveArgs& a, int jobs) {
  const auto mode = retrieval_mode_from_string(a.mode);
  if (a.topk == 0) throw Error(ErrorKind::InvalidArgument, "--topk must be positive");
  const ShapeRecord query = load_shape(a.query);
  const auto query_path = fs::weakly_canonical(a.query);
  std::vector<ShapeFile> files;
  for (const auto& f : list_shapes(a.corpus)) {
    if (fs::weakly_canonical(f.path) != query_path) files.push_back(f);
  }
  std::vector<ShapeRecord> records(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) { records[i] = load_shape(files[i].path); });
  std::vector<RetrievalEntry> corpus;
  for (std::size_t i = 0; i < records.size(); ++i) {
    corpus.push_back({files[i].key, &records[i].hierarchy, records[i].cloud.points});
  }
  const RetrievalEntry q{fs::path(a.query).filename().string(), &query.hierarchy, query.cloud.points};
  const auto hits = retrieve(q, corpus, mode, a.topk, jobs);

  json j{{"query", q.name}, {"mode", to_string(mode)}, {"results", json::array()}};
  std::printf("%-5s %-32s %10s %14s\n", "rank", "shape", "structure", "chamfer_sq");
  for (std::size_t r = 0; r < hits.size(); ++r) {
    const auto& h = hits[r];
    std::printf("%-5zu %-32s %10d %14.8f\n", r + 1, h.name.c_str(), h.structure_distance, h.chamfer);
    j["results"].push_back(
        {{"rank", r + 1}, {"shape", h.name}, {"structure_distance", h.structure_distance}, {"chamfer_sq", h.chamfer}});
  }
  if (!a.out.empty()) write_json_file(a.out, j, 2);
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a, int jobs) {
  const json cj = read_json_file(a.config);
  if (!cj.contains("dataset") || !cj.at("dataset").is_string()) {
    throw Error(ErrorKind::ParseError, "config: missing string field 'dataset'");
  }
  if (!a.seed && !cj.contains("seed")) {
    throw Error(ErrorKind::InvalidArgument, "training is seeded: set \"seed\" in the config or pass --seed");
  }
  auto cfg = nn::TrainConfig::from_json(cj);
  if (a.seed) cfg.seed = *a.seed;
  if (!cj.contains("jobs")) cfg.jobs = jobs;
  fs::path data = cj.at("dataset").get<std::string>();
  if (data.is_relative()) data = fs::path(a.config).parent_path() / data;

  const Dataset d = load_dataset(data.string());
  std::vector<ShapeRecord> train, test;
  for (const auto& e : d.entries) (e.split == "test" ? test : train).push_back(load_shape(d.path_of(e)));
  fs::create_directories(fs::path(a.out) / "checkpoints");
  cfg.diagnostic_path = (fs::path(a.out) / "nan_dump.json").string();
  spdlog::info("training on {} shapes, evaluating on {}", train.size(), test.size());

  const auto checkpoints = fs::path(a.out) / "checkpoints";
  const auto result = nn::train_toy(
      train, test, d.taxonomy, cfg, [](const std::string& line) { spdlog::info("{}", line); },
      [&](const nn::EpochMetrics& em, const nn::ModelParams& params) {
        if (!em.evaluated) return;
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d.ckpt", em.epoch);
        nn::save_checkpoint(params, (checkpoints / name).string());
      });
  const auto model = (fs::path(a.out) / "model.ckpt").string();
  nn::save_checkpoint(result.params, model);
  d.taxonomy.save((fs::path(a.out) / "taxonomy.json").string());
  {
    std::ofstream csv((fs::path(a.out) / "curves.csv").string());
    if (!csv) throw Error(ErrorKind::IoError, "cannot write curves.csv in " + a.out);
    nn::write_curves_csv(csv, result.curves);
  }
  json report{{"config", cfg.to_json()},
              {"dataset", data.string()},
              {"train_shapes", train.size()},
              {"test_shapes", test.size()},
              {"steps", result.step_losses.size()}};
  if (!test.empty()) {
    const auto m = nn::evaluate_pipeline(result.params, test, d.taxonomy, cfg.inference, cfg.jobs);
    const auto rb = nn::evaluate_rule_based(test, d.taxonomy, cfg.jobs);
    report["test"] = {{"ap_25", m.report.ap_25},
                      {"edge_error", m.report.edge_error},
                      {"merge_accuracy", m.merge_accuracy()},
                      {"merge_candidates", m.candidates},
                      {"map_before", m.map_before},
                      {"map_after", m.report.map},
                      {"rule_based_ap_25", rb.ap_25}};
    std::printf("ap_25 %.4f  edge_error %.4f  merge_accuracy %.4f  map %.4f -> %.4f  rule-based ap_25 %.4f\n",
                m.report.ap_25, m.report.edge_error, m.merge_accuracy(), m.map_before, m.report.map, rb.ap_25);
  }
  write_json_file((fs::path(a.out) / "report.json").string(), report, 2);
  return 0;
}

struct ImportArgs {
  std::string source;
  std::string out;
  std::string taxonomy;
  std::string category = "partnet";
};

int run_import(const ImportArgs& a) {
  const auto taxonomy = Taxonomy::load(a.taxonomy);
  const auto report = import_directory(a.source, a.out, taxonomy, a.category);
  for (const auto& [name, reason] : report.skipped) std::printf("skipped %s: %s\n", name.c_str(), reason.c_str());
  for (const auto& note : report.notes) std::printf("note: %s\n", note.c_str());
  std::printf("imported %zu, skipped %zu\n", report.imported.size(), report.skipped.size());
  return 0;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NumericFailure: return kExitNumeric;
    case ErrorKind::InvalidArgument: return kExitUsage;
    default: return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Part-structure inference, segmentation refinement, metrics and retrieval for labeled point clouds"};
  app.require_subcommand(1);
  app.fallthrough();
  int jobs = 1;
  app.add_option("--jobs", jobs, "Worker threads for per-shape work")->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->add_option("--category", gen.category, "toy-chair | toy-table | toy-storage")->required();
  g->add_option("--count", gen.count, "Number of shapes")->required();
  g->add_option("--seed", gen.seed, "Base seed")->required();
  g->add_option("--oversample-prob", gen.oversample_prob, "Probability of one over-segmented part per shape")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--arm-prob", gen.arm_prob, "Probability of arm units on chairs")->check(CLI::Range(0.0, 1.0));
  g->add_option("--boundary-noise", gen.boundary_noise, "Label bleed radius at part contacts")->check(CLI::NonNegativeNumber);
  g->add_option("--outlier-fraction", gen.outlier_fraction, "Fraction of scattered mislabeled points")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--points", gen.points, "Points per shape")->check(CLI::PositiveNumber);
  g->add_option("--out", gen.out, "Output directory")->required();

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Infer a part hierarchy with boxes and relations");
  auto* model_opt = i->add_option("--model", inf.model, "Model checkpoint");
  auto* rule_opt = i->add_flag("--rule-based", inf.rule_based, "PCA boxes, no relations");
  model_opt->excludes(rule_opt);
  i->add_option("--shape", inf.shape, "Shape file, or a directory of shapes")->required();
  i->add_option("--out", inf.out, "Hierarchy file, or a directory when --shape is one")->required();
  i->add_option("--taxonomy", inf.taxonomy, "Taxonomy file");
  i->add_option("--max-part-points", inf.max_part_points, "Points per part fed to the encoder");

  RefineArgs ref;
  auto* r = app.add_subcommand("refine", "Merge over-segmented parts and rebuild the hierarchy");
  r->add_option("--model", ref.model, "Model checkpoint")->required();
  r->add_option("--shape", ref.shape, "Shape file")->required();
  r->add_option("--hierarchy", ref.hierarchy, "Inferred hierarchy of the shape")->required();
  r->add_option("--iou-thresh", ref.iou_thresh, "Conflict IoU threshold")->check(CLI::Range(0.0, 1.0));
  r->add_option("--merge-thresh", ref.merge_thresh, "Merge score threshold")->check(CLI::Range(0.0, 1.0));
  r->add_option("--out", ref.out, "Output directory")->required();
  r->add_option("--taxonomy", ref.taxonomy, "Taxonomy file");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predicted hierarchies against ground truth");
  e->add_option("--pred", ev.pred, "Directory of predicted hierarchies")->required();
  e->add_option("--gt", ev.gt, "Dataset or directory of ground-truth shapes")->required();
  e->add_option("--metrics", ev.metrics, "Comma-separated subset of ap,ee,map");
  e->add_option("--out", ev.out, "JSON report path (default: <pred>/report.json)");

  RetrieveArgs ret;
  auto* q = app.add_subcommand("retrieve", "Rank a corpus against a query shape");
  q->add_option("--query", ret.query, "Query shape")->required();
  q->add_option("--corpus", ret.corpus, "Dataset or directory of shapes")->required();
  q->add_option("--mode", ret.mode, "structure | chamfer")->check(CLI::IsMember({"structure", "chamfer"}));
  q->add_option("--topk", ret.topk, "Results to list");
  q->add_option("--out", ret.out, "Optional JSON output");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train structure and refinement networks");
  t->add_option("--config", tr.config, "Training config (JSON)")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--seed", tr.seed, "Overrides the config seed");

  ImportArgs im;
  auto* p = app.add_subcommand("import", "Import annotated point clouds into a dataset");
  p->add_option("--source", im.source, "Directory of <name>.pts + <name>.json pairs")->required();
  p->add_option("--out", im.out, "Dataset directory")->required();
  p->add_option("--taxonomy", im.taxonomy, "Taxonomy file")->required();
  p->add_option("--category", im.category, "Category name stored in the records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::fprintf(stderr, "error kind=usage message=%s\n", quoted(ex.what()).c_str());
    return kExitUsage;
  }

  try {
    setup_logging();
    if (i->parsed() && !inf.rule_based && inf.model.empty()) {
      throw Error(ErrorKind::InvalidArgument, "infer needs --model or --rule-based");
    }
    if (g->parsed()) return run_gen(gen, jobs);
    if (i->parsed()) return run_infer(inf, jobs);
    if (r->parsed()) return run_refine(ref);
    if (e->parsed()) return run_eval(ev, jobs);
    if (q->parsed()) return run_retrieve(ret, jobs);
    if (t->parsed()) return run_train(tr, jobs);
    if (p->parsed()) return run_import(im);
  } catch (const Error& ex) {
    std::fprintf(stderr, "error kind=%s message=%s\n", std::string(to_string(ex.kind())).c_str(),
                 quoted(ex.what()).c_str());
    return exit_code_for(ex.kind());
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error kind=internal message=%s\n", quoted(ex.what()).c_str());
    return kExitData;
  }
  return kExitUsage;
}
