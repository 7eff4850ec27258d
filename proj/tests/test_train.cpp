#include "sseg/error.hpp"
#include "sseg/nn/train.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace sseg;
using namespace sseg::nn;

namespace {

std::vector<ShapeRecord> small_corpus(std::size_t n, std::uint64_t seed) {
  NoiseConfig noise;
  noise.oversegment_prob = 0.5;
  noise.num_points = 384;
  noise.min_points_per_part = 16;
  std::vector<ShapeRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(gen_shape(Category::Chair, seed * 1000003 + i, noise));
  return out;
}

TrainConfig short_config() {
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 2;
  c.refine_passes = 1;
  c.eval_every = 0;
  c.max_steps = 6;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sseg_test_train";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("training is bit-identical for a fixed seed") {
  const auto data = small_corpus(4, 1);
  const auto tax = category_taxonomy(Category::Chair);
  const auto cfg = short_config();
  const auto a = train_toy(data, {}, tax, cfg);
  const auto b = train_toy(data, {}, tax, cfg);
  CHECK(a.step_losses.size() == 6);
  CHECK(a.step_losses == b.step_losses);
  CHECK(a.params == b.params);
  for (double l : a.step_losses) CHECK(std::isfinite(l));

  auto other = cfg;
  other.seed = 5;
  CHECK_FALSE(train_toy(data, {}, tax, other).params == a.params);
}

TEST_CASE("held-out evaluation fills the curves") {
  const auto data = small_corpus(3, 2);
  const auto tax = category_taxonomy(Category::Chair);
  auto cfg = short_config();
  cfg.max_steps = 0;
  cfg.epochs = 1;
  int hooks = 0;
  const auto r = train_toy(std::span(data).first(2), std::span(data).subspan(2), tax, cfg, {},
                           [&](const EpochMetrics& m, const ModelParams&) {
                             ++hooks;
                             CHECK(m.evaluated);
                           });
  CHECK(hooks == 1);
  REQUIRE(r.curves.size() == 1);
  const auto& e = r.curves[0];
  CHECK(e.ap_25 >= 0.0);
  CHECK(e.ap_25 <= 1.0);
  CHECK(e.merge_accuracy >= 0.0);
  CHECK(e.merge_accuracy <= 1.0);

  std::ostringstream csv;
  write_curves_csv(csv, r.curves);
  std::istringstream lines(csv.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == "epoch,structure_loss,refine_loss,ap_25,edge_error,merge_accuracy,map_before,map_after,seconds");
  CHECK(row.rfind("1,", 0) == 0);
}

TEST_CASE("non-finite loss stops training with a diagnostic dump") {
  auto data = small_corpus(2, 3);
  data[0].cloud.points[0].x() = std::nan("");
  const auto dump = scratch("nan_dump.json");
  std::filesystem::remove(dump);
  auto cfg = short_config();
  cfg.diagnostic_path = dump.string();
  try {
    train_toy(data, {}, category_taxonomy(Category::Chair), cfg);
    FAIL("expected NumericFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericFailure);
    CHECK(std::string(e.what()).find(dump.string()) != std::string::npos);
  }
  REQUIRE(std::filesystem::exists(dump));
  const auto j = read_json_file(dump.string());
  CHECK(j.contains("phase"));
  CHECK(j.contains("shapes"));
}

TEST_CASE("empty training split is rejected") {
  try {
    train_toy({}, {}, category_taxonomy(Category::Chair), short_config());
    FAIL("expected InvalidArgument");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("config json round trip") {
  TrainConfig c;
  c.seed = 17;
  c.epochs = 3;
  c.batch_size = 5;
  c.structure_optim.learning_rate = 2e-3;
  c.refine_passes = 2;
  c.eval_every = 0;
  c.max_steps = 40;
  c.diagnostic_path = "x.json";
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.seed == 17);
  CHECK(back.structure_optim.learning_rate == 2e-3);
  CHECK(TrainConfig::from_json(nlohmann::json::object()).to_json() == TrainConfig{}.to_json());
  try {
    TrainConfig::from_json(nlohmann::json{{"epochs", "many"}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() != ErrorKind::NumericFailure);
  }
}

TEST_CASE("structure loss gradients match finite differences") {
  const auto record = small_corpus(1, 4).front();
  ModelParams params = ModelParams::initialize(category_taxonomy(Category::Chair).size(), 3);
  std::mt19937_64 rng(8);
  for (const auto& name : {"g_box.rot.w", "g_box.offset.w", "g_box.scale.w"})
    for (auto& v : params.at(name).storage()) v = std::normal_distribution<double>(0, 0.05)(rng);
  const TrainConfig cfg;
  auto loss_of = [&](const ModelParams& p) {
    Graph g(p);
    return structure_loss(g, record, cfg).total.item();
  };
  ModelParams grads = params.zeros_like();
  {
    Graph g(params, &grads);
    g.tape.backward(structure_loss(g, record, cfg).total);
  }
  const std::vector<std::string> names{"f_part.l1.w", "f_child.w", "f_ctx.w", "g_edge.l1.w", "g_tau.b",
                                       "g_mp.0.msg.w", "g_mp.out.w", "g_box.hidden.w", "g_box.rot.w", "g_box.scale.b"};
  int probes = 0;
  for (const auto& name : names) {
    for (int k = 0; k < 2; ++k) {
      const std::size_t i = rng() % params.at(name).size();
      ModelParams plus = params, minus = params;
      plus.at(name)[i] += 1e-5;
      minus.at(name)[i] -= 1e-5;
      const double numeric = (loss_of(plus) - loss_of(minus)) / 2e-5;
      const double analytic = grads.at(name)[i];
      INFO(name, "[", i, "] analytic ", analytic, " numeric ", numeric);
      CHECK(std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}) <= 1e-4);
      ++probes;
    }
  }
  CHECK(probes >= 20);
}
