#include "fixtures.hpp"

#include "sseg/error.hpp"
#include "sseg/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace sseg;
using fixture::aabb_box;

namespace {

fixture::Shape chair(const std::vector<int>& order) {
  const auto tax = fixture::chair_taxonomy();
  const auto parts = fixture::chair_parts();
  std::vector<fixture::Part> out;
  for (int k : order) out.push_back(parts[static_cast<std::size_t>(k)]);
  return fixture::make_shape(tax, out);
}

Hierarchy with_relations(Hierarchy h, const std::vector<std::tuple<NodeId, NodeId, RelationType>>& rels) {
  h.relations.clear();
  for (auto [a, b, t] : rels) {
    auto set = h.relation(a, b);
    set.insert(t);
    h.set_relation(a, b, set);
  }
  return h;
}

ScoredSegment seg(int first, int last, LabelId label, double confidence = 1.0) {
  ScoredSegment s;
  for (int i = first; i <= last; ++i) s.point_indices.push_back(i);
  s.semantic = label;
  s.confidence = confidence;
  return s;
}

// F1-based error written out from the counts.
double ee_oracle(double tp, double np, double ng) {
  if (np == 0 && ng == 0) return 0.0;
  const double p = np > 0 ? tp / np : 0.0, r = ng > 0 ? tp / ng : 0.0;
  return p + r == 0 ? 1.0 : 1.0 - 2.0 * p * r / (p + r);
}

}  // namespace

TEST_CASE("edge error from counts") {
  CHECK(edge_error_from_counts({1, 2, 2}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(edge_error_from_counts({1, 1, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(edge_error_from_counts({0, 0, 0}) == 0.0);
  CHECK(edge_error_from_counts({0, 0, 3}) == 1.0);
  CHECK(edge_error_from_counts({0, 3, 0}) == 1.0);
  for (long tp = 0; tp <= 4; ++tp)
    for (long np = tp; np <= 6; ++np)
      for (long ng = tp; ng <= 6; ++ng) {
        const double v = edge_error_from_counts({tp, np, ng});
        CHECK(std::abs(v - ee_oracle(tp, np, ng)) <= 1e-12);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
}

TEST_CASE("edge error on hand-built relation fixtures") {
  const auto s = chair({0, 1, 2, 3, 4, 5});
  CHECK(edge_error(s.h, s.h) == 0.0);
  CHECK(edge_counts(s.h, s.h).true_pos == edge_counts(s.h, s.h).gt_total);

  using T = RelationType;
  const auto gt = with_relations(s.h, {{0, 1, T::Translational}, {2, 3, T::Translational}});
  const auto half = with_relations(s.h, {{0, 1, T::Translational}, {0, 2, T::Reflective}});
  const auto counts = edge_counts(half, gt);
  CHECK(counts.true_pos == 1);
  CHECK(counts.pred_total == 2);
  CHECK(counts.gt_total == 2);
  CHECK(edge_error(half, gt) == doctest::Approx(0.5).epsilon(1e-12));

  const auto subset = with_relations(s.h, {{0, 1, T::Translational}});
  CHECK(edge_error(subset, gt) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // A multi-type pair counts once per type.
  const auto multi = with_relations(s.h, {{0, 1, T::Translational}, {0, 1, T::Adjacent}});
  CHECK(edge_counts(multi, gt).pred_total == 2);
  CHECK(edge_counts(multi, gt).true_pos == 1);

  const auto none = with_relations(s.h, {});
  CHECK(edge_error(none, gt) == 1.0);
  CHECK(edge_error(none, none) == 0.0);
}

TEST_CASE("part_ap examples") {
  const auto tax = fixture::chair_taxonomy();
  const auto gt = chair({0, 1, 2, 3});
  CHECK(part_ap(gt.h, gt.h) == 1.0);

  auto parts = fixture::chair_parts();
  std::vector<fixture::Part> extra(parts.begin(), parts.begin() + 4);
  extra.push_back({"leg", aabb_box(Vec3(3, 3, 3), Vec3(3.1, 3.1, 3.1))});
  const auto pred = fixture::make_shape(tax, extra);
  CHECK(part_ap(pred.h, gt.h) == doctest::Approx(0.8).epsilon(1e-12));

  std::vector<fixture::Part> far;
  for (const auto& p : parts) far.push_back({p.label, p.box.transformed(UnitQuaternion::identity(), Vec3(9, 0, 0))});
  const auto away = fixture::make_shape(tax, far);
  CHECK(part_ap(away.h, gt.h) == 0.0);
}

TEST_CASE("metrics are invariant to leaf order") {
  const auto a = chair({0, 1, 2, 3, 4, 5});
  std::vector<int> order{0, 1, 2, 3, 4, 5};
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto b = chair(order);
    CHECK(part_ap(b.h, a.h) == 1.0);
    CHECK(edge_error(b.h, a.h) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(structure_difference(a.h, b.h) == 0);
  }
}

TEST_CASE("part_ap is monotone in the threshold and bounded") {
  const auto tax = fixture::chair_taxonomy();
  const auto gt = chair({0, 1, 2, 3, 4, 5});
  std::mt19937_64 rng(32);
  std::normal_distribution<double> jitter(0.0, 0.03);
  for (int trial = 0; trial < 15; ++trial) {
    std::vector<fixture::Part> parts;
    for (auto p : fixture::chair_parts()) {
      const Vec3 shift(jitter(rng), jitter(rng), jitter(rng));
      parts.push_back({p.label, OrientedBox(p.box.translation() + shift, p.box.scale())});
    }
    const auto pred = fixture::make_shape(tax, parts);
    double prev = 1.0;
    for (double t : {0.05, 0.1, 0.25, 0.5, 0.75, 0.9}) {
      const double ap = part_ap(pred.h, gt.h, t);
      CHECK(ap <= prev + 1e-15);
      CHECK(ap >= 0.0);
      prev = ap;
    }
    const double ee = edge_error(pred.h, gt.h);
    CHECK(ee >= 0.0);
    CHECK(ee <= 1.0);
  }
}

TEST_CASE("segmentation mAP examples") {
  const std::vector<ScoredSegment> gt{seg(0, 4, 1), seg(5, 9, 1), seg(10, 19, 2)};
  CHECK(segmentation_map(gt, gt, 20).mean == 1.0);

  const auto one = segmentation_map({seg(0, 4, 1)}, {seg(0, 4, 1), seg(5, 9, 1)}, 10);
  CHECK(one.per_class.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  // Halves of one gt segment: the first is a hit, the second a miss.
  const auto halves = segmentation_map({seg(0, 4, 1), seg(5, 9, 1)}, {seg(0, 9, 1)}, 10);
  CHECK(halves.per_class.at(1) == doctest::Approx(1.0).epsilon(1e-12));
  const auto late = segmentation_map({seg(0, 4, 1, 0.4), seg(10, 12, 1, 0.9)}, {seg(0, 9, 1)}, 13);
  // Sorted by confidence: miss then hit, so precision at full recall is 1/2.
  CHECK(late.per_class.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  // Classes only in predictions do not count toward the mean.
  const auto extra = segmentation_map({seg(0, 4, 1), seg(5, 9, 7)}, {seg(0, 4, 1)}, 10);
  CHECK(extra.mean == 1.0);
  CHECK(extra.per_class.count(7) == 0);

  const auto missing = segmentation_map({seg(0, 4, 1)}, {seg(0, 4, 1), seg(5, 9, 2)}, 10);
  CHECK(missing.mean == doctest::Approx(0.5));

  CHECK_THROWS_AS(segmentation_map({seg(0, 40, 1)}, gt, 20), Error);
}

TEST_CASE("average precision all-points interpolation") {
  CHECK(average_precision({0.5}, {1.0}) == doctest::Approx(0.5));
  CHECK(average_precision({0.5, 0.5, 1.0}, {1.0, 0.5, 2.0 / 3.0}) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
  CHECK(average_precision({}, {}) == 0.0);
}

TEST_CASE("structure difference examples") {
  const auto tax = fixture::chair_taxonomy();
  const auto a = chair({0, 1, 2, 3, 4, 5});
  CHECK(structure_difference(a.h, a.h) == 0);
  const auto b = chair({4, 5});
  CHECK(structure_difference(a.h, b.h) == 4);
  CHECK(structure_difference(b.h, a.h) == 4);

  auto disjoint = chair({4, 5, 0});
  for (NodeId l : disjoint.h.leaves()) disjoint.h.node(l).semantic = 100 + l;
  CHECK(structure_difference(a.h, disjoint.h) == 9);
}

TEST_CASE("compensated sum and report averages") {
  CHECK(compensated_sum({1e16, 1.0, -1e16}) == 1.0);
  std::vector<double> v(1000, 0.1);
  CHECK(std::abs(compensated_sum(v) - 100.0) <= 1e-12);
  std::vector<double> shuffled = v;
  shuffled.push_back(1e10);
  shuffled.push_back(-1e10);
  std::mt19937_64 rng(33);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(std::abs(compensated_sum(shuffled) - 100.0) <= 1e-12);

  MetricReport r;
  r.per_shape = {{"a", 1.0, 0.0, 1.0}, {"b", 0.5, 0.5, 0.0}};
  r.finalize();
  CHECK(r.ap_25 == 0.75);
  CHECK(r.edge_error == 0.25);
  CHECK(r.map == 0.5);
  const auto table = r.to_table(true, false, false);
  CHECK(table.find("AP") != std::string::npos);
  CHECK(table.find("EE") == std::string::npos);
  CHECK(r.to_json()["per_shape"].size() == 2);
}

TEST_CASE("retrieval ordering") {
  const auto tax = fixture::chair_taxonomy();
  const auto full = chair({0, 1, 2, 3, 4, 5});
  const auto no_back = chair({0, 1, 2, 3, 4});
  const auto seat_only = chair({4});
  const auto& parts = fixture::chair_parts();
  std::vector<fixture::Part> moved;
  for (const auto& p : parts) moved.push_back({p.label, p.box.transformed(UnitQuaternion::identity(), Vec3(0.3, 0, 0))});
  const auto shifted = fixture::make_shape(tax, moved);

  const RetrievalEntry query{"q", &full.h, full.points};
  const std::vector<RetrievalEntry> corpus{{"seat", &seat_only.h, seat_only.points},
                                           {"shifted", &shifted.h, shifted.points},
                                           {"no_back", &no_back.h, no_back.points},
                                           {"same", &full.h, full.points}};
  const auto s = retrieve(query, corpus, RetrievalMode::Structure, 10);
  REQUIRE(s.size() == 4);
  CHECK(s[0].name == "same");
  CHECK(s[1].name == "shifted");
  CHECK(s[2].name == "no_back");
  CHECK(s[3].name == "seat");
  CHECK(s[2].structure_distance == 1);
  CHECK(s[0].chamfer == 0.0);
  CHECK(s[1].chamfer > 0.0);

  const auto c = retrieve(query, corpus, RetrievalMode::Chamfer, 2, 2);
  REQUIRE(c.size() == 2);
  CHECK(c[0].name == "same");
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i - 1].chamfer <= c[i].chamfer);
  CHECK(retrieve(query, corpus, RetrievalMode::Chamfer, 4, 1).front().index == 3);
  CHECK(retrieval_mode_from_string(to_string(RetrievalMode::Chamfer)) == RetrievalMode::Chamfer);
  CHECK_THROWS_AS(retrieval_mode_from_string("nope"), Error);
}

TEST_CASE("leaf segments mirror the leaves") {
  const auto a = chair({0, 1, 2, 3, 4, 5});
  const auto segs = leaf_segments(a.h);
  REQUIRE(segs.size() == 6);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    CHECK(segs[i].point_indices == a.h.node(static_cast<NodeId>(i)).point_indices);
    CHECK(segs[i].confidence == 1.0);
  }
}
