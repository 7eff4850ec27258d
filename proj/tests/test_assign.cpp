#include "fixtures.hpp"

#include "sseg/assign.hpp"
#include "sseg/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

using namespace sseg;
using fixture::aabb_box;

namespace {

// Minimum over all injections of the smaller side into the larger.
double brute_min(const CostMatrix& c) {
  const bool flip = c.rows() > c.cols();
  const CostMatrix a = flip ? CostMatrix(c.transpose()) : c;
  const int n = static_cast<int>(a.rows()), m = static_cast<int>(a.cols());
  std::vector<int> cols(static_cast<std::size_t>(m));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += a(i, cols[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

CostMatrix random_cost(std::mt19937_64& rng, int n, int m) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  CostMatrix c(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) c(i, j) = u(rng);
  return c;
}

void check_partition(const Assignment& a, int n, int m) {
  std::vector<int> rows, cols;
  for (auto [p, g] : a.pairs) {
    rows.push_back(p);
    cols.push_back(g);
  }
  rows.insert(rows.end(), a.unmatched_pred.begin(), a.unmatched_pred.end());
  cols.insert(cols.end(), a.unmatched_gt.begin(), a.unmatched_gt.end());
  std::sort(rows.begin(), rows.end());
  std::sort(cols.begin(), cols.end());
  std::vector<int> all_rows(static_cast<std::size_t>(n)), all_cols(static_cast<std::size_t>(m));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::iota(all_cols.begin(), all_cols.end(), 0);
  CHECK(rows == all_rows);
  CHECK(cols == all_cols);
}

fixture::Shape legs_and_seat(const Taxonomy& tax, const std::vector<int>& order) {
  auto parts = fixture::chair_parts();
  std::vector<fixture::Part> out;
  for (int k : order) out.push_back(parts[static_cast<std::size_t>(k)]);
  return fixture::make_shape(tax, out, false);
}

}  // namespace

TEST_CASE("hungarian small examples") {
  CostMatrix c(2, 2);
  c << 1, 2, 2, 1;
  const auto a = hungarian(c);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(a.total_cost == 2.0);

  const auto empty = hungarian(CostMatrix(0, 3));
  CHECK(empty.pairs.empty());
  CHECK(empty.unmatched_gt == std::vector<int>{0, 1, 2});
  CHECK(empty.total_cost == 0.0);

  CHECK(hungarian(CostMatrix(2, 0)).unmatched_pred == std::vector<int>{0, 1});
}

TEST_CASE("hungarian equals the permutation minimum") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const auto c = random_cost(rng, 6, 6);
    const auto a = hungarian(c);
    CHECK(a.pairs.size() == 6);
    CHECK(a.total_cost == doctest::Approx(brute_min(c)).epsilon(1e-12));
    check_partition(a, 6, 6);
  }
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6), m = 1 + static_cast<int>(rng() % 6);
    const auto c = random_cost(rng, n, m);
    const auto a = hungarian(c);
    CHECK(a.pairs.size() == static_cast<std::size_t>(std::min(n, m)));
    CHECK(a.total_cost == doctest::Approx(brute_min(c)).epsilon(1e-12));
    check_partition(a, n, m);
  }
}

TEST_CASE("hungarian transpose and shift properties") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5), m = 1 + static_cast<int>(rng() % 5);
    const auto c = random_cost(rng, n, m);
    const auto a = hungarian(c);
    const auto t = hungarian(CostMatrix(c.transpose()));
    std::vector<std::pair<int, int>> flipped;
    for (auto [p, g] : t.pairs) flipped.emplace_back(g, p);
    std::sort(flipped.begin(), flipped.end());
    CHECK(flipped == a.pairs);
    const CostMatrix shifted = c.array() + 3.5;
    CHECK(hungarian(shifted).pairs == a.pairs);
  }
}

TEST_CASE("hungarian ties go to the lowest row and column") {
  CHECK(hungarian(CostMatrix::Zero(3, 3)).pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});
  CostMatrix c(2, 3);
  c << 1, 1, 0, 1, 1, 0;
  // Row 0 takes the first column reaching the optimum total of 1.
  CHECK(hungarian(c).pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 2}});
}

TEST_CASE("hungarian forbidden pairs and bad input") {
  CostMatrix c(2, 2);
  c << kForbidden, kForbidden, 0.5, kForbidden;
  const auto a = hungarian(c);
  CHECK(a.pairs == std::vector<std::pair<int, int>>{{1, 0}});
  CHECK(a.unmatched_pred == std::vector<int>{0});
  CHECK(a.unmatched_gt == std::vector<int>{1});
  CHECK(a.total_cost == 0.5);
  CHECK(a.gt_of(1) == 0);
  CHECK(a.gt_of(0) == -1);
  CHECK(a.pred_of(0) == 1);

  c(0, 1) = std::nan("");
  try {
    hungarian(c);
    FAIL("expected InvalidCost");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidCost);
  }
}

TEST_CASE("match_leaves identity, spurious and shuffled") {
  const auto tax = fixture::chair_taxonomy();
  const auto gt = legs_and_seat(tax, {0, 1, 2, 3, 4, 5});
  const auto same = match_leaves(gt.h, gt.h);
  CHECK(same.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}});
  CHECK(same.total_cost == doctest::Approx(0.0));

  auto parts = fixture::chair_parts();
  parts.push_back({"seat", aabb_box(Vec3(5, 5, 5), Vec3(5.2, 5.2, 5.2))});
  const auto extra = fixture::make_shape(tax, parts, false);
  const auto a = match_leaves(extra.h, gt.h);
  CHECK(a.pairs.size() == 6);
  CHECK(a.unmatched_pred == std::vector<int>{6});

  const std::vector<int> perm{3, 0, 4, 1, 2};
  const auto shuffled = legs_and_seat(tax, perm);
  const auto originals = legs_and_seat(tax, {0, 1, 2, 3, 4});
  const auto m = match_leaves(shuffled.h, originals.h);
  REQUIRE(m.pairs.size() == 5);
  for (auto [p, g] : m.pairs) CHECK(g == perm[static_cast<std::size_t>(p)]);
}

TEST_CASE("match_leaves needs boxes") {
  const auto tax = fixture::chair_taxonomy();
  auto s = legs_and_seat(tax, {0, 4});
  auto missing = s.h;
  missing.node(1).box.reset();
  CHECK_THROWS_AS(match_leaves(missing, s.h), Error);
  CHECK_THROWS_AS(match_same_semantics(s.h, missing), Error);
}

TEST_CASE("match_same_semantics keeps labels apart") {
  const auto tax = fixture::chair_taxonomy();
  auto parts = fixture::chair_parts();
  // A leg alone versus a seat alone in the same place.
  const auto leg = fixture::make_shape(tax, {{"leg", parts[4].box}}, false);
  const auto seat = fixture::make_shape(tax, {{"seat", parts[4].box}}, false);
  for (auto [p, g] : match_same_semantics(leg.h, seat.h).pairs) {
    CHECK(leg.h.node(p).semantic == seat.h.node(g).semantic);
    CHECK_FALSE(leg.h.node(p).is_leaf());
  }
  const auto leaves = match_same_semantics(leg.h, seat.h);
  CHECK(std::none_of(leaves.pairs.begin(), leaves.pairs.end(),
                     [&](auto pg) { return leg.h.node(pg.first).is_leaf(); }));

  const std::vector<int> perm{2, 0, 3, 1};
  const auto pred = legs_and_seat(tax, perm);
  const auto gt = legs_and_seat(tax, {0, 1, 2, 3});
  const auto m = match_same_semantics(pred.h, gt.h);
  int leaf_pairs = 0;
  for (auto [p, g] : m.pairs) {
    CHECK(pred.h.node(p).semantic == gt.h.node(g).semantic);
    if (pred.h.node(p).is_leaf()) {
      ++leaf_pairs;
      CHECK(g == perm[static_cast<std::size_t>(p)]);
    }
  }
  CHECK(leaf_pairs == 4);

  const auto mixed_pred = legs_and_seat(tax, {4, 1, 0});
  const auto mixed_gt = legs_and_seat(tax, {0, 4, 1});
  int mixed = 0;
  for (auto [p, g] : match_same_semantics(mixed_pred.h, mixed_gt.h).pairs) {
    CHECK(mixed_pred.h.node(p).semantic == mixed_gt.h.node(g).semantic);
    if (mixed_pred.h.node(p).is_leaf()) ++mixed;
  }
  CHECK(mixed == 3);
}

TEST_CASE("corner distance") {
  const auto a = aabb_box(Vec3(0, 0, 0), Vec3(1, 1, 1));
  CHECK(corner_distance(a, a) == 0.0);
  const auto shifted = aabb_box(Vec3(0.5, 0, 0), Vec3(1.5, 1, 1));
  // Each corner lies 0.5 from the nearest target corner along x.
  CHECK(corner_distance(shifted, a) == doctest::Approx(0.25));
}
