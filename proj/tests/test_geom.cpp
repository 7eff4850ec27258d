#include "sseg/error.hpp"
#include "sseg/geom.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace sseg;

namespace {

std::vector<Vec3> random_cloud(std::mt19937_64& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.emplace_back(u(rng), u(rng), u(rng));
  return out;
}

UnitQuaternion random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return UnitQuaternion(g(rng), g(rng), g(rng), g(rng));
}

double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto directed = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    double sum = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) best = std::min(best, (p - q).squaredNorm());
      sum += best;
    }
    return sum / static_cast<double>(x.size());
  };
  return directed(a, b) + directed(b, a);
}

// Axis-aligned overlap volume computed interval by interval.
double aabb_oracle(const Vec3& ca, const Vec3& sa, const Vec3& cb, const Vec3& sb) {
  double inter = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::max(ca[k] - sa[k] / 2, cb[k] - sb[k] / 2);
    const double hi = std::min(ca[k] + sa[k] / 2, cb[k] + sb[k] / 2);
    inter *= std::max(0.0, hi - lo);
  }
  return inter / (sa.prod() + sb.prod() - inter);
}

}  // namespace

TEST_CASE("quaternion is unit norm with w >= 0") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto q = random_rotation(rng);
    const double n = std::sqrt(q.w() * q.w() + q.x() * q.x() + q.y() * q.y() + q.z() * q.z());
    CHECK(std::abs(n - 1.0) <= 1e-9);
    CHECK(q.w() >= 0.0);
    const Mat3 r = q.matrix();
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    const auto back = UnitQuaternion::from_matrix(r);
    CHECK((back.matrix() - r).norm() < 1e-9);
  }
  UnitQuaternion neg(-1, 0, 0, 0);
  CHECK(neg.is_identity());
  CHECK(UnitQuaternion(0, 0, 0, 0).is_identity());
}

TEST_CASE("box rejects non-positive extents") {
  CHECK_THROWS_AS(OrientedBox(Vec3::Zero(), Vec3(1, 0, 1)), Error);
  CHECK_THROWS_AS(OrientedBox(Vec3::Zero(), Vec3(1, -1, 1)), Error);
  OrientedBox b(Vec3(1, 2, 3), Vec3(2, 4, 6));
  CHECK(b.corners().size() == 8);
  CHECK(b.volume() == doctest::Approx(48));
  for (const auto& c : b.corners()) CHECK(b.contains(c, 1e-12));
}

TEST_CASE("pca_obb on the unit cube corners") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i) pts.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  const auto box = pca_obb(pts);
  CHECK((box.translation() - Vec3(0.5, 0.5, 0.5)).norm() < 1e-12);
  CHECK((box.scale() - Vec3(1, 1, 1)).norm() < 1e-9);
  // Isotropic covariance: any frame is valid, but the cube must fit.
  for (const auto& p : pts) CHECK(box.contains(p, 1e-6));
}

TEST_CASE("pca_obb of a single point is floored") {
  const std::vector<Vec3> pts{Vec3(0.3, -0.2, 0.7)};
  const auto box = pca_obb(pts);
  CHECK(box.translation() == pts[0]);
  CHECK(box.scale() == Vec3::Constant(kExtentFloor));
  CHECK_THROWS_AS(pca_obb(std::vector<Vec3>{}), Error);
  try {
    pca_obb(std::vector<Vec3>{});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyPointSet);
  }
}

TEST_CASE("pca_obb recovers a rotated grid") {
  std::vector<Vec3> grid;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 4; ++k) grid.emplace_back(2.0 * i / 4 - 1.0, 1.0 * j / 4 - 0.5, 0.5 * k / 3 - 0.25);
  REQUIRE(grid.size() == 100);
  const auto q = UnitQuaternion::from_axis_angle(Vec3(0.3, -0.5, 0.8), 0.9);
  const Mat3 r = q.matrix();
  std::vector<Vec3> pts;
  for (const auto& p : grid) pts.push_back(r * p + Vec3(0.1, 0.2, 0.3));
  const auto box = pca_obb(pts);
  const Mat3 axes = box.rotation().matrix();
  const Vec3 expected(2.0, 1.0, 0.5);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(std::abs(axes.col(k).dot(r.col(k))) - 1.0) < 1e-9);
    CHECK(box.scale()[k] == doctest::Approx(expected[k]).epsilon(1e-6));
  }
  CHECK((box.translation() - Vec3(0.1, 0.2, 0.3)).norm() < 1e-9);
}

TEST_CASE("pca_obb frame invariants on random clouds") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto pts = random_cloud(rng, 30 + trial);
    const Vec3 stretch(3.0, 1.5, 0.4);
    const Mat3 r = random_rotation(rng).matrix();
    for (auto& p : pts) p = r * p.cwiseProduct(stretch);
    const auto box = pca_obb(pts);
    const Mat3 axes = box.rotation().matrix();
    CHECK((axes.transpose() * axes - Mat3::Identity()).norm() < 1e-9);
    CHECK(axes.determinant() > 0.0);
    for (const auto& p : pts) CHECK(box.contains(p, 1e-6));
    // Variance along the axes must be non-increasing.
    const Vec3 c = centroid(pts);
    Vec3 var = Vec3::Zero();
    for (const auto& p : pts) var += (axes.transpose() * (p - c)).cwiseAbs2();
    CHECK(var[0] >= var[1] - 1e-9);
    CHECK(var[1] >= var[2] - 1e-9);
  }
}

TEST_CASE("box_iou fast path against the interval oracle") {
  const OrientedBox unit(Vec3(0.5, 0.5, 0.5), Vec3(1, 1, 1));
  CHECK(box_iou(unit, unit) == 1.0);
  const OrientedBox shifted(Vec3(1.0, 0.5, 0.5), Vec3(1, 1, 1));
  CHECK(box_iou(unit, shifted) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(std::abs(box_iou_sampled(unit, shifted) - 1.0 / 3.0) <= 0.02);
  const OrientedBox far(Vec3(5, 5, 5), Vec3(1, 1, 1));
  CHECK(box_iou(unit, far) == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> c(-0.5, 0.5), s(0.2, 1.2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 ca(c(rng), c(rng), c(rng)), cb(c(rng), c(rng), c(rng));
    const Vec3 sa(s(rng), s(rng), s(rng)), sb(s(rng), s(rng), s(rng));
    const double oracle = aabb_oracle(ca, sa, cb, sb);
    const OrientedBox a(ca, sa), b(cb, sb);
    CHECK(box_iou(a, b) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(box_iou_sampled(a, b) - oracle) <= 0.02);
  }
}

TEST_CASE("box_iou symmetry and rigid invariance") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> c(-0.3, 0.3), s(0.3, 1.0);
  for (int i = 0; i < 60; ++i) {
    const OrientedBox a(Vec3(c(rng), c(rng), c(rng)), Vec3(s(rng), s(rng), s(rng)), random_rotation(rng));
    const OrientedBox b(Vec3(c(rng), c(rng), c(rng)), Vec3(s(rng), s(rng), s(rng)), random_rotation(rng));
    const double ab = box_iou(a, b);
    CHECK(ab == box_iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(box_iou(a, a) >= 0.98);
    const auto q = random_rotation(rng);
    const Vec3 t(c(rng), c(rng), c(rng));
    CHECK(std::abs(box_iou(a.transformed(q, t), b.transformed(q, t)) - ab) <= 0.02);
  }
}

TEST_CASE("box_iou is deterministic") {
  const OrientedBox a(Vec3::Zero(), Vec3(1, 0.5, 0.3), UnitQuaternion::from_axis_angle(Vec3::UnitZ(), 0.4));
  const OrientedBox b(Vec3(0.2, 0, 0), Vec3(0.7, 0.7, 0.7), UnitQuaternion::from_axis_angle(Vec3::UnitX(), 1.1));
  const double first = box_iou(a, b);
  for (int i = 0; i < 5; ++i) CHECK(box_iou(a, b) == first);
}

TEST_CASE("chamfer_sq examples") {
  const std::vector<Vec3> a{Vec3(0, 0, 0)}, b{Vec3(0, 0, 0.3)};
  CHECK(chamfer_sq(a, b) == doctest::Approx(2 * 0.09).epsilon(1e-15));
  CHECK(chamfer_sq(a, a) == 0.0);
  CHECK_THROWS_AS(chamfer_sq(a, std::vector<Vec3>{}), Error);
}

TEST_CASE("chamfer_sq equals the brute-force double loop") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = random_cloud(rng, 50), b = random_cloud(rng, 50 + trial);
    CHECK(chamfer_sq(a, b) == brute_chamfer(a, b));
    CHECK(chamfer_sq(a, b) == chamfer_sq(b, a));
  }
  // Duplicated points and shared x coordinates.
  std::vector<Vec3> a{Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 1, 0), Vec3(1, 0, 0)};
  std::vector<Vec3> b{Vec3(0, 1, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK(chamfer_sq(a, b) == 0.0);
  b.emplace_back(0, 0, 2);
  CHECK(chamfer_sq(a, b) == brute_chamfer(a, b));
}

TEST_CASE("axis_extremes against brute force") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_cloud(rng, 40);
    const Mat3 axes = random_rotation(rng).matrix();
    const auto ex = axis_extremes(pts, axes);
    for (int k = 0; k < 3; ++k) {
      std::size_t lo = 0, hi = 0;
      for (std::size_t i = 1; i < pts.size(); ++i) {
        const double v = axes.col(k).dot(pts[i]);
        if (v < axes.col(k).dot(pts[lo])) lo = i;
        if (v > axes.col(k).dot(pts[hi])) hi = i;
      }
      CHECK(ex.lo[static_cast<std::size_t>(k)] == lo);
      CHECK(ex.hi[static_cast<std::size_t>(k)] == hi);
    }
  }
  CHECK_THROWS_AS(axis_extremes(std::vector<Vec3>{}, Mat3::Identity()), Error);
}

TEST_CASE("inlier_points drops an isolated point and keeps order") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) pts.emplace_back(0.01 * i, 0.01 * j, 0.0);
  auto with_outlier = pts;
  with_outlier.insert(with_outlier.begin() + 37, Vec3(0.5, 0.5, 0.5));
  const auto kept = inlier_points(with_outlier);
  CHECK(kept == pts);
  CHECK(inlier_points(pts) == pts);
  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(9, 9, 9)};
  CHECK(inlier_points(two) == two);
  CHECK_THROWS_AS(inlier_points(pts, 0.0), Error);
}

TEST_CASE("extents_along and aabb") {
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(2, 1, 3)};
  const auto [extent, mid] = extents_along(pts, Mat3::Identity());
  CHECK(extent == Vec3(2, 1, 3));
  CHECK(mid == Vec3(1, 0.5, 1.5));
  CHECK(aabb_diagonal(pts) == doctest::Approx(std::sqrt(14.0)));
  const OrientedBox b(Vec3(1, 1, 1), Vec3(2, 2, 2), UnitQuaternion::from_axis_angle(Vec3::UnitZ(), M_PI / 4));
  const auto [mn, mx] = b.aabb();
  CHECK(mx.x() - mn.x() == doctest::Approx(2 * std::sqrt(2.0)));
  CHECK(mx.z() - mn.z() == doctest::Approx(2.0));
}

TEST_CASE("box_gap") {
  const OrientedBox a(Vec3(0, 0, 0), Vec3(1, 1, 1));
  const OrientedBox touching(Vec3(1, 0, 0), Vec3(1, 1, 1));
  const OrientedBox apart(Vec3(3, 0, 0), Vec3(1, 1, 1));
  CHECK(box_gap(a, touching) <= 1e-9);
  CHECK(box_gap(a, apart) == doctest::Approx(2.0).epsilon(1e-6));
}
