#include "sseg/geom.hpp"

#include "sseg/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace sseg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyPointSet: return "EmptyPointSet";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::EmptyShape: return "EmptyShape";
    case ErrorKind::MissingGeometry: return "MissingGeometry";
    case ErrorKind::InvalidCost: return "InvalidCost";
    case ErrorKind::InvalidSegmentation: return "InvalidSegmentation";
    case ErrorKind::DuplicateSource: return "DuplicateSource";
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NumericFailure: return "NumericFailure";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double norm = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(norm) || norm < 1e-12) {
    return;
  }
  w_ = w / norm;
  x_ = x / norm;
  y_ = y / norm;
  z_ = z / norm;
  if (w_ < 0.0) {
    w_ = -w_;
    x_ = -x_;
    y_ = -y_;
    z_ = -z_;
  }
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& rotation) {
  const Eigen::Quaterniond q(rotation);
  return {q.w(), q.x(), q.y(), q.z()};
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const Eigen::Quaterniond q(Eigen::AngleAxisd(angle, axis.normalized()));
  return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 UnitQuaternion::matrix() const {
  return Eigen::Quaterniond(w_, x_, y_, z_).toRotationMatrix();
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& rhs) const {
  const Eigen::Quaterniond q =
      Eigen::Quaterniond(w_, x_, y_, z_) * Eigen::Quaterniond(rhs.w_, rhs.x_, rhs.y_, rhs.z_);
  return {q.w(), q.x(), q.y(), q.z()};
}

OrientedBox::OrientedBox(const Vec3& translation, const Vec3& scale, const UnitQuaternion& rotation)
    : translation_(translation), scale_(scale), rotation_(rotation) {
  if (!translation.allFinite() || !scale.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "box parameters must be finite");
  }
  if ((scale.array() <= 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "box extents must be strictly positive");
  }
}

std::array<Vec3, 8> OrientedBox::corners() const {
  const Mat3 r = rotation_.matrix();
  const Vec3 half = 0.5 * scale_;
  std::array<Vec3, 8> out;
  for (int c = 0; c < 8; ++c) {
    const Vec3 local((c & 1) ? half.x() : -half.x(), (c & 2) ? half.y() : -half.y(),
                     (c & 4) ? half.z() : -half.z());
    out[c] = translation_ + r * local;
  }
  return out;
}

bool OrientedBox::contains(const Vec3& p, double inflate) const {
  const Vec3 local = rotation_.matrix().transpose() * (p - translation_);
  return (local.array().abs() <= (0.5 * scale_).array() + inflate).all();
}

std::pair<Vec3, Vec3> OrientedBox::aabb() const {
  const Vec3 half = (rotation_.matrix().cwiseAbs() * scale_) * 0.5;
  return {translation_ - half, translation_ + half};
}

OrientedBox OrientedBox::transformed(const UnitQuaternion& rotation, const Vec3& translation) const {
  return {rotation.rotate(translation_) + translation, scale_, rotation * rotation_};
}

Vec3 centroid(std::span<const Vec3> points) {
  if (points.empty()) {
    throw Error(ErrorKind::EmptyPointSet, "centroid of an empty point set");
  }
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

double aabb_diagonal(std::span<const Vec3> points) {
  if (points.empty()) return 0.0;
  Vec3 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

std::pair<Vec3, Vec3> extents_along(std::span<const Vec3> points, const Mat3& axes) {
  if (points.empty()) {
    throw Error(ErrorKind::EmptyPointSet, "extents of an empty point set");
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : points) {
    const Vec3 proj = axes.transpose() * p;
    lo = lo.cwiseMin(proj);
    hi = hi.cwiseMax(proj);
  }
  const Vec3 extent = (hi - lo).cwiseMax(Vec3::Constant(kExtentFloor));
  return {extent, axes * (0.5 * (lo + hi))};
}

namespace {

// Canonical direction: nonnegative dot with (1,1,1), ties resolved toward +x.
Vec3 canonical_sign(const Vec3& axis) {
  const double d = axis.sum();
  if (d > 0.0) return axis;
  if (d < 0.0) return -axis;
  for (int k = 0; k < 3; ++k) {
    if (axis[k] > 0.0) return axis;
    if (axis[k] < 0.0) return -axis;
  }
  return axis;
}

}  // namespace

AxisExtremes axis_extremes(std::span<const Vec3> points, const Mat3& axes) {
  if (points.empty()) throw Error(ErrorKind::EmptyPointSet, "extremes of an empty point set");
  AxisExtremes out;
  for (int a = 0; a < 3; ++a) {
    const Vec3 axis = axes.col(a);
    std::size_t lo = 0, hi = 0;
    double vlo = axis.dot(points[0]), vhi = vlo;
    for (std::size_t i = 1; i < points.size(); ++i) {
      const double v = axis.dot(points[i]);
      if (v < vlo) vlo = v, lo = i;
      if (v > vhi) vhi = v, hi = i;
    }
    out.lo[static_cast<std::size_t>(a)] = lo;
    out.hi[static_cast<std::size_t>(a)] = hi;
  }
  return out;
}

std::vector<Vec3> inlier_points(std::span<const Vec3> points, double factor) {
  if (!(factor > 0.0)) throw Error(ErrorKind::InvalidArgument, "inlier_points: factor must be positive");
  const std::size_t n = points.size();
  if (n < 3) return {points.begin(), points.end()};
  // Sweep in x order; stop once the x gap alone exceeds the best distance.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a].x() < points[b].x() || (points[a].x() == points[b].x() && a < b);
  });
  std::vector<double> nn(n, std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < n; ++r) {
    const Vec3& p = points[order[r]];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = r + 1; k < n; ++k) {
      const double dx = points[order[k]].x() - p.x();
      if (dx * dx >= best) break;
      best = std::min(best, (points[order[k]] - p).squaredNorm());
    }
    for (std::size_t k = r; k-- > 0;) {
      const double dx = p.x() - points[order[k]].x();
      if (dx * dx >= best) break;
      best = std::min(best, (points[order[k]] - p).squaredNorm());
    }
    nn[order[r]] = std::sqrt(best);
  }
  std::vector<double> sorted = nn;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double cut = factor * std::max(*mid, kExtentFloor);
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (nn[i] <= cut) out.push_back(points[i]);
  }
  return out;
}

OrientedBox pca_obb(std::span<const Vec3> points) {
  if (points.empty()) {
    throw Error(ErrorKind::EmptyPointSet, "pca_obb: empty point set");
  }
  for (const auto& p : points) {
    if (!p.allFinite()) throw Error(ErrorKind::InvalidArgument, "pca_obb: non-finite point");
  }
  const Vec3 c = centroid(points);
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - c;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  const Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  const Vec3 values = solver.eigenvalues();
  const Mat3 vectors = solver.eigenvectors();
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] > values[b]; });

  Mat3 axes;
  axes.col(0) = canonical_sign(vectors.col(order[0]).normalized());
  axes.col(1) = canonical_sign(vectors.col(order[1]).normalized());
  axes.col(2) = axes.col(0).cross(axes.col(1)).normalized();

  const auto [extent, center] = extents_along(points, axes);
  return {center, extent, UnitQuaternion::from_matrix(axes)};
}

double aabb_iou(const OrientedBox& a, const OrientedBox& b) {
  const Vec3 alo = a.translation() - 0.5 * a.scale(), ahi = a.translation() + 0.5 * a.scale();
  const Vec3 blo = b.translation() - 0.5 * b.scale(), bhi = b.translation() + 0.5 * b.scale();
  const Vec3 overlap = (ahi.cwiseMin(bhi) - alo.cwiseMax(blo)).cwiseMax(Vec3::Zero());
  const double inter = overlap.prod();
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double box_iou_sampled(const OrientedBox& a, const OrientedBox& b, const IouConfig& config) {
  const int g = std::max(1, config.resolution);
  const auto [alo, ahi] = a.aabb();
  const auto [blo, bhi] = b.aabb();
  const Vec3 lo = alo.cwiseMax(blo);
  const Vec3 hi = ahi.cwiseMin(bhi);
  const Vec3 span = hi - lo;
  if ((span.array() <= 0.0).any()) return 0.0;

  const Mat3 ra = a.rotation().matrix().transpose();
  const Mat3 rb = b.rotation().matrix().transpose();
  const Vec3 ha = 0.5 * a.scale(), hb = 0.5 * b.scale();
  const Vec3 ta = a.translation(), tb = b.translation();
  const Vec3 cell = span / static_cast<double>(g);

  // One jittered sample per cell; offsets follow an additive recurrence so the
  // estimate is deterministic but boundary cells are not all-or-nothing.
  constexpr double kAlpha[3] = {0.8191725133961645, 0.6710436067037893, 0.5497004779019703};
  std::int64_t inside = 0;
  std::int64_t n = 0;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < g; ++k, ++n) {
        const double nd = static_cast<double>(n);
        const Vec3 jitter(std::fmod(0.5 + nd * kAlpha[0], 1.0), std::fmod(0.5 + nd * kAlpha[1], 1.0),
                          std::fmod(0.5 + nd * kAlpha[2], 1.0));
        const Vec3 p = lo + (Vec3(i, j, k) + jitter).cwiseProduct(cell);
        const Vec3 la = ra * (p - ta);
        if ((la.array().abs() > ha.array()).any()) continue;
        const Vec3 lb = rb * (p - tb);
        if ((lb.array().abs() > hb.array()).any()) continue;
        ++inside;
      }
    }
  }
  const double inter = static_cast<double>(inside) / static_cast<double>(n) * span.prod();
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double box_iou(const OrientedBox& a, const OrientedBox& b, const IouConfig& config) {
  if (a == b) return 1.0;
  if (a.rotation().is_identity() && b.rotation().is_identity()) return aabb_iou(a, b);
  return box_iou_sampled(a, b, config);
}

double box_gap(const OrientedBox& a, const OrientedBox& b) {
  const Mat3 ra = a.rotation().matrix();
  const Mat3 rb = b.rotation().matrix();
  const Vec3 ha = 0.5 * a.scale(), hb = 0.5 * b.scale();
  const Vec3 d = b.translation() - a.translation();

  std::vector<Vec3> axes;
  axes.reserve(15);
  for (int i = 0; i < 3; ++i) axes.push_back(ra.col(i));
  for (int i = 0; i < 3; ++i) axes.push_back(rb.col(i));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Vec3 c = ra.col(i).cross(rb.col(j));
      if (c.norm() > 1e-9) axes.push_back(c.normalized());
    }
  }
  double gap = 0.0;
  for (const auto& axis : axes) {
    const double radius_a = (ra.transpose() * axis).cwiseAbs().dot(ha);
    const double radius_b = (rb.transpose() * axis).cwiseAbs().dot(hb);
    gap = std::max(gap, std::abs(axis.dot(d)) - radius_a - radius_b);
  }
  return gap;
}

double chamfer_sq(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorKind::EmptyPointSet, "chamfer_sq: empty point set");
  }
  auto directed = [](std::span<const Vec3> from, std::span<const Vec3> to) {
    std::vector<Vec3> sorted(to.begin(), to.end());
    std::sort(sorted.begin(), sorted.end(), [](const Vec3& p, const Vec3& q) { return p.x() < q.x(); });
    double total = 0.0;
    for (const auto& p : from) {
      const auto start = std::lower_bound(sorted.begin(), sorted.end(), p.x(),
                                          [](const Vec3& q, double x) { return q.x() < x; });
      double best = std::numeric_limits<double>::infinity();
      for (auto it = start; it != sorted.end(); ++it) {
        const double dx = it->x() - p.x();
        if (dx * dx >= best) break;
        best = std::min(best, (*it - p).squaredNorm());
      }
      for (auto it = start; it != sorted.begin();) {
        --it;
        const double dx = p.x() - it->x();
        if (dx * dx >= best) break;
        best = std::min(best, (*it - p).squaredNorm());
      }
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return directed(a, b) + directed(b, a);
}

}  // namespace sseg
