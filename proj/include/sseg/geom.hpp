#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <span>
#include <vector>

namespace sseg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation stored as a unit quaternion with canonical sign (w >= 0).
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  /// Normalizes the input; a near-zero quaternion becomes the identity.
  UnitQuaternion(double w, double x, double y, double z);
  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_matrix(const Mat3& rotation);
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Mat3 matrix() const;
  bool is_identity() const { return w_ == 1.0 && x_ == 0.0 && y_ == 0.0 && z_ == 0.0; }
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;
  Vec3 rotate(const Vec3& v) const { return matrix() * v; }

  friend bool operator==(const UnitQuaternion&, const UnitQuaternion&) = default;

 private:
  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

/// Oriented box: center, full extents along the local axes, rotation.
class OrientedBox {
 public:
  OrientedBox(const Vec3& translation, const Vec3& scale,
              const UnitQuaternion& rotation = UnitQuaternion::identity());

  const Vec3& translation() const { return translation_; }
  const Vec3& scale() const { return scale_; }
  const UnitQuaternion& rotation() const { return rotation_; }

  double volume() const { return scale_.x() * scale_.y() * scale_.z(); }
  std::array<Vec3, 8> corners() const;
  bool contains(const Vec3& p, double inflate = 0.0) const;
  /// Axis-aligned bounds of the corners.
  std::pair<Vec3, Vec3> aabb() const;
  /// Rigid transform applied to the box (rotation first, then translation).
  OrientedBox transformed(const UnitQuaternion& rotation, const Vec3& translation) const;

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;

 private:
  Vec3 translation_;
  Vec3 scale_;
  UnitQuaternion rotation_;
};

inline constexpr double kExtentFloor = 1e-6;

struct IouConfig {
  /// Samples per axis of the stratified grid (G = resolution^3).
  int resolution = 32;
};

/// PCA-fitted box: principal axes of the centroid covariance ordered by
/// descending eigenvalue; center and extents from the span of the projections
/// (extents floored at kExtentFloor).
OrientedBox pca_obb(std::span<const Vec3> points);

/// Points along one box's own axes: returns the extent of the projections on
/// the rotation's axes and the midpoint of those projections (world frame).
std::pair<Vec3, Vec3> extents_along(std::span<const Vec3> points, const Mat3& axes);

/// Per axis (column of `axes`), indices of the points with the lowest and
/// highest projection (lowest index on ties).
struct AxisExtremes {
  std::array<std::size_t, 3> lo{};
  std::array<std::size_t, 3> hi{};
};
AxisExtremes axis_extremes(std::span<const Vec3> points, const Mat3& axes);

/// Drops isolated points: those whose nearest neighbor is farther than
/// `factor` times the median nearest-neighbor distance. Order is kept;
/// fewer than three points are returned unchanged.
std::vector<Vec3> inlier_points(std::span<const Vec3> points, double factor = 4.0);

/// IoU of two oriented boxes. Exact when both rotations are the identity,
/// otherwise stratified sampling.
double box_iou(const OrientedBox& a, const OrientedBox& b, const IouConfig& config = {});
/// Always takes the sampled route; exposed for oracle tests.
double box_iou_sampled(const OrientedBox& a, const OrientedBox& b, const IouConfig& config = {});
/// Closed form for two axis-aligned boxes (rotations ignored).
double aabb_iou(const OrientedBox& a, const OrientedBox& b);

/// Lower bound of the Euclidean gap between two boxes from the separating-axis
/// test; zero when the boxes touch or overlap. Exact for axis-aligned boxes
/// separated along one axis.
double box_gap(const OrientedBox& a, const OrientedBox& b);

/// Symmetric squared chamfer distance (mean of squared nearest-neighbour
/// distances in both directions).
double chamfer_sq(std::span<const Vec3> a, std::span<const Vec3> b);

Vec3 centroid(std::span<const Vec3> points);
/// Diagonal length of the axis-aligned bounds.
double aabb_diagonal(std::span<const Vec3> points);

}  // namespace sseg
