#pragma once

// Pinhole cameras, rays and the radial scene contraction.
//
// Conventions: poses are camera-to-world; in the camera frame +z looks
// forward, +x points right and +y points down. Pixel (u, v) addresses the
// continuous image plane, so the center of texel (i, j) is (j + 0.5, i + 0.5).

#include "vsnerf/common.hpp"

#include <optional>

namespace vsnerf {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    require(fx > 0.0 && fy > 0.0, "intrinsics: focal lengths must be positive");
    require(width > 0 && height > 0, "intrinsics: image size must be positive");
    require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height,
            "intrinsics: principal point outside the image");
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

struct Pose {
  Mat3 rotation = Mat3::Identity();  // camera-to-world
  Vec3 translation = Vec3::Zero();   // camera center in world frame

  void validate() const {
    const double orth = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    require(orth <= 1e-9, "pose: rotation is not orthonormal (error ", orth, ")");
    require(std::abs(rotation.determinant() - 1.0) <= 1e-9, "pose: rotation determinant is not +1");
  }

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }

  void validate() const {
    require(std::abs(direction.norm() - 1.0) <= 1e-9, "ray: direction is not unit length");
    require(t_near >= 0.0 && t_near < t_far, "ray: need 0 <= t_near < t_far");
  }
};

struct Camera {
  CameraIntrinsics intrinsics;
  Pose pose;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Back-projects pixel (u, v) into a world-space ray. Bounds are [0, width) x [0, height).
inline Ray generate_ray(const Camera& camera, double u, double v, double t_near = 0.0,
                        double t_far = 1.0) {
  const auto& k = camera.intrinsics;
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height))
    fail("generate_ray: pixel (", u, ", ", v, ") outside ", k.width, "x", k.height, " image");
  const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  Ray ray;
  ray.origin = camera.pose.translation;
  ray.direction = (camera.pose.rotation * dir_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

/// Projects a world point; empty when behind the camera or outside the image.
/// Visibility is field-of-view only, occluders are not considered.
inline std::optional<Projection> project(const Camera& camera, const Vec3& point) {
  const Vec3 p = camera.pose.rotation.transpose() * (point - camera.pose.translation);
  if (!(p.z() > 0.0)) return std::nullopt;
  const auto& k = camera.intrinsics;
  const double u = k.fx * p.x() / p.z() + k.cx;
  const double v = k.fy * p.y() / p.z() + k.cy;
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) return std::nullopt;
  return Projection{u, v, p.z()};
}

/// Radial contraction: identity inside the unit ball, (2 - 1/|x|) x/|x| outside.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 1> contract(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const S n = x.norm();
  if (n <= S(1)) return x;
  return (S(2) - S(1) / n) * (x / n);
}

/// Camera-to-world rotation for a camera at `eye` looking at `target`, with
/// `up` the world up direction (camera y points down, i.e. along -up).
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY()) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  require(right.norm() > 1e-12, "look_at: view direction parallel to up vector");
  right.normalize();
  const Vec3 down = forward.cross(right);
  Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

/// Entry/exit distances of a ray against a sphere; empty if it misses.
inline std::optional<std::pair<double, double>> intersect_sphere(const Vec3& origin, const Vec3& dir,
                                                                 const Vec3& center, double radius) {
  const Vec3 oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  // Stable form avoids cancellation for the nearer root.
  const double q = b > 0.0 ? -(b + s) : -(b - s);
  double t0 = q;
  double t1 = q != 0.0 ? c / q : -b;
  if (t0 > t1) std::swap(t0, t1);
  return std::make_pair(t0, t1);
}

}  // namespace vsnerf
