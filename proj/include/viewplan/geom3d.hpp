#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

namespace viewplan {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// 3D rotation stored as a unit quaternion with canonical sign (w >= 0).
struct Rotation {
  Eigen::Quaterniond q{1.0, 0.0, 0.0, 0.0};

  static Rotation identity() { return Rotation{}; }

  static Rotation from_quaternion(double w, double x, double y, double z) {
    Eigen::Quaterniond raw(w, x, y, z);
    const double n = raw.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::domain_error("Rotation: quaternion norm must be positive and finite");
    }
    Rotation r;
    r.q = raw.normalized();
    r.canonicalize();
    return r;
  }

  static Rotation from_matrix(const Mat3& m) {
    Rotation r;
    r.q = Eigen::Quaterniond(m).normalized();
    r.canonicalize();
    return r;
  }

  // Axis-angle vector: direction = axis, norm = angle in radians.
  static Rotation from_axis_angle(const Vec3& aa) {
    const double angle = aa.norm();
    Rotation r;
    if (angle < 1e-300) return r;
    r.q = Eigen::Quaterniond(Eigen::AngleAxisd(angle, aa / angle));
    r.canonicalize();
    return r;
  }

  void canonicalize() {
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  }

  Mat3 matrix() const { return q.toRotationMatrix(); }

  Rotation inverse() const {
    Rotation r;
    r.q = q.conjugate();
    r.canonicalize();
    return r;
  }

  Rotation operator*(const Rotation& other) const {
    Rotation r;
    r.q = q * other.q;
    r.q.normalize();
    r.canonicalize();
    return r;
  }

  Vec3 operator*(const Vec3& v) const { return q * v; }

  // First two columns of the rotation matrix, stacked column-major.
  Vec6 to_rot6d() const {
    const Mat3 m = matrix();
    Vec6 out;
    out << m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1);
    return out;
  }
};

/// Gram-Schmidt decode of the 6D rotation representation.
/// Returns false (leaving out untouched) when either column degenerates.
inline bool try_rot6d_to_rotation(const Vec6& v, Rotation* out, double tol = 1e-8) {
  const Vec3 a1 = v.head<3>();
  const Vec3 a2 = v.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 > tol) || !a1.allFinite() || !a2.allFinite()) return false;
  const Vec3 b1 = a1 / n1;
  const Vec3 r2 = a2 - b1.dot(a2) * b1;
  const double n2 = r2.norm();
  if (!(n2 > tol)) return false;
  const Vec3 b2 = r2 / n2;
  const Vec3 b3 = b1.cross(b2);
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b3;
  *out = Rotation::from_matrix(m);
  return true;
}

inline Rotation rot6d_to_rotation(const Vec6& v) {
  Rotation r;
  if (!try_rot6d_to_rotation(v, &r)) {
    throw std::domain_error("rot6d_to_rotation: degenerate 6D rotation input");
  }
  return r;
}

// Spherical interpolation along the shorter arc, u in [0,1].
inline Rotation slerp(const Rotation& a, const Rotation& b, double u) {
  Rotation r;
  r.q = a.q.slerp(u, b.q);
  r.canonicalize();
  return r;
}

/// Camera pose in world coordinates (camera-to-world transform).
/// Camera frame: +z forward (optical axis), +x right, +y down.
struct Pose {
  Vec3 position{0.0, 0.0, 0.0};
  Rotation rotation;

  static Pose identity() { return Pose{}; }

  Vec3 to_camera(const Vec3& p_world) const {
    return rotation.inverse() * (p_world - position);
  }

  Vec3 to_world(const Vec3& p_camera) const {
    return rotation * p_camera + position;
  }

  Pose inverse() const {
    Pose p;
    p.rotation = rotation.inverse();
    p.position = -(p.rotation * position);
    return p;
  }

  Pose operator*(const Pose& other) const {
    Pose p;
    p.rotation = rotation * other.rotation;
    p.position = rotation * other.position + position;
    return p;
  }
};

// World point into the camera frame of `pose`.
inline Vec3 transform_point(const Pose& pose, const Vec3& p_world) {
  return pose.to_camera(p_world);
}

inline Vec3 transform_point_inverse(const Pose& pose, const Vec3& p_camera) {
  return pose.to_world(p_camera);
}

// Pose at `eye` whose optical axis points at `target`. Throws when the view
// direction is parallel to `up` or the eye coincides with the target.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 0, 1)) {
  const Vec3 f = target - eye;
  const double fn = f.norm();
  if (!(fn > 1e-12)) throw std::domain_error("look_at: eye coincides with target");
  const Vec3 z = f / fn;
  Vec3 x = z.cross(up);
  const double xn = x.norm();
  if (!(xn > 1e-9)) throw std::domain_error("look_at: view direction parallel to up");
  x /= xn;
  const Vec3 y = z.cross(x);
  Mat3 m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = z;
  return Pose{eye, Rotation::from_matrix(m)};
}

/// Pinhole intrinsics; image domain is [0,W) x [0,H).
struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("CameraIntrinsics: image size must be positive");
    }
  }
};

struct Projection {
  double u = 0.0, v = 0.0, depth = 0.0;
  bool degenerate = false;  // |z| within 1e-12 of zero; caller treats as out of FoV
};

inline Projection project(const CameraIntrinsics& intr, const Pose& pose, const Vec3& q_world) {
  const Vec3 pc = pose.to_camera(q_world);
  Projection pr;
  pr.depth = pc.z();
  if (std::abs(pc.z()) < 1e-12) {
    pr.degenerate = true;
    return pr;
  }
  pr.u = intr.fx * pc.x() / pc.z() + intr.cx;
  pr.v = intr.fy * pc.y() / pc.z() + intr.cy;
  return pr;
}

// Camera-frame point at pixel (u,v) and depth z (z > 0 in front of the camera).
inline Vec3 unproject(const CameraIntrinsics& intr, double u, double v, double depth) {
  return Vec3((u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth);
}

// In-image test with strict upper bounds: depth > 0, 0 <= u < W, 0 <= v < H.
inline bool in_fov(const CameraIntrinsics& intr, double u, double v, double depth) {
  return depth > 0.0 && u >= 0.0 && u < static_cast<double>(intr.width) && v >= 0.0 &&
         v < static_cast<double>(intr.height);
}

inline bool in_fov(const CameraIntrinsics& intr, const Projection& pr) {
  return !pr.degenerate && in_fov(intr, pr.u, pr.v, pr.depth);
}

}  // namespace viewplan
