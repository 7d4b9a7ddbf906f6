#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gla/errors.hpp"

// Gaze-direction mathematics. All interfaces speak degrees and centimeters;
// radians only appear inside function bodies.
//
// Conventions (fixed once, shared by simulation and fitting):
//  * Camera coordinate system: x right, y down, z toward the scene, so a
//    subject in front of the camera looks along negative z.
//  * Euler angles compose as R = Rz(roll) * Ry(yaw) * Rx(pitch).
//  * Polar gaze: theta = asin(-g_y), phi = atan2(-g_x, -g_z); (0, 0) looks
//    straight into the camera.

namespace gla {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wraps an angle into the canonical range (-180, 180].
inline double canonical_deg(double d) {
  d = std::fmod(d, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

/// Unit gaze direction; invariant ||v|| == 1 up to 1e-9.
struct UnitGaze {
  Vec3 v{0.0, 0.0, -1.0};

  /// Normalizes a raw vector. Throws DegenerateRay below 1e-6 cm.
  static UnitGaze normalized(const Vec3& raw) {
    const double n = raw.norm();
    if (n <= 1e-6) throw DegenerateRay("near-zero gaze vector");
    return UnitGaze{raw / n};
  }
};

/// Gaze direction in polar form, degrees. theta is pitch (positive looking
/// up), phi is yaw (positive looking to the subject's left).
struct PolarGaze {
  double theta_deg = 0.0;
  double phi_deg = 0.0;
};

/// Euler rotation in degrees, canonical range (-180, 180].
struct EulerRot {
  double pitch_deg = 0.0;
  double yaw_deg = 0.0;
  double roll_deg = 0.0;
};

/// Screen-to-camera extrinsics: rotation orthonormal, translation in cm.
struct Extrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

/// On-screen gaze target (u, v) in cm, screen coordinate system.
struct ScreenTarget {
  double u = 0.0;
  double v = 0.0;
};

/// Unit direction from origin toward target. Throws DegenerateRay when the
/// two points are closer than 1e-6 cm.
inline UnitGaze gaze_direction(const Vec3& origin, const Vec3& target) {
  return UnitGaze::normalized(target - origin);
}

/// Angle between two unit directions in degrees, in [0, 180]. Evaluated as
/// atan2(||a x b||, a . b), which equals the clamped-arccos of the dot
/// product but cannot produce NaN and is exactly zero for identical inputs.
inline double angular_error_deg(const UnitGaze& a, const UnitGaze& b) {
  return rad2deg(std::atan2(a.v.cross(b.v).norm(), a.v.dot(b.v)));
}

/// Lifts a screen point (u, v) to camera space: R * (u, v, 0) + T.
inline Vec3 screen_to_camera(const ScreenTarget& t, const Extrinsics& e) {
  return e.rotation * Vec3(t.u, t.v, 0.0) + e.translation;
}

/// Rotation matrix for Euler angles, composed as Rz(roll)*Ry(yaw)*Rx(pitch).
inline Mat3 euler_to_rotation(const EulerRot& e) {
  const double sp = std::sin(deg2rad(e.pitch_deg)), cp = std::cos(deg2rad(e.pitch_deg));
  const double sy = std::sin(deg2rad(e.yaw_deg)), cy = std::cos(deg2rad(e.yaw_deg));
  const double sr = std::sin(deg2rad(e.roll_deg)), cr = std::cos(deg2rad(e.roll_deg));
  Mat3 r;
  r << cr * cy, cr * sy * sp - sr * cp, cr * sy * cp + sr * sp,
       sr * cy, sr * sy * sp + cr * cp, sr * sy * cp - cr * sp,
       -sy, cy * sp, cy * cp;
  return r;
}

/// Euler decomposition plus a flag for the degenerate middle-axis case.
struct EulerDecomposition {
  EulerRot angles;
  bool gimbal_lock = false;
};

/// Inverse of euler_to_rotation. Away from gimbal lock the round trip
/// reproduces canonical angles to 1e-9 deg. In the Rz*Ry*Rx composition the
/// middle (yaw) axis is the singular one; at |yaw| > 89.99 deg the flag is
/// set, roll is pinned to zero and pitch absorbs the free angle.
inline EulerDecomposition rotation_to_euler(const Mat3& r) {
  EulerDecomposition out;
  const double sy = std::clamp(-r(2, 0), -1.0, 1.0);
  out.angles.yaw_deg = rad2deg(std::asin(sy));
  if (std::abs(out.angles.yaw_deg) > 89.99) {
    out.gimbal_lock = true;
    out.angles.roll_deg = 0.0;
    if (sy > 0.0) {
      out.angles.pitch_deg = canonical_deg(rad2deg(std::atan2(r(0, 1), r(1, 1))));
    } else {
      out.angles.pitch_deg = canonical_deg(rad2deg(std::atan2(-r(0, 1), r(1, 1))));
    }
    return out;
  }
  out.angles.pitch_deg = canonical_deg(rad2deg(std::atan2(r(2, 1), r(2, 2))));
  out.angles.roll_deg = canonical_deg(rad2deg(std::atan2(r(1, 0), r(0, 0))));
  return out;
}

/// Polar form of a unit gaze. Throws OutOfFrustum when the direction does
/// not point toward the camera (g_z >= 0).
inline PolarGaze vector_to_polar(const UnitGaze& g) {
  if (g.v.z() >= 0.0) throw OutOfFrustum("gaze points away from the camera");
  PolarGaze p;
  // atan2 form of asin(-g_y); identical for unit vectors, stable at the pole.
  p.theta_deg = rad2deg(std::atan2(-g.v.y(), std::hypot(g.v.x(), g.v.z())));
  p.phi_deg = rad2deg(std::atan2(-g.v.x(), -g.v.z()));
  return p;
}

/// Inverse of vector_to_polar; total in (theta, phi), always unit norm.
inline UnitGaze polar_to_vector(const PolarGaze& p) {
  const double t = deg2rad(p.theta_deg);
  const double f = deg2rad(p.phi_deg);
  return UnitGaze{Vec3(-std::cos(t) * std::sin(f), -std::sin(t),
                       -std::cos(t) * std::cos(f))};
}

}  // namespace gla
