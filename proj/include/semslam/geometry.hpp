#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "semslam/errors.hpp"

namespace semslam {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using RotationMatrix = Eigen::Matrix3d;

/// Tangent coordinates, rotation first: [wx, wy, wz, vx, vy, vz].
using Twist = Vec6;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to (-pi, pi]; a tie at -pi maps to +pi.
inline double wrap_angle(double x) {
  double r = std::fmod(x + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

/// Object viewpoint orientation as intrinsic Z(azimuth)-Y(elevation)-X(in-plane)
/// angles. Construction normalizes azimuth and in-plane to (-pi, pi] and folds
/// elevation into [-pi/2, pi/2] through the equivalent-angle identity
/// (az, el, in) ~ (az+pi, pi-el, in+pi), so the represented rotation is preserved.
struct EulerAngle {
  double azimuth = 0.0;
  double elevation = 0.0;
  double inplane = 0.0;

  EulerAngle() = default;
  EulerAngle(double az, double el, double in) {
    el = wrap_angle(el);
    if (el > kPi / 2.0) {
      az += kPi;
      in += kPi;
      el = kPi - el;
    } else if (el < -kPi / 2.0) {
      az += kPi;
      in += kPi;
      el = -kPi - el;
    }
    azimuth = wrap_angle(az);
    elevation = el;
    inplane = wrap_angle(in);
  }
};

/// One (cos, sin) pair of the trigonometric orientation encoding.
struct TrigAxis {
  double cos_component = 1.0;
  double sin_component = 0.0;
};

/// Attenuated (cos, sin) pairs per Euler axis. Component vector order is
/// [az.cos, az.sin, el.cos, el.sin, in.cos, in.sin] everywhere.
struct TrigOrientation {
  TrigAxis azimuth;
  TrigAxis elevation;
  TrigAxis inplane;

  Vec6 to_vector() const {
    Vec6 v;
    v << azimuth.cos_component, azimuth.sin_component, elevation.cos_component,
        elevation.sin_component, inplane.cos_component, inplane.sin_component;
    return v;
  }

  static TrigOrientation from_vector(const Vec6& v) {
    TrigOrientation t;
    t.azimuth = {v[0], v[1]};
    t.elevation = {v[2], v[3]};
    t.inplane = {v[4], v[5]};
    return t;
  }
};

/// Rigid-body pose; the rotation maps body coordinates to world coordinates.
///
/// The rotation is held as a (near-)unit quaternion rather than a matrix so a
/// pose deserialized from quaternion coefficients re-serializes to identical
/// bytes; rotation() derives the orthonormal matrix on demand.
struct Se3Pose {
  Eigen::Quaterniond rotation_q = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  Se3Pose() = default;
  Se3Pose(const RotationMatrix& r, const Vec3& t)
      : rotation_q(r), translation(t) {}

  RotationMatrix rotation() const {
    return rotation_q.normalized().toRotationMatrix();
  }
};

inline bool is_rotation_matrix(const Mat3& r, double tol = 1e-9) {
  const Mat3 rtr = r.transpose() * r;
  return (rtr - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// R = Rz(azimuth) * Ry(elevation) * Rx(inplane).
inline RotationMatrix euler_to_rotation(const EulerAngle& e) {
  return (Eigen::AngleAxisd(e.azimuth, Vec3::UnitZ()) *
          Eigen::AngleAxisd(e.elevation, Vec3::UnitY()) *
          Eigen::AngleAxisd(e.inplane, Vec3::UnitX()))
      .toRotationMatrix();
}

/// Inverse of euler_to_rotation. Throws GimbalLockError when the elevation is
/// degenerate (|R31| > 1 - 1e-9) and the decomposition would be arbitrary.
inline EulerAngle rotation_to_euler(const RotationMatrix& r) {
  if (!is_rotation_matrix(r, 1e-6)) {
    throw Error("rotation_to_euler: input is not a rotation matrix");
  }
  if (std::abs(r(2, 0)) > 1.0 - 1e-9) {
    throw GimbalLockError("rotation_to_euler: elevation at +-pi/2");
  }
  const double el = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double az = std::atan2(r(1, 0), r(0, 0));
  const double in = std::atan2(r(2, 1), r(2, 2));
  return EulerAngle(az, el, in);
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 hat = skew(w);
  double a, b;  // sin(t)/t, (1-cos(t))/t^2
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * hat + b * hat * hat;
}

/// Throws LogNearCutError when the rotation angle is within 1e-6 of pi.
inline Vec3 so3_log(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta >= kPi - 1e-6) {
    throw LogNearCutError("so3_log: rotation angle within 1e-6 of pi");
  }
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  double f;  // theta / (2 sin theta)
  if (theta < 1e-6) {
    f = 0.5 + theta * theta / 12.0;
  } else {
    f = theta / (2.0 * std::sin(theta));
  }
  return f * v;
}

inline Se3Pose se3_compose(const Se3Pose& a, const Se3Pose& b) {
  const Eigen::Quaterniond qa = a.rotation_q.normalized();
  Se3Pose out;
  out.rotation_q = (qa * b.rotation_q).normalized();
  out.translation = qa * b.translation + a.translation;
  return out;
}

inline Se3Pose se3_inverse(const Se3Pose& a) {
  const Eigen::Quaterniond qa = a.rotation_q.normalized();
  Se3Pose out;
  out.rotation_q = qa.conjugate();
  out.translation = -(qa.conjugate() * a.translation);
  return out;
}

inline Se3Pose se3_exp(const Twist& xi) {
  const Vec3 w = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  const double theta = w.norm();
  const Mat3 hat = skew(w);
  double c1, c2;  // (1-cos t)/t^2, (t-sin t)/t^3
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    c1 = 0.5 - t2 / 24.0;
    c2 = 1.0 / 6.0 - t2 / 120.0;
  } else {
    c1 = (1.0 - std::cos(theta)) / (theta * theta);
    c2 = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  const Mat3 vmat = Mat3::Identity() + c1 * hat + c2 * hat * hat;
  Se3Pose out;
  out.rotation_q = Eigen::Quaterniond(so3_exp(w));
  out.translation = vmat * v;
  return out;
}

/// Inverse of se3_exp; requires the rotation angle below pi - 1e-6.
inline Twist se3_log(const Se3Pose& a) {
  const Vec3 w = so3_log(a.rotation());
  const double theta = w.norm();
  const Mat3 hat = skew(w);
  double d;  // coefficient of hat^2 in V^{-1}
  if (theta < 1e-4) {
    d = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    const double sa = std::sin(theta) / theta;
    const double cb = (1.0 - std::cos(theta)) / (theta * theta);
    d = (1.0 - sa / (2.0 * cb)) / (theta * theta);
  }
  const Mat3 vinv = Mat3::Identity() - 0.5 * hat + d * hat * hat;
  Twist xi;
  xi.head<3>() = w;
  xi.tail<3>() = vinv * a.translation;
  return xi;
}

/// Encodes Euler angles as attenuated (cos, sin) pairs with attenuation
/// exp(-sigma_v^2 / 2) per component.
inline TrigOrientation trig_encode(const EulerAngle& e, double sigma_v) {
  if (sigma_v < 0.0) throw Error("trig_encode: sigma_v must be >= 0");
  const double a = std::exp(-sigma_v * sigma_v / 2.0);
  TrigOrientation t;
  t.azimuth = {a * std::cos(e.azimuth), a * std::sin(e.azimuth)};
  t.elevation = {a * std::cos(e.elevation), a * std::sin(e.elevation)};
  t.inplane = {a * std::cos(e.inplane), a * std::sin(e.inplane)};
  return t;
}

/// Recovers angles as atan2(sin, cos) per axis; the attenuation cancels.
/// Throws DegenerateTrigError when both components of an axis are near zero.
/// Out-of-range elevations normalize through the EulerAngle constructor.
inline EulerAngle trig_decode(const TrigOrientation& t) {
  const auto axis_angle = [](const TrigAxis& ax, const char* name) {
    const double n2 = ax.cos_component * ax.cos_component +
                      ax.sin_component * ax.sin_component;
    if (n2 <= 1e-12) {
      throw DegenerateTrigError(std::string("trig_decode: degenerate ") + name);
    }
    return std::atan2(ax.sin_component, ax.cos_component);
  };
  return EulerAngle(axis_angle(t.azimuth, "azimuth"),
                    axis_angle(t.elevation, "elevation"),
                    axis_angle(t.inplane, "inplane"));
}

struct TrigMoments {
  double mean_cos = 1.0;
  double mean_sin = 0.0;
  double var_cos = 0.0;
  double var_sin = 0.0;
};

/// First and second moments of cos(v + eps) and sin(v + eps), eps ~ N(0, sigma_v^2):
///   E[cos] = e^{-s^2/2} cos v
///   Var[cos] = 1/2 + (1/2) e^{-2 s^2} cos 2v - e^{-s^2} cos^2 v
///   Var[sin] = 1/2 - (1/2) e^{-2 s^2} cos 2v - e^{-s^2} sin^2 v
/// so var_cos + var_sin = 1 - e^{-s^2} for every v.
inline TrigMoments orientation_prior_moments(double v, double sigma_v) {
  if (sigma_v < 0.0) throw Error("orientation_prior_moments: sigma_v must be >= 0");
  const double s2 = sigma_v * sigma_v;
  const double a1 = std::exp(-s2 / 2.0);
  const double a2 = std::exp(-s2);      // a1^2
  const double a4 = std::exp(-2.0 * s2);
  const double cv = std::cos(v);
  const double sv = std::sin(v);
  const double c2v = std::cos(2.0 * v);
  TrigMoments m;
  m.mean_cos = a1 * cv;
  m.mean_sin = a1 * sv;
  // clamp: the closed forms cancel to ~eps below zero as sigma_v -> 0
  m.var_cos = std::max(0.5 + 0.5 * a4 * c2v - a2 * cv * cv, 0.0);
  m.var_sin = std::max(0.5 - 0.5 * a4 * c2v - a2 * sv * sv, 0.0);
  return m;
}

/// Per-component prior moments for a full Euler triple, in TrigOrientation
/// vector order.
inline void trig_prior_moments(const EulerAngle& e, double sigma_v, Vec6& mean,
                               Vec6& var) {
  const TrigMoments az = orientation_prior_moments(e.azimuth, sigma_v);
  const TrigMoments el = orientation_prior_moments(e.elevation, sigma_v);
  const TrigMoments in = orientation_prior_moments(e.inplane, sigma_v);
  mean << az.mean_cos, az.mean_sin, el.mean_cos, el.mean_sin, in.mean_cos,
      in.mean_sin;
  var << az.var_cos, az.var_sin, el.var_cos, el.var_sin, in.var_cos, in.var_sin;
}

/// (qx, qy, qz, qw) with a canonical sign so equal rotations serialize to
/// equal bytes; coefficients are passed through unnormalized.
inline Eigen::Vector4d canonical_quaternion_xyzw(const Eigen::Quaterniond& qin) {
  Eigen::Quaterniond q = qin;
  const bool flip =
      q.w() < 0.0 ||
      (q.w() == 0.0 &&
       (q.x() < 0.0 ||
        (q.x() == 0.0 && (q.y() < 0.0 || (q.y() == 0.0 && q.z() < 0.0)))));
  if (flip) q.coeffs() = -q.coeffs();
  return Eigen::Vector4d(q.x(), q.y(), q.z(), q.w());
}

inline Eigen::Vector4d rotation_to_quaternion_xyzw(const Mat3& r) {
  return canonical_quaternion_xyzw(Eigen::Quaterniond(r).normalized());
}

inline Mat3 quaternion_xyzw_to_rotation(const Eigen::Vector4d& v) {
  Eigen::Quaterniond q(v[3], v[0], v[1], v[2]);
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace semslam
