// Independent reference implementations used as test oracles. Everything here
// deliberately avoids the library code paths it is checking.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "semslam/rng.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// rotations

inline Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}

inline Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}

inline Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

/// Explicit product of the three axis rotations, Z * Y * X.
inline Eigen::Matrix3d zyx_rotation(double az, double el, double in) {
  return rot_z(az) * rot_y(el) * rot_x(in);
}

// ---------------------------------------------------------------------------
// Monte-Carlo moments of cos(v+eps), sin(v+eps)

struct McMoments {
  double mean_cos, mean_sin, var_cos, var_sin;
  double se_mean_cos, se_mean_sin, se_var_cos, se_var_sin;
};

/// Sample moments with standard errors. SE of the sample variance uses the
/// fourth central moment: sqrt((m4 - var^2) / n). Power sums accumulate
/// deviations from the noise-free trig values so small-sigma cases keep their
/// relative precision (raw sums would cancel catastrophically there).
inline McMoments mc_trig_moments(double v, double sigma, int n, std::uint64_t seed) {
  semslam::Rng rng(seed);
  const double c0 = std::cos(v), s0 = std::sin(v);
  double c1 = 0, c2 = 0, c3 = 0, c4 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double e = rng.normal(0.0, sigma);
    const double c = std::cos(v + e) - c0, s = std::sin(v + e) - s0;
    const double cc = c * c, ss = s * s;
    c1 += c;
    c2 += cc;
    c3 += cc * c;
    c4 += cc * cc;
    s1 += s;
    s2 += ss;
    s3 += ss * s;
    s4 += ss * ss;
  }
  const auto finalize = [n](double center, double p1, double p2, double p3,
                            double p4, double& mean, double& var, double& se_mean,
                            double& se_var) {
    p1 /= n;
    p2 /= n;
    p3 /= n;
    p4 /= n;
    mean = center + p1;
    var = std::max(p2 - p1 * p1, 0.0);
    const double m4 =
        p4 - 4.0 * p1 * p3 + 6.0 * p1 * p1 * p2 - 3.0 * p1 * p1 * p1 * p1;
    se_mean = std::sqrt(var / n);
    se_var = std::sqrt(std::max(m4 - var * var, 0.0) / n);
  };
  McMoments m{};
  finalize(c0, c1, c2, c3, c4, m.mean_cos, m.var_cos, m.se_mean_cos, m.se_var_cos);
  finalize(s0, s1, s2, s3, s4, m.mean_sin, m.var_sin, m.se_mean_sin, m.se_var_sin);
  return m;
}

// ---------------------------------------------------------------------------
// scalar minimization

/// Golden-section argmin of f on [lo, hi] to the given interval tolerance.
inline double golden_section_argmin(const std::function<double(double)>& f,
                                    double lo, double hi, double tol) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2.0;
}

/// Coarse grid scan followed by golden-section refinement.
inline double grid_argmin(const std::function<double(double)>& f, double lo,
                          double hi, int grid, double tol) {
  double best_x = lo, best_f = f(lo);
  for (int i = 1; i <= grid; ++i) {
    const double x = lo + (hi - lo) * i / grid;
    const double fx = f(x);
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
  }
  const double step = (hi - lo) / grid;
  return golden_section_argmin(f, best_x - step, best_x + step, tol);
}

/// Parabola-vertex step from three samples around x; exact for quadratic
/// objectives, where plain golden section stalls at sqrt(eps).
inline double quadratic_vertex_refine(const std::function<double(double)>& f,
                                      double x, double h) {
  const double fm = f(x - h), f0 = f(x), fp = f(x + h);
  const double denom = fp - 2.0 * f0 + fm;
  if (denom <= 0.0) return x;
  return x - 0.5 * h * (fp - fm) / denom;
}

/// Golden-section localization followed by a quadratic-vertex polish.
inline double argmin_1d(const std::function<double(double)>& f, double lo,
                        double hi) {
  const double x = golden_section_argmin(f, lo, hi, 1e-6);
  return quadratic_vertex_refine(f, x, 1e-3 * std::max(1.0, std::abs(x)));
}

// ---------------------------------------------------------------------------
// quadrature

/// Composite Simpson integral of f over [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * ((i % 2) ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// KL(N(qm, qv) || N(pm, pv)) by direct 1-D quadrature of q log(q/p).
inline double kl_gaussian_quadrature(double qm, double qv, double pm, double pv) {
  const double qs = std::sqrt(qv);
  const auto integrand = [&](double x) {
    const double lq = -0.5 * std::log(2.0 * M_PI * qv) - (x - qm) * (x - qm) / (2.0 * qv);
    const double lp = -0.5 * std::log(2.0 * M_PI * pv) - (x - pm) * (x - pm) / (2.0 * pv);
    return std::exp(lq) * (lq - lp);
  };
  return simpson(integrand, qm - 12.0 * qs, qm + 12.0 * qs, 4000);
}

// ---------------------------------------------------------------------------
// brute-force EM weights

/// Exhaustive EM association weights from a KxM log-likelihood matrix: loops
/// over every map detections -> landmarks (M^K of them), keeps the injective
/// ones, and accumulates exp of the summed log-likelihoods directly.
inline Eigen::MatrixXd brute_force_em_weights(const Eigen::MatrixXd& loglik) {
  const int K = static_cast<int>(loglik.rows());
  const int M = static_cast<int>(loglik.cols());
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(K, M);
  double den = 0.0;
  std::vector<int> assign(K, 0);
  // max for stability, over injective maps only
  double best = -std::numeric_limits<double>::infinity();
  const auto for_each_map = [&](const std::function<void(const std::vector<int>&)>& fn) {
    const long total = static_cast<long>(std::pow(static_cast<double>(M), K) + 0.5);
    for (long code = 0; code < total; ++code) {
      long c = code;
      bool injective = true;
      unsigned used = 0;
      for (int k = 0; k < K; ++k) {
        assign[k] = static_cast<int>(c % M);
        c /= M;
        if (used & (1u << assign[k])) injective = false;
        used |= 1u << assign[k];
      }
      if (injective) fn(assign);
    }
  };
  for_each_map([&](const std::vector<int>& a) {
    double t = 0;
    for (int k = 0; k < K; ++k) t += loglik(k, a[k]);
    best = std::max(best, t);
  });
  for_each_map([&](const std::vector<int>& a) {
    double t = 0;
    for (int k = 0; k < K; ++k) t += loglik(k, a[k]);
    const double w = std::exp(t - best);
    den += w;
    for (int k = 0; k < K; ++k) num(k, a[k]) += w;
  });
  return num / den;
}

}  // namespace oracles
