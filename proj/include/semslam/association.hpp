#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "semslam/errors.hpp"
#include "semslam/generative.hpp"
#include "semslam/geometry.hpp"

namespace semslam {

/// One object detection at a keyframe: a 3D coordinate in the robot frame plus
/// the encoded feature of the observed view.
struct Detection {
  int keyframe_id = 0;
  Vec3 coord = Vec3::Zero();
  EncodedFeature feature;
  double sigma_t = 1.0;
};

/// Landmark state: world pose plus the current continuous feature estimate.
/// category_id / instance_id are optional labels (ground truth, or a
/// classification of the feature estimate); -1 when unset.
struct Landmark {
  int id = 0;
  Vec3 position = Vec3::Zero();
  EulerAngle orientation;
  VecX feature_c;
  VecX feature_i;
  int category_id = -1;
  int instance_id = -1;
};

/// Association weights for one keyframe, detections x landmarks. Rows sum to 1
/// until pruning; a row whose entries were all pruned is left zero and flagged.
struct WeightMatrix {
  int keyframe_id = 0;
  Eigen::MatrixXd weights;
  std::vector<std::uint8_t> row_pruned;

  WeightMatrix() = default;
  WeightMatrix(int kf, Eigen::Index rows, Eigen::Index cols)
      : keyframe_id(kf),
        weights(Eigen::MatrixXd::Zero(rows, cols)),
        row_pruned(static_cast<std::size_t>(rows), 0) {}
};

/// One data-association hypothesis: landmark index per detection, one-to-one.
struct AssociationHypothesis {
  std::vector<int> landmark_for_detection;
};

// ---------------------------------------------------------------------------
// likelihoods

/// Log likelihood of a detection given a robot pose and a landmark; the sum of
/// three independent blocks:
///  - translation: N(coord; R_x^T (t_l - t_x), sigma_t^2 I)
///  - orientation: N(mu_sv; trig prior moments of the relative orientation,
///    variances floored)
///  - feature: unit-variance Gaussians centered on the landmark's current
///    feature estimate
inline double detection_log_likelihood(const Detection& det, const Se3Pose& x,
                                       const Landmark& lm, double sigma_v,
                                       double variance_floor = kTrigVarianceFloor,
                                       bool use_orientation = true) {
  const Vec3 predicted = x.rotation().transpose() * (lm.position - x.translation);
  double ll = gaussian_log_density_iso(det.coord, predicted,
                                       det.sigma_t * det.sigma_t);
  if (use_orientation) {
    const Mat3 rel = x.rotation().transpose() * euler_to_rotation(lm.orientation);
    const EulerAngle rel_e = rotation_to_euler(rel);
    Vec6 mean, var;
    trig_prior_moments(rel_e, sigma_v, mean, var);
    const Vec6 floored = var.cwiseMax(variance_floor);
    ll += gaussian_log_density(det.feature.mu_sv.to_vector(), mean, floored);
  }
  ll += feature_prior_logpdf(det.feature.mu_sc, det.feature.mu_si, lm.feature_c,
                             lm.feature_i);
  return ll;
}

/// K x M matrix of detection log likelihoods for one keyframe.
inline Eigen::MatrixXd detection_log_likelihood_matrix(
    const std::vector<Detection>& detections, const std::vector<Landmark>& landmarks,
    const Se3Pose& x, double sigma_v, double variance_floor = kTrigVarianceFloor,
    bool use_orientation = true) {
  Eigen::MatrixXd L(detections.size(), landmarks.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = 0; j < landmarks.size(); ++j) {
      L(i, j) = detection_log_likelihood(detections[i], x, landmarks[j], sigma_v,
                                         variance_floor, use_orientation);
    }
  }
  return L;
}

/// Joint log likelihood of a one-to-one hypothesis covering every detection.
inline double assignment_log_likelihood(const AssociationHypothesis& h,
                                        const std::vector<Detection>& detections,
                                        const std::vector<Landmark>& landmarks,
                                        const Se3Pose& x, double sigma_v,
                                        double variance_floor = kTrigVarianceFloor,
                                        bool use_orientation = true) {
  if (h.landmark_for_detection.size() != detections.size()) {
    throw InvalidHypothesisError(
        "assignment_log_likelihood: hypothesis does not cover every detection");
  }
  std::vector<std::uint8_t> used(landmarks.size(), 0);
  double total = 0.0;
  for (std::size_t k = 0; k < detections.size(); ++k) {
    const int j = h.landmark_for_detection[k];
    if (j < 0 || j >= static_cast<int>(landmarks.size())) {
      throw InvalidHypothesisError("assignment_log_likelihood: landmark index out of range");
    }
    if (used[j]) {
      throw InvalidHypothesisError("assignment_log_likelihood: landmark assigned twice");
    }
    used[j] = 1;
    total += detection_log_likelihood(detections[k], x, landmarks[j], sigma_v,
                                      variance_floor, use_orientation);
  }
  return total;
}

// ---------------------------------------------------------------------------
// EM weights

namespace detail {

// Depth-first enumeration of injective maps detections -> landmarks over a
// log-likelihood matrix, twice: once for the max (log-space stabilization),
// once to accumulate numerators. Row maxima are subtracted first; every
// detection appears exactly once in every hypothesis so a per-row shift leaves
// the weights unchanged.
inline Eigen::MatrixXd exact_weights_kernel(const Eigen::MatrixXd& loglik) {
  const int K = static_cast<int>(loglik.rows());
  const int M = static_cast<int>(loglik.cols());
  Eigen::MatrixXd shifted = loglik;
  for (int i = 0; i < K; ++i) shifted.row(i).array() -= loglik.row(i).maxCoeff();

  double best = -std::numeric_limits<double>::infinity();
  std::uint64_t used = 0;
  const auto find_max = [&](auto&& self, int k, double acc) -> void {
    if (k == K) {
      best = std::max(best, acc);
      return;
    }
    for (int j = 0; j < M; ++j) {
      if (used >> j & 1) continue;
      used |= std::uint64_t{1} << j;
      self(self, k + 1, acc + shifted(k, j));
      used &= ~(std::uint64_t{1} << j);
    }
  };
  find_max(find_max, 0, 0.0);

  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(K, M);
  std::vector<int> assign(K, -1);
  const auto accumulate = [&](auto&& self, int k, double acc) -> void {
    if (k == K) {
      const double w = std::exp(acc - best);
      for (int k2 = 0; k2 < K; ++k2) num(k2, assign[k2]) += w;
      return;
    }
    for (int j = 0; j < M; ++j) {
      if (used >> j & 1) continue;
      used |= std::uint64_t{1} << j;
      assign[k] = j;
      self(self, k + 1, acc + shifted(k, j));
      used &= ~(std::uint64_t{1} << j);
    }
  };
  accumulate(accumulate, 0, 0.0);

  // the hypothesis classes over j partition the hypothesis set, so each row of
  // numerators sums to the common denominator
  for (int i = 0; i < K; ++i) {
    const double row_sum = num.row(i).sum();
    num.row(i) /= row_sum;
  }
  return num;
}

}  // namespace detail

/// Exact EM association weights from a K x M log-likelihood matrix: marginals
/// of the hypothesis posterior over one-to-one assignments.
inline WeightMatrix em_weights_exact_from_loglik(const Eigen::MatrixXd& loglik,
                                                 int keyframe_id = 0) {
  const int K = static_cast<int>(loglik.rows());
  const int M = static_cast<int>(loglik.cols());
  if (K > 8) {
    throw TooManyDetectionsError(
        "em_weights_exact: more than 8 detections; use the factored variant");
  }
  if (K > M) {
    throw InvalidHypothesisError(
        "em_weights_exact: no injective assignment exists (K > M)");
  }
  if (M > 63) {
    throw Error("em_weights_exact: enumeration supports at most 63 landmarks");
  }
  WeightMatrix out(keyframe_id, K, M);
  if (K == 0) return out;
  out.weights = detail::exact_weights_kernel(loglik);
  return out;
}

/// Factored approximation: independent per-detection softmax over landmarks,
/// i.e. the one-to-one coupling between detections is dropped. Scalar exp so a
/// single detection reproduces the exact weights bit for bit.
inline WeightMatrix em_weights_factored_from_loglik(const Eigen::MatrixXd& loglik,
                                                    int keyframe_id = 0) {
  const int K = static_cast<int>(loglik.rows());
  const int M = static_cast<int>(loglik.cols());
  if (M < 1 && K > 0) throw Error("em_weights_factored: no landmarks");
  WeightMatrix out(keyframe_id, K, M);
  for (int i = 0; i < K; ++i) {
    const double mx = loglik.row(i).maxCoeff();
    for (int j = 0; j < M; ++j) {
      out.weights(i, j) = std::exp(loglik(i, j) - mx);
    }
    out.weights.row(i) /= out.weights.row(i).sum();
  }
  return out;
}

inline WeightMatrix em_weights_exact(const std::vector<Detection>& detections,
                                     const std::vector<Landmark>& landmarks,
                                     const Se3Pose& x, double sigma_v,
                                     double variance_floor = kTrigVarianceFloor,
                                     bool use_orientation = true) {
  const Eigen::MatrixXd L = detection_log_likelihood_matrix(
      detections, landmarks, x, sigma_v, variance_floor, use_orientation);
  const int kf = detections.empty() ? 0 : detections.front().keyframe_id;
  return em_weights_exact_from_loglik(L, kf);
}

inline WeightMatrix em_weights_factored(const std::vector<Detection>& detections,
                                        const std::vector<Landmark>& landmarks,
                                        const Se3Pose& x, double sigma_v,
                                        double variance_floor = kTrigVarianceFloor,
                                        bool use_orientation = true) {
  const Eigen::MatrixXd L = detection_log_likelihood_matrix(
      detections, landmarks, x, sigma_v, variance_floor, use_orientation);
  const int kf = detections.empty() ? 0 : detections.front().keyframe_id;
  return em_weights_factored_from_loglik(L, kf);
}

/// Zeroes entries below delta and renormalizes each surviving row to sum 1.
/// Rows with no survivor are left all-zero and flagged in row_pruned.
inline WeightMatrix prune_weights(const WeightMatrix& w, double delta) {
  if (delta < 0.0 || delta >= 1.0) {
    throw Error("prune_weights: delta must lie in [0, 1)");
  }
  WeightMatrix out = w;
  for (Eigen::Index i = 0; i < out.weights.rows(); ++i) {
    double kept = 0.0;
    for (Eigen::Index j = 0; j < out.weights.cols(); ++j) {
      if (out.weights(i, j) < delta) {
        out.weights(i, j) = 0.0;
      } else {
        kept += out.weights(i, j);
      }
    }
    if (kept > 0.0) {
      out.weights.row(i) /= kept;
      out.row_pruned[i] = 0;
    } else {
      out.weights.row(i).setZero();
      out.row_pruned[i] = 1;
    }
  }
  return out;
}

}  // namespace semslam
