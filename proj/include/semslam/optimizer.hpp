#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "semslam/association.hpp"
#include "semslam/errors.hpp"
#include "semslam/generative.hpp"
#include "semslam/geometry.hpp"
#include "semslam/simulator.hpp"

namespace semslam {

enum class AssocMode { kAuto, kExact, kFactored };

struct SolverConfig {
  int max_gn_iters = 25;
  int max_em_iters = 10;
  double lm_damping_init = 1e-6;
  double cost_tolerance = 1e-9;
  double delta_prune = 1e-3;
  double sigma_v = 0.05;
  double spawn_threshold = 8.0;  // log-likelihood gate below the per-detection
                                 // ideal; 8.0 is a 4-sigma translation gate
  double variance_floor = kTrigVarianceFloor;
  bool use_orientation = true;
  AssocMode assoc = AssocMode::kAuto;
  int exact_assoc_max_detections = 8;
  double fd_step = 1e-6;     // central-difference step for Jacobians
  double max_damping = 1e8;  // LM damping growth limit
};

/// Robot trajectory, landmarks, and the edges connecting them. Odometry edges
/// join consecutive robot nodes; detection edges are grouped per keyframe and
/// weighted by the aligned weight matrix.
struct PoseFeatureGraph {
  std::vector<Se3Pose> robot_nodes;
  std::vector<Landmark> landmark_nodes;
  std::vector<OdometryEdge> odometry_edges;
  std::vector<KeyframeObservations> detection_edges;
  std::vector<WeightMatrix> weight_matrices;  // aligned with detection_edges
};

struct EmIterationStats {
  double cost = 0.0;               // solver cost after this iteration's M-step
  std::vector<double> lm_costs;    // accepted-step cost history of the inner solver
  int spawned = 0;                 // landmarks created at the end of the iteration
};

struct Solution {
  std::vector<Se3Pose> trajectory;
  std::vector<Landmark> landmarks;
  std::vector<WeightMatrix> final_weights;
  std::vector<double> cost_history;  // one entry per EM iteration
  std::vector<EmIterationStats> iterations;
};

// ---------------------------------------------------------------------------
// residuals

/// Whitened body-frame position error: (R_x^T (t_j - t_x) - s_t) / sigma_t.
inline Vec3 translation_residual(const Se3Pose& x, const Vec3& landmark_position,
                                 const Vec3& observed_coord, double sigma_t) {
  if (sigma_t <= 0.0) throw Error("translation_residual: sigma_t must be positive");
  return (x.rotation().transpose() * (landmark_position - x.translation) -
          observed_coord) /
         sigma_t;
}

/// Whitened trig-orientation error against the analytic prior moments of the
/// relative orientation, variances floored.
inline Vec6 orientation_residual_from_rotation(const Se3Pose& x,
                                               const Mat3& landmark_rotation,
                                               const TrigOrientation& mu_sv,
                                               double sigma_v,
                                               double variance_floor) {
  const EulerAngle rel =
      rotation_to_euler(x.rotation().transpose() * landmark_rotation);
  Vec6 mean, var;
  trig_prior_moments(rel, sigma_v, mean, var);
  const Vec6 sd = var.cwiseMax(variance_floor).cwiseSqrt();
  return (mu_sv.to_vector() - mean).cwiseQuotient(sd);
}

inline Vec6 orientation_residual(const Se3Pose& x, const EulerAngle& v_j,
                                 const TrigOrientation& mu_sv, double sigma_v,
                                 double variance_floor = kTrigVarianceFloor) {
  return orientation_residual_from_rotation(x, euler_to_rotation(v_j), mu_sv,
                                            sigma_v, variance_floor);
}

/// Whitened odometry error: log(z^{-1} x_t^{-1} x_{t+1}) / sigma, componentwise.
inline Vec6 odometry_residual(const Se3Pose& x_t, const Se3Pose& x_next,
                              const Se3Pose& z_rel, const Vec6& sigma6) {
  if ((sigma6.array() <= 0.0).any()) {
    throw Error("odometry_residual: sigmas must be positive");
  }
  const Se3Pose err =
      se3_compose(se3_inverse(z_rel), se3_compose(se3_inverse(x_t), x_next));
  return se3_log(err).cwiseQuotient(sigma6);
}

/// Half the squared norm of every whitened residual, detection terms weighted
/// by the association weights. Log-normalizer constants are omitted, so the
/// argmin matches the weighted likelihood objective.
inline double total_cost(const PoseFeatureGraph& g, const SolverConfig& cfg) {
  double cost = 0.0;
  for (const OdometryEdge& e : g.odometry_edges) {
    cost += 0.5 * odometry_residual(g.robot_nodes[e.from_frame],
                                    g.robot_nodes[e.to_frame], e.relative, e.sigma)
                      .squaredNorm();
  }
  for (std::size_t kf = 0; kf < g.detection_edges.size(); ++kf) {
    const KeyframeObservations& obs = g.detection_edges[kf];
    const Eigen::MatrixXd& w = g.weight_matrices[kf].weights;
    const Se3Pose& x = g.robot_nodes[obs.frame];
    for (std::size_t k = 0; k < obs.detections.size(); ++k) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double wv = w(static_cast<Eigen::Index>(k), j);
        if (wv <= 0.0) continue;
        const Landmark& lm = g.landmark_nodes[j];
        const Detection& det = obs.detections[k];
        cost += 0.5 * wv *
                translation_residual(x, lm.position, det.coord, det.sigma_t)
                    .squaredNorm();
        if (cfg.use_orientation) {
          cost += 0.5 * wv *
                  orientation_residual(x, lm.orientation, det.feature.mu_sv,
                                       cfg.sigma_v, cfg.variance_floor)
                      .squaredNorm();
        }
      }
    }
  }
  return cost;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt internals

namespace detail {

struct SolverState {
  std::vector<Se3Pose> poses;
  std::vector<Vec3> lm_pos;
  std::vector<Mat3> lm_rot;
};

struct Layout {
  std::vector<int> active_landmarks;  // graph landmark indices with weight > 0
  std::vector<int> landmark_col;      // parameter column per active landmark
  int pose_cols = 0;                  // 6 * (num_poses - 1); pose 0 is anchored
  int lm_dof = 6;                     // 3 when orientation is not optimized
  int total_cols = 0;
};

struct Block {
  bool is_odometry = false;
  int odo = -1;        // odometry edge index
  int kf = -1;         // detection_edges index
  int det = -1;        // detection index within the keyframe
  int lm = -1;         // graph landmark index
  int active_lm = -1;  // index into layout.active_landmarks
  double sqrt_weight = 1.0;
  Vec6 frozen_sd = Vec6::Ones();  // orientation whitening, fixed per M-step
  int dim = 0;
  int row0 = 0;
};

inline SolverState make_state(const PoseFeatureGraph& g) {
  SolverState st;
  st.poses = g.robot_nodes;
  st.lm_pos.reserve(g.landmark_nodes.size());
  st.lm_rot.reserve(g.landmark_nodes.size());
  for (const Landmark& lm : g.landmark_nodes) {
    st.lm_pos.push_back(lm.position);
    st.lm_rot.push_back(euler_to_rotation(lm.orientation));
  }
  return st;
}

inline Layout make_layout(const PoseFeatureGraph& g, const SolverConfig& cfg) {
  Layout layout;
  layout.lm_dof = cfg.use_orientation ? 6 : 3;
  layout.pose_cols = 6 * (static_cast<int>(g.robot_nodes.size()) - 1);
  std::vector<double> weight_sum(g.landmark_nodes.size(), 0.0);
  for (const WeightMatrix& w : g.weight_matrices) {
    for (Eigen::Index j = 0; j < w.weights.cols(); ++j) {
      weight_sum[j] += w.weights.col(j).sum();
    }
  }
  int col = layout.pose_cols;
  for (std::size_t j = 0; j < weight_sum.size(); ++j) {
    if (weight_sum[j] > 0.0) {
      layout.active_landmarks.push_back(static_cast<int>(j));
      layout.landmark_col.push_back(col);
      col += layout.lm_dof;
    }
  }
  layout.total_cols = col;
  return layout;
}

inline std::vector<Block> make_blocks(const PoseFeatureGraph& g,
                                      const SolverConfig& cfg,
                                      const Layout& layout,
                                      const SolverState& st) {
  std::vector<Block> blocks;
  int row = 0;
  for (std::size_t e = 0; e < g.odometry_edges.size(); ++e) {
    Block b;
    b.is_odometry = true;
    b.odo = static_cast<int>(e);
    b.dim = 6;
    b.row0 = row;
    row += 6;
    blocks.push_back(b);
  }
  std::vector<int> active_index(g.landmark_nodes.size(), -1);
  for (std::size_t a = 0; a < layout.active_landmarks.size(); ++a) {
    active_index[layout.active_landmarks[a]] = static_cast<int>(a);
  }
  for (std::size_t kf = 0; kf < g.detection_edges.size(); ++kf) {
    const KeyframeObservations& obs = g.detection_edges[kf];
    const Eigen::MatrixXd& w = g.weight_matrices[kf].weights;
    for (std::size_t k = 0; k < obs.detections.size(); ++k) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double wv = w(static_cast<Eigen::Index>(k), j);
        if (wv <= 0.0) continue;
        Block b;
        b.kf = static_cast<int>(kf);
        b.det = static_cast<int>(k);
        b.lm = static_cast<int>(j);
        b.active_lm = active_index[j];
        b.sqrt_weight = std::sqrt(wv);
        b.dim = cfg.use_orientation ? 9 : 3;
        b.row0 = row;
        if (cfg.use_orientation) {
          // variances frozen at the current estimate for the whole M-step
          const EulerAngle rel = rotation_to_euler(
              st.poses[obs.frame].rotation().transpose() * st.lm_rot[j]);
          Vec6 mean, var;
          trig_prior_moments(rel, cfg.sigma_v, mean, var);
          b.frozen_sd = var.cwiseMax(cfg.variance_floor).cwiseSqrt();
        }
        row += b.dim;
        blocks.push_back(b);
      }
    }
  }
  return blocks;
}

inline int total_rows(const std::vector<Block>& blocks) {
  return blocks.empty() ? 0 : blocks.back().row0 + blocks.back().dim;
}

inline Eigen::VectorXd eval_block(const PoseFeatureGraph& g,
                                  const SolverConfig& cfg, const SolverState& st,
                                  const Block& b) {
  if (b.is_odometry) {
    const OdometryEdge& e = g.odometry_edges[b.odo];
    return odometry_residual(st.poses[e.from_frame], st.poses[e.to_frame],
                             e.relative, e.sigma);
  }
  const KeyframeObservations& obs = g.detection_edges[b.kf];
  const Detection& det = obs.detections[b.det];
  const Se3Pose& x = st.poses[obs.frame];
  Eigen::VectorXd r(b.dim);
  r.head<3>() = b.sqrt_weight * translation_residual(x, st.lm_pos[b.lm], det.coord,
                                                     det.sigma_t);
  if (cfg.use_orientation) {
    const EulerAngle rel =
        rotation_to_euler(x.rotation().transpose() * st.lm_rot[b.lm]);
    Vec6 mean, var;
    trig_prior_moments(rel, cfg.sigma_v, mean, var);
    r.tail<6>() = b.sqrt_weight *
                  (det.feature.mu_sv.to_vector() - mean).cwiseQuotient(b.frozen_sd);
  }
  return r;
}

inline Eigen::VectorXd eval_all(const PoseFeatureGraph& g, const SolverConfig& cfg,
                                const SolverState& st,
                                const std::vector<Block>& blocks) {
  Eigen::VectorXd r(total_rows(blocks));
  for (const Block& b : blocks) {
    r.segment(b.row0, b.dim) = eval_block(g, cfg, st, b);
  }
  return r;
}

inline void perturb_pose(SolverState& st, int pose, int coord, double h) {
  Twist xi = Twist::Zero();
  xi[coord] = h;
  st.poses[pose] = se3_compose(st.poses[pose], se3_exp(xi));
}

inline void perturb_landmark(SolverState& st, int lm, int coord, double h) {
  if (coord < 3) {
    st.lm_pos[lm][coord] += h;
  } else {
    Vec3 w = Vec3::Zero();
    w[coord - 3] = h;
    st.lm_rot[lm] = st.lm_rot[lm] * so3_exp(w);
  }
}

/// Central-difference Jacobian of one block with respect to one parameter
/// group; emitted as triplets into `out`.
template <typename PerturbFn>
inline void block_jacobian_columns(const PoseFeatureGraph& g,
                                   const SolverConfig& cfg, const SolverState& st,
                                   const Block& b, int n_coords, int col0,
                                   double step, const PerturbFn& perturb,
                                   std::vector<Eigen::Triplet<double>>& out) {
  for (int c = 0; c < n_coords; ++c) {
    SolverState plus = st;
    perturb(plus, c, step);
    SolverState minus = st;
    perturb(minus, c, -step);
    const Eigen::VectorXd dp = eval_block(g, cfg, plus, b);
    const Eigen::VectorXd dm = eval_block(g, cfg, minus, b);
    const Eigen::VectorXd col = (dp - dm) / (2.0 * step);
    for (int r = 0; r < b.dim; ++r) {
      if (col[r] != 0.0) out.emplace_back(b.row0 + r, col0 + c, col[r]);
    }
  }
}

inline Eigen::SparseMatrix<double> build_jacobian(
    const PoseFeatureGraph& g, const SolverConfig& cfg, const SolverState& st,
    const Layout& layout, const std::vector<Block>& blocks, double step) {
  std::vector<Eigen::Triplet<double>> trips;
  for (const Block& b : blocks) {
    if (b.is_odometry) {
      const OdometryEdge& e = g.odometry_edges[b.odo];
      for (const int pose : {e.from_frame, e.to_frame}) {
        if (pose == 0) continue;  // anchored
        block_jacobian_columns(
            g, cfg, st, b, 6, 6 * (pose - 1), step,
            [pose](SolverState& s, int c, double h) { perturb_pose(s, pose, c, h); },
            trips);
      }
    } else {
      const int pose = g.detection_edges[b.kf].frame;
      if (pose != 0) {
        block_jacobian_columns(
            g, cfg, st, b, 6, 6 * (pose - 1), step,
            [pose](SolverState& s, int c, double h) { perturb_pose(s, pose, c, h); },
            trips);
      }
      const int lm = b.lm;
      block_jacobian_columns(
          g, cfg, st, b, layout.lm_dof, layout.landmark_col[b.active_lm], step,
          [lm](SolverState& s, int c, double h) { perturb_landmark(s, lm, c, h); },
          trips);
    }
  }
  Eigen::SparseMatrix<double> J(total_rows(blocks), layout.total_cols);
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

inline SolverState apply_step(const SolverState& st, const Layout& layout,
                              const Eigen::VectorXd& delta) {
  SolverState out = st;
  for (std::size_t p = 1; p < st.poses.size(); ++p) {
    const Twist xi = delta.segment<6>(6 * (static_cast<int>(p) - 1));
    out.poses[p] = se3_compose(st.poses[p], se3_exp(xi));
  }
  for (std::size_t a = 0; a < layout.active_landmarks.size(); ++a) {
    const int lm = layout.active_landmarks[a];
    const int col = layout.landmark_col[a];
    out.lm_pos[lm] += delta.segment<3>(col);
    if (layout.lm_dof == 6) {
      out.lm_rot[lm] = st.lm_rot[lm] * so3_exp(delta.segment<3>(col + 3));
    }
  }
  return out;
}

inline void write_back(PoseFeatureGraph& g, const SolverState& st,
                       const Layout& layout) {
  g.robot_nodes = st.poses;
  for (std::size_t a = 0; a < layout.active_landmarks.size(); ++a) {
    const int lm = layout.active_landmarks[a];
    g.landmark_nodes[lm].position = st.lm_pos[lm];
    if (layout.lm_dof == 6) {
      g.landmark_nodes[lm].orientation = rotation_to_euler(st.lm_rot[lm]);
    }
  }
}

}  // namespace detail

/// Dense numeric Jacobian of the whitened residual stack at the graph's
/// current state; columns are pose twists (poses 1..T-1) followed by active
/// landmark parameters. Exposed for diagnostics and stencil cross-checks.
inline Eigen::MatrixXd assemble_jacobian(const PoseFeatureGraph& g,
                                         const SolverConfig& cfg, double step) {
  const detail::SolverState st = detail::make_state(g);
  const detail::Layout layout = detail::make_layout(g, cfg);
  const std::vector<detail::Block> blocks = detail::make_blocks(g, cfg, layout, st);
  return Eigen::MatrixXd(
      detail::build_jacobian(g, cfg, st, layout, blocks, step));
}

/// Levenberg-Marquardt over robot poses (pose 0 anchored) and active landmark
/// poses under fixed association weights. Numeric central-difference Jacobians;
/// accepted steps never increase the cost. Returns the accepted-step cost
/// history, starting at the initial cost. Throws SingularNormalEquationsError
/// when the normal equations stay unfactorizable past the damping limit.
inline std::vector<double> optimize_poses(PoseFeatureGraph& g,
                                          const SolverConfig& cfg) {
  detail::SolverState st = detail::make_state(g);
  const detail::Layout layout = detail::make_layout(g, cfg);
  const std::vector<detail::Block> blocks = detail::make_blocks(g, cfg, layout, st);
  if (blocks.empty() || layout.total_cols == 0) {
    return {0.0};
  }

  Eigen::VectorXd r = detail::eval_all(g, cfg, st, blocks);
  double cost = 0.5 * r.squaredNorm();
  std::vector<double> history{cost};

  Eigen::SparseMatrix<double> identity(layout.total_cols, layout.total_cols);
  identity.setIdentity();

  double lambda = cfg.lm_damping_init;
  for (int iter = 0; iter < cfg.max_gn_iters; ++iter) {
    const Eigen::SparseMatrix<double> jac =
        detail::build_jacobian(g, cfg, st, layout, blocks, cfg.fd_step);
    const Eigen::SparseMatrix<double> hess =
        Eigen::SparseMatrix<double>(jac.transpose() * jac);
    const Eigen::VectorXd grad = jac.transpose() * r;

    bool accepted = false;
    double new_cost = cost;
    detail::SolverState candidate;
    Eigen::VectorXd r_new;
    while (!accepted) {
      const Eigen::SparseMatrix<double> damped = hess + lambda * identity;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(damped);
      if (ldlt.info() != Eigen::Success) {
        lambda *= 10.0;
        if (lambda > cfg.max_damping) {
          throw SingularNormalEquationsError(
              "optimize_poses: normal equations rank-deficient past damping limit");
        }
        continue;
      }
      const Eigen::VectorXd delta = ldlt.solve(-grad);
      candidate = detail::apply_step(st, layout, delta);
      bool valid = true;
      try {
        r_new = detail::eval_all(g, cfg, candidate, blocks);
      } catch (const Error&) {
        valid = false;  // step crossed a chart boundary; damp and retry
      }
      if (valid) {
        new_cost = 0.5 * r_new.squaredNorm();
        if (std::isfinite(new_cost) && new_cost < cost) {
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > cfg.max_damping) break;
    }
    if (!accepted) break;

    st = candidate;
    r = r_new;
    const double decrease = cost - new_cost;
    cost = new_cost;
    history.push_back(cost);
    lambda = std::max(lambda / 3.0, 1e-12);
    if (decrease < cfg.cost_tolerance) break;
  }

  detail::write_back(g, st, layout);
  return history;
}

/// Closed-form M-step for landmark features: each block becomes the weighted
/// mean of the contributing observation means, the argmin of the weighted
/// Gaussian log-likelihood sum. Landmarks with no weight are left unchanged;
/// their indices are returned.
inline std::vector<int> update_features(PoseFeatureGraph& g) {
  std::vector<int> skipped;
  const std::size_t m = g.landmark_nodes.size();
  if (m == 0) return skipped;
  std::vector<double> wsum(m, 0.0);
  std::vector<VecX> acc_c(m), acc_i(m);
  for (std::size_t j = 0; j < m; ++j) {
    acc_c[j] = VecX::Zero(g.landmark_nodes[j].feature_c.size());
    acc_i[j] = VecX::Zero(g.landmark_nodes[j].feature_i.size());
  }
  for (std::size_t kf = 0; kf < g.detection_edges.size(); ++kf) {
    const KeyframeObservations& obs = g.detection_edges[kf];
    const Eigen::MatrixXd& w = g.weight_matrices[kf].weights;
    for (std::size_t k = 0; k < obs.detections.size(); ++k) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double wv = w(static_cast<Eigen::Index>(k), j);
        if (wv <= 0.0) continue;
        wsum[j] += wv;
        acc_c[j] += wv * obs.detections[k].feature.mu_sc;
        acc_i[j] += wv * obs.detections[k].feature.mu_si;
      }
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (wsum[j] > 0.0) {
      g.landmark_nodes[j].feature_c = acc_c[j] / wsum[j];
      g.landmark_nodes[j].feature_i = acc_i[j] / wsum[j];
    } else {
      skipped.push_back(g.landmark_nodes[j].id);
    }
  }
  return skipped;
}

/// Log likelihood a detection would score against a perfectly matching
/// landmark: the normalizer terms with every residual at zero.
inline double ideal_detection_log_likelihood(const Detection& det,
                                             const SolverConfig& cfg) {
  double ll = -1.5 * std::log(2.0 * kPi * det.sigma_t * det.sigma_t);
  if (cfg.use_orientation) {
    const EulerAngle decoded = trig_decode(det.feature.mu_sv);
    Vec6 mean, var;
    trig_prior_moments(decoded, cfg.sigma_v, mean, var);
    const Vec6 floored = var.cwiseMax(cfg.variance_floor);
    for (int k = 0; k < 6; ++k) ll += -0.5 * std::log(2.0 * kPi * floored[k]);
  }
  ll += -0.5 *
        static_cast<double>(det.feature.mu_sc.size() + det.feature.mu_si.size()) *
        std::log(2.0 * kPi);
  return ll;
}

/// Creates a landmark for every detection that no current landmark explains:
/// best log likelihood below the per-detection ideal minus spawn_threshold.
/// Detections are visited in keyframe order and each spawned landmark is
/// immediately visible to the remaining ones, so one physical object seeds one
/// landmark. New landmarks start at the detection's world-frame position, the
/// world-frame decoded orientation R_x * R(trig_decode(mu_sv)), and the
/// detection's shape feature. Weight matrices are left untouched and must be
/// recomputed before the next cost evaluation.
inline int spawn_landmarks(PoseFeatureGraph& g, const SolverConfig& cfg) {
  int spawned = 0;
  int next_id = 0;
  for (const Landmark& lm : g.landmark_nodes) next_id = std::max(next_id, lm.id + 1);
  for (const KeyframeObservations& obs : g.detection_edges) {
    const Se3Pose& x = g.robot_nodes[obs.frame];
    for (const Detection& det : obs.detections) {
      double best = -std::numeric_limits<double>::infinity();
      for (const Landmark& lm : g.landmark_nodes) {
        best = std::max(best, detection_log_likelihood(det, x, lm, cfg.sigma_v,
                                                       cfg.variance_floor,
                                                       cfg.use_orientation));
      }
      const double gate = ideal_detection_log_likelihood(det, cfg) - cfg.spawn_threshold;
      if (best >= gate) continue;

      Landmark lm;
      lm.id = next_id++;
      lm.position = x.rotation() * det.coord + x.translation;
      const EulerAngle rel = trig_decode(det.feature.mu_sv);
      lm.orientation = rotation_to_euler(x.rotation() * euler_to_rotation(rel));
      lm.feature_c = det.feature.mu_sc;
      lm.feature_i = det.feature.mu_si;
      g.landmark_nodes.push_back(std::move(lm));
      ++spawned;
    }
  }
  return spawned;
}

/// Labels each landmark with the prototype maximizing the feature prior.
inline void classify_landmarks(std::vector<Landmark>& landmarks,
                               const PrototypeTable& table) {
  if (table.entries.empty()) return;
  for (Landmark& lm : landmarks) {
    double best = -std::numeric_limits<double>::infinity();
    for (const LabelPrototype& p : table.entries) {
      const double ll = feature_prior_logpdf(lm.feature_c, lm.feature_i, p.mu_c,
                                             p.mu_i);
      if (ll > best) {
        best = ll;
        lm.category_id = p.category_id;
        lm.instance_id = p.instance_id;
      }
    }
  }
}

namespace detail {

inline WeightMatrix compute_weights(const std::vector<Detection>& dets,
                                    const std::vector<Landmark>& lms,
                                    const Se3Pose& x, int frame,
                                    const SolverConfig& cfg) {
  const int K = static_cast<int>(dets.size());
  const int M = static_cast<int>(lms.size());
  if (K == 0 || M == 0) {
    WeightMatrix w(frame, K, M);
    std::fill(w.row_pruned.begin(), w.row_pruned.end(), std::uint8_t{1});
    return w;
  }
  const Eigen::MatrixXd L = detection_log_likelihood_matrix(
      dets, lms, x, cfg.sigma_v, cfg.variance_floor, cfg.use_orientation);
  // M!/(M-K)! injective assignments; enumeration must stay tractable
  double hypotheses = 1.0;
  for (int k = 0; k < K; ++k) hypotheses *= static_cast<double>(M - k);
  const bool exact_feasible = K <= cfg.exact_assoc_max_detections && K <= M &&
                              M <= 63 && hypotheses <= 2e6;
  switch (cfg.assoc) {
    case AssocMode::kExact:
      return em_weights_exact_from_loglik(L, frame);
    case AssocMode::kFactored:
      return em_weights_factored_from_loglik(L, frame);
    case AssocMode::kAuto:
      return exact_feasible ? em_weights_exact_from_loglik(L, frame)
                            : em_weights_factored_from_loglik(L, frame);
  }
  throw Error("compute_weights: unknown association mode");
}

}  // namespace detail

/// Full EM solve:
///   - trajectory initialized from the odometry chain (or the given override)
///   - a bootstrap spawn pass creates the initial landmark set
///   - each iteration: association weights (exact when feasible under kAuto,
///     factored otherwise) -> prune at delta -> pose optimization -> closed-form
///     feature update -> spawn pass for unexplained detections
/// Iteration costs are the inner solver's final costs; the loop stops early
/// when the relative cost change |c_prev - c| / max(1, c_prev) falls below
/// cost_tolerance across two structure-stable iterations. Deterministic given
/// the dataset and config.
inline Solution run_em(const Dataset& ds, const SolverConfig& cfg,
                       const std::vector<Se3Pose>* initial_trajectory = nullptr) {
  PoseFeatureGraph g;
  g.robot_nodes = initial_trajectory ? *initial_trajectory : integrate_odometry(ds);
  if (g.robot_nodes.size() != ds.ground_truth.trajectory.size()) {
    throw Error("run_em: initial trajectory length mismatch");
  }
  g.odometry_edges = ds.odometry;
  g.detection_edges = ds.keyframes;
  g.weight_matrices.assign(ds.keyframes.size(), WeightMatrix());

  spawn_landmarks(g, cfg);  // bootstrap: the EM iterations assume landmarks exist

  Solution sol;
  int prev_spawned = 0;
  for (int iter = 0; iter < cfg.max_em_iters; ++iter) {
    for (std::size_t kf = 0; kf < g.detection_edges.size(); ++kf) {
      const KeyframeObservations& obs = g.detection_edges[kf];
      const WeightMatrix w = detail::compute_weights(
          obs.detections, g.landmark_nodes, g.robot_nodes[obs.frame], obs.frame, cfg);
      g.weight_matrices[kf] = prune_weights(w, cfg.delta_prune);
    }

    EmIterationStats stats;
    stats.lm_costs = optimize_poses(g, cfg);
    update_features(g);
    stats.spawned = spawn_landmarks(g, cfg);
    stats.cost = stats.lm_costs.back();
    sol.cost_history.push_back(stats.cost);
    sol.iterations.push_back(stats);

    if (iter > 0 && prev_spawned == 0 && stats.spawned == 0) {
      const double prev = sol.cost_history[iter - 1];
      const double rel = std::abs(prev - stats.cost) / std::max(1.0, std::abs(prev));
      if (rel < cfg.cost_tolerance) break;
    }
    prev_spawned = stats.spawned;
  }

  classify_landmarks(g.landmark_nodes, ds.prototypes);
  sol.trajectory = g.robot_nodes;
  sol.landmarks = g.landmark_nodes;
  sol.final_weights = g.weight_matrices;
  return sol;
}

}  // namespace semslam
