#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semslam/association.hpp"
#include "semslam/errors.hpp"
#include "semslam/generative.hpp"
#include "semslam/geometry.hpp"
#include "semslam/rng.hpp"

namespace semslam {

struct WorldConfig {
  int num_landmarks = 12;
  double arena_half_extent = 6.0;
  int num_categories = 3;
  int instances_per_category = 2;
  int dim_c = 8;
  int dim_i = 8;
  double prototype_separation = 4.0;
  std::uint64_t seed = 0;
};

enum class TrajectoryShape { kSquareLoop, kCircle, kFigureEight };

inline std::string to_string(TrajectoryShape s) {
  switch (s) {
    case TrajectoryShape::kSquareLoop: return "square_loop";
    case TrajectoryShape::kCircle: return "circle";
    case TrajectoryShape::kFigureEight: return "figure_eight";
  }
  throw Error("to_string: unknown trajectory shape");
}

inline TrajectoryShape trajectory_shape_from_string(const std::string& s) {
  if (s == "square_loop") return TrajectoryShape::kSquareLoop;
  if (s == "circle") return TrajectoryShape::kCircle;
  if (s == "figure_eight") return TrajectoryShape::kFigureEight;
  throw ParseError("unknown trajectory shape '" + s + "'");
}

struct TrajectoryConfig {
  TrajectoryShape shape = TrajectoryShape::kSquareLoop;
  double side_or_radius = 8.0;
  int num_frames = 120;
  int keyframe_stride = 15;
};

struct NoiseConfig {
  double odom_sigma_rot = 0.0;    // radians per step, all three axes
  double odom_sigma_trans = 0.0;  // meters per step, all three axes
  double sigma_t = 0.1;           // detection coordinate deviation, meters
  double sigma_enc = 0.3;         // encoder emulator deviation
  double sigma_v = 0.05;          // orientation deviation, radians
  double detection_range = 1e9;   // meters
  double fov_half_angle = kPi;    // radians around the body +x axis
  double detection_prob = 1.0;
};

struct OdometryEdge {
  int from_frame = 0;
  int to_frame = 0;
  Se3Pose relative;
  Vec6 sigma = Vec6::Ones();  // whitening deviations, rotation first
};

struct KeyframeObservations {
  int frame = 0;
  std::vector<Detection> detections;
  // generating landmark per detection; evaluation bookkeeping only, the
  // solver never reads it
  std::vector<int> true_landmark_ids;
};

struct GroundTruth {
  std::vector<Se3Pose> trajectory;
  std::vector<Landmark> landmarks;
};

struct Dataset {
  PrototypeTable prototypes;
  GroundTruth ground_truth;
  std::vector<OdometryEdge> odometry;
  std::vector<KeyframeObservations> keyframes;
  WorldConfig world_config;
  TrajectoryConfig trajectory_config;
  NoiseConfig noise_config;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// generation

/// Samples a prototype table and uniformly labeled, uniformly placed landmarks.
/// Positions are uniform over a flat arena: x, y in [-E, E], z in [-E/4, E/4].
/// Orientations are uniform with the elevation capped at 1.2 rad: an estimated
/// robot attitude can drift a few degrees off the true one, and relative
/// orientations must stay clear of the gimbal guard throughout optimization.
inline std::pair<PrototypeTable, std::vector<Landmark>> generate_world(
    const WorldConfig& cfg) {
  if (cfg.num_landmarks < 0 || cfg.arena_half_extent <= 0.0) {
    throw Error("generate_world: invalid config");
  }
  Rng rng(cfg.seed);
  PrototypeTable table =
      sample_prototypes(cfg.num_categories, cfg.instances_per_category, cfg.dim_c,
                        cfg.dim_i, cfg.prototype_separation, rng);
  std::vector<Landmark> landmarks;
  landmarks.reserve(cfg.num_landmarks);
  const double e = cfg.arena_half_extent;
  const double elev_cap = 1.2;
  for (int i = 0; i < cfg.num_landmarks; ++i) {
    Landmark lm;
    lm.id = i;
    lm.position = Vec3(rng.uniform(-e, e), rng.uniform(-e, e),
                       rng.uniform(-e / 4.0, e / 4.0));
    lm.orientation = EulerAngle(rng.uniform(-kPi, kPi),
                                rng.uniform(-elev_cap, elev_cap),
                                rng.uniform(-kPi, kPi));
    lm.category_id = rng.uniform_int(0, cfg.num_categories - 1);
    lm.instance_id = rng.uniform_int(0, cfg.instances_per_category - 1);
    const LabelPrototype& p = table.find(lm.category_id, lm.instance_id);
    lm.feature_c = p.mu_c;
    lm.feature_i = p.mu_i;
    landmarks.push_back(std::move(lm));
  }
  return {std::move(table), std::move(landmarks)};
}

namespace detail {

// position and heading at parameter s in [0, 1) around the closed path
inline void path_point(const TrajectoryConfig& cfg, double s, Vec3& pos,
                       double& heading) {
  switch (cfg.shape) {
    case TrajectoryShape::kSquareLoop: {
      const double h = cfg.side_or_radius / 2.0;
      // corners, counterclockwise from (-h, -h)
      const Vec3 corners[4] = {Vec3(-h, -h, 0), Vec3(h, -h, 0), Vec3(h, h, 0),
                               Vec3(-h, h, 0)};
      const double u = s * 4.0;
      const int edge = std::min(static_cast<int>(u), 3);
      const double f = u - edge;
      const Vec3& a = corners[edge];
      const Vec3& b = corners[(edge + 1) % 4];
      pos = a + f * (b - a);
      heading = std::atan2(b.y() - a.y(), b.x() - a.x());
      return;
    }
    case TrajectoryShape::kCircle: {
      const double r = cfg.side_or_radius;
      const double phi = 2.0 * kPi * s;
      pos = Vec3(r * std::cos(phi), r * std::sin(phi), 0.0);
      heading = phi + kPi / 2.0;  // counterclockwise tangent
      return;
    }
    case TrajectoryShape::kFigureEight: {
      // Gerono lemniscate; the origin is visited at s = 0 and s = 1/2
      const double a = cfg.side_or_radius;
      const double th = 2.0 * kPi * s;
      pos = Vec3(a * std::sin(th), a * std::sin(th) * std::cos(th), 0.0);
      heading = std::atan2(a * std::cos(2.0 * th), a * std::cos(th));
      return;
    }
  }
  throw Error("path_point: unknown trajectory shape");
}

}  // namespace detail

/// Poses along the named closed path at parameters i / num_frames, heading
/// tangent to the path (body +x points along the direction of travel). The
/// parameterization is periodic, so the virtual frame num_frames coincides
/// with frame 0 and long trajectories return to the start.
inline std::vector<Se3Pose> generate_trajectory(const TrajectoryConfig& cfg) {
  if (cfg.num_frames < 2) throw Error("generate_trajectory: num_frames must be >= 2");
  std::vector<Se3Pose> poses;
  poses.reserve(cfg.num_frames);
  for (int i = 0; i < cfg.num_frames; ++i) {
    Vec3 pos;
    double heading;
    detail::path_point(cfg, static_cast<double>(i) / cfg.num_frames, pos, heading);
    Se3Pose p;
    p.rotation_q = Eigen::Quaterniond(Eigen::AngleAxisd(heading, Vec3::UnitZ()));
    p.translation = pos;
    poses.push_back(p);
  }
  return poses;
}

/// Generates odometry and keyframe detections from ground truth.
///
/// Odometry edges are the true relative poses right-perturbed by a Gaussian
/// twist; their stored whitening deviations are the sampling sigmas floored at
/// 1e-6 so zero-noise datasets keep finite residual weights (the same floor is
/// applied to the stored detection sigma_t). Keyframes are frames 0, stride,
/// 2*stride, ...; a landmark is detected when it lies within detection_range
/// and within fov_half_angle of the body +x axis and passes a detection_prob
/// coin flip. Detection coordinates are the body-frame landmark position plus
/// isotropic noise; features come from the encoder emulator at the true
/// relative orientation. Deterministic per seed.
inline Dataset simulate(const PrototypeTable& prototypes,
                        const std::vector<Landmark>& landmarks,
                        const std::vector<Se3Pose>& trajectory,
                        const TrajectoryConfig& traj_cfg, const NoiseConfig& noise,
                        std::uint64_t seed) {
  if (trajectory.size() < 2) throw Error("simulate: trajectory must have >= 2 poses");
  if (traj_cfg.keyframe_stride < 1) throw Error("simulate: stride must be >= 1");
  if (noise.detection_prob < 0.0 || noise.detection_prob > 1.0) {
    throw Error("simulate: detection_prob must lie in [0, 1]");
  }
  Dataset ds;
  ds.prototypes = prototypes;
  ds.ground_truth.trajectory = trajectory;
  ds.ground_truth.landmarks = landmarks;
  ds.trajectory_config = traj_cfg;
  ds.noise_config = noise;
  ds.seed = seed;

  Rng rng(seed);
  const double sigma_floor = 1e-6;

  for (std::size_t t = 0; t + 1 < trajectory.size(); ++t) {
    OdometryEdge edge;
    edge.from_frame = static_cast<int>(t);
    edge.to_frame = static_cast<int>(t + 1);
    const Se3Pose rel = se3_compose(se3_inverse(trajectory[t]), trajectory[t + 1]);
    Twist xi;
    for (int k = 0; k < 3; ++k) xi[k] = noise.odom_sigma_rot * rng.normal();
    for (int k = 3; k < 6; ++k) xi[k] = noise.odom_sigma_trans * rng.normal();
    edge.relative = se3_compose(rel, se3_exp(xi));
    edge.sigma.head<3>().setConstant(std::max(noise.odom_sigma_rot, sigma_floor));
    edge.sigma.tail<3>().setConstant(std::max(noise.odom_sigma_trans, sigma_floor));
    ds.odometry.push_back(edge);
  }

  for (int frame = 0; frame < static_cast<int>(trajectory.size());
       frame += traj_cfg.keyframe_stride) {
    KeyframeObservations kf;
    kf.frame = frame;
    const Se3Pose& x = trajectory[frame];
    for (const Landmark& lm : landmarks) {
      const Vec3 delta = lm.position - x.translation;
      const double dist = delta.norm();
      if (dist > noise.detection_range) continue;
      const Vec3 body = x.rotation().transpose() * delta;
      if (dist > 0.0) {
        const double angle = std::acos(std::clamp(body.x() / dist, -1.0, 1.0));
        if (angle > noise.fov_half_angle) continue;
      }
      if (rng.uniform() >= noise.detection_prob) continue;

      Detection det;
      det.keyframe_id = frame;
      det.coord = body + Vec3(noise.sigma_t * rng.normal(),
                              noise.sigma_t * rng.normal(),
                              noise.sigma_t * rng.normal());
      det.sigma_t = std::max(noise.sigma_t, 1e-4);
      const EulerAngle rel = rotation_to_euler(
          x.rotation().transpose() * euler_to_rotation(lm.orientation));
      det.feature = emulate_encoding(prototypes.find(lm.category_id, lm.instance_id),
                                     rel, noise.sigma_enc, noise.sigma_v, rng);
      kf.detections.push_back(std::move(det));
      kf.true_landmark_ids.push_back(lm.id);
    }
    ds.keyframes.push_back(std::move(kf));
  }
  return ds;
}

/// Full pipeline under one seed: the world draws from Rng(seed) and the
/// observation pass from a mixed stream so the two do not alias.
inline Dataset make_dataset(WorldConfig world_cfg, const TrajectoryConfig& traj_cfg,
                            const NoiseConfig& noise, std::uint64_t seed) {
  world_cfg.seed = seed;
  auto [prototypes, landmarks] = generate_world(world_cfg);
  const std::vector<Se3Pose> trajectory = generate_trajectory(traj_cfg);
  Dataset ds = simulate(prototypes, landmarks, trajectory, traj_cfg, noise,
                        seed ^ 0x9e3779b97f4a7c15ULL);
  ds.world_config = world_cfg;
  ds.seed = seed;
  return ds;
}

/// Trajectory obtained by chaining the odometry measurements from the ground
/// truth start pose; the solver's default initialization and the drift baseline.
inline std::vector<Se3Pose> integrate_odometry(const Dataset& ds) {
  if (ds.ground_truth.trajectory.empty()) {
    throw Error("integrate_odometry: dataset has no trajectory");
  }
  std::vector<Se3Pose> out;
  out.reserve(ds.ground_truth.trajectory.size());
  out.push_back(ds.ground_truth.trajectory.front());
  for (const OdometryEdge& e : ds.odometry) {
    out.push_back(se3_compose(out.back(), e.relative));
  }
  return out;
}

}  // namespace semslam
