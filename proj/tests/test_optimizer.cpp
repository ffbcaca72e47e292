#include "semslam/optimizer.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "semslam/rng.hpp"

using namespace semslam;

namespace {

NoiseConfig zero_noise() {
  NoiseConfig n;
  n.odom_sigma_rot = 0.0;
  n.odom_sigma_trans = 0.0;
  n.sigma_t = 0.0;
  n.sigma_enc = 0.0;
  n.sigma_v = 0.0;
  return n;
}

SolverConfig zero_noise_config() {
  SolverConfig cfg;
  cfg.sigma_v = 0.0;
  return cfg;
}

Se3Pose random_pose(Rng& rng, double rot = 1.0, double trans = 2.0) {
  Twist xi;
  for (int k = 0; k < 3; ++k) xi[k] = rot * rng.normal();
  for (int k = 3; k < 6; ++k) xi[k] = trans * rng.normal();
  if (xi.head<3>().norm() > 2.5) xi.head<3>() *= 2.5 / xi.head<3>().norm();
  return se3_exp(xi);
}

/// Graph over a dataset at the given trajectory and ground-truth landmarks,
/// with freshly computed exact association weights.
PoseFeatureGraph graph_from_dataset(const Dataset& ds,
                                    const std::vector<Se3Pose>& trajectory,
                                    const SolverConfig& cfg) {
  PoseFeatureGraph g;
  g.robot_nodes = trajectory;
  g.landmark_nodes = ds.ground_truth.landmarks;
  g.odometry_edges = ds.odometry;
  g.detection_edges = ds.keyframes;
  for (const KeyframeObservations& obs : ds.keyframes) {
    const WeightMatrix w = detail::compute_weights(
        obs.detections, g.landmark_nodes, g.robot_nodes[obs.frame], obs.frame, cfg);
    g.weight_matrices.push_back(prune_weights(w, cfg.delta_prune));
  }
  return g;
}

Dataset small_zero_noise_dataset(std::uint64_t seed, int frames = 24,
                                 int stride = 6, int landmarks = 5) {
  WorldConfig w;
  w.num_landmarks = landmarks;
  w.arena_half_extent = 5.0;
  TrajectoryConfig t;
  t.shape = TrajectoryShape::kSquareLoop;
  t.side_or_radius = 6.0;
  t.num_frames = frames;
  t.keyframe_stride = stride;
  return make_dataset(w, t, zero_noise(), seed);
}

double trajectory_error(const std::vector<Se3Pose>& a,
                        const std::vector<Se3Pose>& b) {
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, (a[i].translation - b[i].translation).norm());
    err = std::max(err, (a[i].rotation() - b[i].rotation()).cwiseAbs().maxCoeff());
  }
  return err;
}

}  // namespace

TEST(TranslationResidual, ZeroAtGeneratingPoint) {
  Rng rng(60);
  for (int i = 0; i < 50; ++i) {
    const Se3Pose x = random_pose(rng);
    const Vec3 t_j(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-1, 1));
    const Vec3 s_t = x.rotation().transpose() * (t_j - x.translation);
    EXPECT_LT(translation_residual(x, t_j, s_t, 0.5).norm(), 1e-12);
  }
}

TEST(TranslationResidual, DirectSubtraction) {
  const Se3Pose x;  // identity
  const Vec3 r = translation_residual(x, Vec3(1, 0, 0), Vec3::Zero(), 1.0);
  EXPECT_LT((r - Vec3(1, 0, 0)).norm(), 1e-15);
}

TEST(TranslationResidual, MatchesFrameTransformOracle) {
  Rng rng(61);
  for (int i = 0; i < 100; ++i) {
    const Se3Pose x = random_pose(rng);
    const Vec3 t_j(rng.normal(), rng.normal(), rng.normal());
    const Vec3 s_t(rng.normal(), rng.normal(), rng.normal());
    const double sigma = std::exp(rng.uniform(-2.0, 0.5));
    // explicit matrix arithmetic
    Eigen::Matrix4d xm = Eigen::Matrix4d::Identity();
    xm.topLeftCorner<3, 3>() = x.rotation();
    xm.topRightCorner<3, 1>() = x.translation;
    const Eigen::Matrix4d xinv = xm.inverse();
    const Vec3 in_body =
        (xinv * Eigen::Vector4d(t_j.x(), t_j.y(), t_j.z(), 1.0)).head<3>();
    const Vec3 expected = (in_body - s_t) / sigma;
    EXPECT_LT((translation_residual(x, t_j, s_t, sigma) - expected).norm(), 1e-9);
  }
}

TEST(OrientationResidual, ZeroAtExactTrig) {
  Rng rng(62);
  for (int i = 0; i < 50; ++i) {
    const Se3Pose x = random_pose(rng);
    const EulerAngle v_j(rng.uniform(-3, 3), rng.uniform(-1.3, 1.3),
                         rng.uniform(-3, 3));
    const double sigma_v = 0.05;
    const EulerAngle rel =
        rotation_to_euler(x.rotation().transpose() * euler_to_rotation(v_j));
    Vec6 mean, var;
    trig_prior_moments(rel, sigma_v, mean, var);
    const TrigOrientation mu_sv = TrigOrientation::from_vector(mean);
    EXPECT_LT(orientation_residual(x, v_j, mu_sv, sigma_v).norm(), 1e-12);
  }
}

TEST(OrientationResidual, FloorKeepsResidualFinite) {
  const Se3Pose x;  // identity -> rel = v_j
  const EulerAngle v_j(0, 0, 0);
  TrigOrientation mu_sv = trig_encode(v_j, 0.0);
  mu_sv.azimuth.cos_component += 0.01;
  // sigma_v = 0 makes every analytic variance zero; the floor takes over
  const Vec6 r = orientation_residual(x, v_j, mu_sv, 0.0, 1e-4);
  EXPECT_TRUE(r.allFinite());
  EXPECT_NEAR(r[0], 0.01 / std::sqrt(1e-4), 1e-9);
}

TEST(OrientationResidual, MatchesReEvaluationOracle) {
  Rng rng(63);
  for (int i = 0; i < 100; ++i) {
    const Se3Pose x = random_pose(rng);
    const EulerAngle v_j(rng.uniform(-3, 3), rng.uniform(-1.3, 1.3),
                         rng.uniform(-3, 3));
    Vec6 tv;
    for (int k = 0; k < 6; ++k) tv[k] = rng.uniform(-1, 1);
    const TrigOrientation mu_sv = TrigOrientation::from_vector(tv);
    const double sigma_v = rng.uniform(0.01, 0.2);
    // straight re-evaluation composing the public geometry ops
    const EulerAngle rel =
        rotation_to_euler(x.rotation().transpose() * euler_to_rotation(v_j));
    Vec6 expected;
    int c = 0;
    for (const double ang : {rel.azimuth, rel.elevation, rel.inplane}) {
      const TrigMoments m = orientation_prior_moments(ang, sigma_v);
      expected[c] = (tv[c] - m.mean_cos) /
                    std::sqrt(std::max(m.var_cos, kTrigVarianceFloor));
      expected[c + 1] = (tv[c + 1] - m.mean_sin) /
                        std::sqrt(std::max(m.var_sin, kTrigVarianceFloor));
      c += 2;
    }
    EXPECT_LT((orientation_residual(x, v_j, mu_sv, sigma_v) - expected)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(OdometryResidual, ZeroAtConsistentStep) {
  Rng rng(64);
  for (int i = 0; i < 50; ++i) {
    const Se3Pose x_t = random_pose(rng);
    const Se3Pose z = random_pose(rng, 0.3, 0.5);
    const Se3Pose x_next = se3_compose(x_t, z);
    EXPECT_LT(odometry_residual(x_t, x_next, z, Vec6::Ones()).norm(), 1e-12);
  }
}

TEST(OdometryResidual, SmallTranslationError) {
  Rng rng(65);
  const Se3Pose x_t = random_pose(rng);
  const Se3Pose z = random_pose(rng, 0.2, 0.4);
  Se3Pose offset;
  offset.translation = Vec3(0.1, 0, 0);
  const Se3Pose x_next = se3_compose(x_t, se3_compose(z, offset));
  const Vec6 r = odometry_residual(x_t, x_next, z, Vec6::Ones());
  Vec6 expected = Vec6::Zero();
  expected[3] = 0.1;
  EXPECT_LT((r - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OdometryResidual, MatchesLogMapOracle) {
  Rng rng(66);
  for (int i = 0; i < 100; ++i) {
    const Se3Pose x_t = random_pose(rng);
    const Se3Pose z = random_pose(rng, 0.3, 0.5);
    Twist noise;
    for (int k = 0; k < 6; ++k) noise[k] = rng.normal();
    noise *= rng.uniform(0.0, 0.5) / noise.norm();
    const Se3Pose x_next = se3_compose(x_t, se3_compose(z, se3_exp(noise)));
    Vec6 sigma;
    for (int k = 0; k < 6; ++k) sigma[k] = std::exp(rng.uniform(-1.0, 0.5));
    // independent evaluation via homogeneous matrices and se3_log
    Eigen::Matrix4d zm = Eigen::Matrix4d::Identity(), am = zm, bm = zm;
    zm.topLeftCorner<3, 3>() = z.rotation();
    zm.topRightCorner<3, 1>() = z.translation;
    am.topLeftCorner<3, 3>() = x_t.rotation();
    am.topRightCorner<3, 1>() = x_t.translation;
    bm.topLeftCorner<3, 3>() = x_next.rotation();
    bm.topRightCorner<3, 1>() = x_next.translation;
    const Eigen::Matrix4d em = zm.inverse() * am.inverse() * bm;
    Se3Pose err;
    err.rotation_q = Eigen::Quaterniond(Mat3(em.topLeftCorner<3, 3>()));
    err.translation = em.topRightCorner<3, 1>();
    bool near_cut = false;
    Twist expected = Twist::Zero();
    try {
      expected = se3_log(err);
    } catch (const LogNearCutError&) {
      near_cut = true;
    }
    if (near_cut) continue;
    const Vec6 r = odometry_residual(x_t, x_next, z, sigma);
    EXPECT_LT((r - expected.cwiseQuotient(sigma)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(TotalCost, ZeroOnNoiseFreeGraphAtGroundTruth) {
  const Dataset ds = small_zero_noise_dataset(70);
  const SolverConfig cfg = zero_noise_config();
  const PoseFeatureGraph g = graph_from_dataset(ds, ds.ground_truth.trajectory, cfg);
  EXPECT_NEAR(total_cost(g, cfg), 0.0, 1e-12);
}

TEST(TotalCost, SingleUnitResidualIsHalf) {
  // one odometry edge with a pure 1-sigma translation error
  PoseFeatureGraph g;
  g.robot_nodes.resize(2);
  g.robot_nodes[1].translation = Vec3(1.1, 0, 0);
  OdometryEdge e;
  e.from_frame = 0;
  e.to_frame = 1;
  e.relative.translation = Vec3(1.0, 0, 0);
  e.sigma = Vec6::Constant(0.1);
  g.odometry_edges.push_back(e);
  SolverConfig cfg;
  EXPECT_NEAR(total_cost(g, cfg), 0.5, 1e-9);
}

TEST(TotalCost, MatchesPerEdgeSummationOracle) {
  Rng rng(71);
  WorldConfig w;
  w.num_landmarks = 4;
  TrajectoryConfig t;
  t.num_frames = 12;
  t.keyframe_stride = 4;
  NoiseConfig n;
  n.odom_sigma_rot = 0.01;
  n.odom_sigma_trans = 0.05;
  n.sigma_t = 0.3;
  const Dataset ds = make_dataset(w, t, n, 71);
  SolverConfig cfg;
  const PoseFeatureGraph g = graph_from_dataset(ds, integrate_odometry(ds), cfg);

  double expected = 0.0;
  for (const OdometryEdge& e : g.odometry_edges) {
    expected += 0.5 * odometry_residual(g.robot_nodes[e.from_frame],
                                        g.robot_nodes[e.to_frame], e.relative,
                                        e.sigma)
                          .squaredNorm();
  }
  for (std::size_t kf = 0; kf < g.detection_edges.size(); ++kf) {
    const auto& obs = g.detection_edges[kf];
    for (std::size_t k = 0; k < obs.detections.size(); ++k) {
      for (Eigen::Index j = 0; j < g.weight_matrices[kf].weights.cols(); ++j) {
        const double wv = g.weight_matrices[kf].weights(k, j);
        if (wv <= 0.0) continue;
        const auto& lm = g.landmark_nodes[j];
        const auto& x = g.robot_nodes[obs.frame];
        expected += 0.5 * wv *
                    (translation_residual(x, lm.position, obs.detections[k].coord,
                                          obs.detections[k].sigma_t)
                         .squaredNorm() +
                     orientation_residual(x, lm.orientation,
                                          obs.detections[k].feature.mu_sv,
                                          cfg.sigma_v, cfg.variance_floor)
                         .squaredNorm());
      }
    }
  }
  EXPECT_NEAR(total_cost(g, cfg), expected, 1e-10 * std::max(1.0, expected));
}

TEST(OptimizePoses, FixedPointAtGroundTruth) {
  const Dataset ds = small_zero_noise_dataset(72);
  const SolverConfig cfg = zero_noise_config();
  PoseFeatureGraph g = graph_from_dataset(ds, ds.ground_truth.trajectory, cfg);
  const std::vector<Se3Pose> before = g.robot_nodes;
  const auto history = optimize_poses(g, cfg);
  EXPECT_LT(trajectory_error(g.robot_nodes, before), 1e-10);
  EXPECT_NEAR(history.front(), 0.0, 1e-10);
}

TEST(OptimizePoses, RecoversGroundTruthFromPerturbation) {
  const Dataset ds = small_zero_noise_dataset(73);
  SolverConfig cfg = zero_noise_config();
  cfg.max_gn_iters = 60;
  Rng rng(73);
  std::vector<Se3Pose> perturbed = ds.ground_truth.trajectory;
  for (std::size_t i = 1; i < perturbed.size(); ++i) {
    Twist xi;
    for (int k = 0; k < 6; ++k) xi[k] = rng.normal();
    xi *= 0.05 / xi.norm();
    perturbed[i] = se3_compose(perturbed[i], se3_exp(xi));
  }
  // weights computed at ground truth stay valid: associations are unambiguous
  PoseFeatureGraph g = graph_from_dataset(ds, ds.ground_truth.trajectory, cfg);
  g.robot_nodes = perturbed;
  const auto history = optimize_poses(g, cfg);
  EXPECT_LT(trajectory_error(g.robot_nodes, ds.ground_truth.trajectory), 1e-6);
  for (std::size_t i = 1; i < history.size(); ++i) {
    EXPECT_LT(history[i], history[i - 1]);
  }
}

TEST(OptimizePoses, GaugeInvarianceUnderGlobalTransform) {
  const Dataset ds = small_zero_noise_dataset(74);
  SolverConfig cfg = zero_noise_config();
  Rng rng(74);

  PoseFeatureGraph g = graph_from_dataset(ds, integrate_odometry(ds), cfg);
  const double base_cost = total_cost(g, cfg);

  // apply one rigid transform to every pose and landmark
  const Se3Pose gtrans = random_pose(rng, 0.8, 3.0);
  PoseFeatureGraph moved = g;
  for (Se3Pose& p : moved.robot_nodes) p = se3_compose(gtrans, p);
  for (Landmark& lm : moved.landmark_nodes) {
    lm.position = gtrans.rotation() * lm.position + gtrans.translation;
    lm.orientation =
        rotation_to_euler(gtrans.rotation() * euler_to_rotation(lm.orientation));
  }
  EXPECT_NEAR(total_cost(moved, cfg), base_cost, 1e-8 * std::max(1.0, base_cost));

  // re-optimizing both reaches the same cost
  const auto h1 = optimize_poses(g, cfg);
  const auto h2 = optimize_poses(moved, cfg);
  EXPECT_NEAR(h1.back(), h2.back(), 1e-8 * std::max(1.0, h1.back()));
}

TEST(UpdateFeatures, WeightedMeanCases) {
  // one keyframe, two detections, one landmark
  PoseFeatureGraph g;
  g.robot_nodes.resize(1);
  Landmark lm;
  lm.id = 0;
  lm.feature_c = VecX::Zero(3);
  lm.feature_i = VecX::Zero(2);
  g.landmark_nodes.push_back(lm);

  KeyframeObservations obs;
  obs.frame = 0;
  Detection a, b;
  a.feature.mu_sc = (VecX(3) << 1, 2, 3).finished();
  a.feature.mu_si = (VecX(2) << -1, 4).finished();
  b.feature.mu_sc = (VecX(3) << 3, 0, -1).finished();
  b.feature.mu_si = (VecX(2) << 5, 0).finished();
  obs.detections = {a, b};
  g.detection_edges.push_back(obs);

  WeightMatrix w(0, 2, 1);
  w.weights << 1.0, 0.0;
  g.weight_matrices.push_back(w);
  update_features(g);
  EXPECT_EQ(g.landmark_nodes[0].feature_c, a.feature.mu_sc);

  g.weight_matrices[0].weights << 0.5, 0.5;
  update_features(g);
  EXPECT_LT((g.landmark_nodes[0].feature_c -
             0.5 * (a.feature.mu_sc + b.feature.mu_sc))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);

  g.weight_matrices[0].weights << 0.75, 0.25;
  update_features(g);
  const VecX expected = 0.75 * a.feature.mu_sc + 0.25 * b.feature.mu_sc;
  EXPECT_LT((g.landmark_nodes[0].feature_c - expected).cwiseAbs().maxCoeff(),
            1e-15);

  // the weighted mean is the argmin of sum_k w_k |mu - mu_k|^2 / 2
  for (int coord = 0; coord < 3; ++coord) {
    const double lo = std::min(a.feature.mu_sc[coord], b.feature.mu_sc[coord]);
    const double hi = std::max(a.feature.mu_sc[coord], b.feature.mu_sc[coord]);
    const double numeric = oracles::argmin_1d(
        [&](double u) {
          const double da = u - a.feature.mu_sc[coord];
          const double db = u - b.feature.mu_sc[coord];
          return 0.75 * da * da / 2.0 + 0.25 * db * db / 2.0;
        },
        lo, hi);
    EXPECT_NEAR(g.landmark_nodes[0].feature_c[coord], numeric, 1e-8);
    EXPECT_GE(g.landmark_nodes[0].feature_c[coord], lo - 1e-12);
    EXPECT_LE(g.landmark_nodes[0].feature_c[coord], hi + 1e-12);
  }
}

TEST(UpdateFeatures, SkipsZeroWeightLandmarks) {
  PoseFeatureGraph g;
  g.robot_nodes.resize(1);
  Landmark lm;
  lm.id = 7;
  lm.feature_c = (VecX(2) << 1, 1).finished();
  lm.feature_i = (VecX(2) << 2, 2).finished();
  g.landmark_nodes.push_back(lm);
  KeyframeObservations obs;
  obs.frame = 0;
  Detection d;
  d.feature.mu_sc = (VecX(2) << 9, 9).finished();
  d.feature.mu_si = (VecX(2) << 9, 9).finished();
  obs.detections = {d};
  g.detection_edges.push_back(obs);
  WeightMatrix w(0, 1, 1);
  w.weights << 0.0;
  g.weight_matrices.push_back(w);
  const std::vector<int> skipped = update_features(g);
  ASSERT_EQ(skipped.size(), 1u);
  EXPECT_EQ(skipped[0], 7);
  EXPECT_EQ(g.landmark_nodes[0].feature_c, lm.feature_c);
}

TEST(SpawnLandmarks, EmptySetSpawnsFirstKeyframe) {
  const Dataset ds = small_zero_noise_dataset(75, 12, 12, 4);
  const SolverConfig cfg = zero_noise_config();
  PoseFeatureGraph g;
  g.robot_nodes = ds.ground_truth.trajectory;
  g.detection_edges = {ds.keyframes[0]};
  g.weight_matrices = {WeightMatrix()};
  const int n = spawn_landmarks(g, cfg);
  EXPECT_EQ(n, static_cast<int>(ds.keyframes[0].detections.size()));
  // spawned landmarks sit exactly at the generating ground truth
  for (std::size_t k = 0; k < ds.keyframes[0].detections.size(); ++k) {
    const Landmark& truth =
        ds.ground_truth.landmarks[ds.keyframes[0].true_landmark_ids[k]];
    EXPECT_LT((g.landmark_nodes[k].position - truth.position).norm(), 1e-9);
    EXPECT_NEAR(g.landmark_nodes[k].orientation.azimuth, truth.orientation.azimuth,
                1e-9);
  }
}

TEST(SpawnLandmarks, NoSpawnOnReobservation) {
  const Dataset ds = small_zero_noise_dataset(76, 12, 3, 4);
  const SolverConfig cfg = zero_noise_config();
  PoseFeatureGraph g;
  g.robot_nodes = ds.ground_truth.trajectory;
  g.landmark_nodes = ds.ground_truth.landmarks;
  g.detection_edges = ds.keyframes;
  g.weight_matrices.assign(ds.keyframes.size(), WeightMatrix());
  EXPECT_EQ(spawn_landmarks(g, cfg), 0);
}

TEST(SpawnLandmarks, TwoObjectSceneYieldsTwoLandmarks) {
  // scripted scene: two far-apart objects observed from every keyframe
  PrototypeTable table;
  Rng rng(77);
  table = sample_prototypes(2, 1, 4, 4, 4.0, rng);
  std::vector<Landmark> lms(2);
  lms[0].id = 0;
  lms[0].position = Vec3(4, 2, 0);
  lms[0].orientation = EulerAngle(0.3, 0.1, -0.2);
  lms[0].category_id = 0;
  lms[0].instance_id = 0;
  lms[0].feature_c = table.entries[0].mu_c;
  lms[0].feature_i = table.entries[0].mu_i;
  lms[1].id = 1;
  lms[1].position = Vec3(-3, 5, 1);
  lms[1].orientation = EulerAngle(-1.0, 0.4, 0.8);
  lms[1].category_id = 1;
  lms[1].instance_id = 0;
  lms[1].feature_c = table.entries[1].mu_c;
  lms[1].feature_i = table.entries[1].mu_i;

  TrajectoryConfig t;
  t.shape = TrajectoryShape::kCircle;
  t.side_or_radius = 7.0;
  t.num_frames = 40;
  t.keyframe_stride = 8;
  NoiseConfig n;
  n.sigma_t = 0.05;
  n.sigma_enc = 0.1;
  n.sigma_v = 0.05;
  const Dataset ds =
      simulate(table, lms, generate_trajectory(t), t, n, 77);

  SolverConfig cfg;
  // the bootstrap landmark estimate carries one observation's noise, so a
  // re-observation residual runs over twice the single-view variance; widen
  // the gate accordingly (objects this far apart score hundreds below ideal)
  cfg.spawn_threshold = 25.0;
  const Solution sol = run_em(ds, cfg);
  EXPECT_EQ(sol.landmarks.size(), 2u);
}

TEST(RunEm, ZeroNoiseConvergesInTwoIterations) {
  const Dataset ds = small_zero_noise_dataset(78);
  SolverConfig cfg = zero_noise_config();
  cfg.max_em_iters = 2;
  const Solution sol = run_em(ds, cfg);
  EXPECT_LE(sol.cost_history.size(), 2u);
  EXPECT_LT(trajectory_error(sol.trajectory, ds.ground_truth.trajectory), 1e-6);
  EXPECT_LT(sol.cost_history.back(), 1e-9);
}

TEST(RunEm, DeterministicAcrossRuns) {
  WorldConfig w;
  w.num_landmarks = 6;
  TrajectoryConfig t;
  t.num_frames = 30;
  t.keyframe_stride = 10;
  NoiseConfig n;
  n.odom_sigma_rot = 0.005;
  n.odom_sigma_trans = 0.02;
  n.sigma_t = 0.1;
  const Dataset ds = make_dataset(w, t, n, 79);
  SolverConfig cfg;
  cfg.max_em_iters = 3;
  const Solution a = run_em(ds, cfg);
  const Solution b = run_em(ds, cfg);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    EXPECT_EQ(a.trajectory[i].translation, b.trajectory[i].translation);
    EXPECT_EQ(a.trajectory[i].rotation_q.coeffs(), b.trajectory[i].rotation_q.coeffs());
  }
  ASSERT_EQ(a.cost_history.size(), b.cost_history.size());
  for (std::size_t i = 0; i < a.cost_history.size(); ++i) {
    EXPECT_EQ(a.cost_history[i], b.cost_history[i]);
  }
  ASSERT_EQ(a.landmarks.size(), b.landmarks.size());
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    EXPECT_EQ(a.landmarks[i].position, b.landmarks[i].position);
    EXPECT_EQ(a.landmarks[i].feature_c, b.landmarks[i].feature_c);
  }
}

TEST(RunEm, ClassifiesLandmarksAgainstPrototypes) {
  const Dataset ds = small_zero_noise_dataset(80);
  SolverConfig cfg = zero_noise_config();
  cfg.max_em_iters = 2;
  const Solution sol = run_em(ds, cfg);
  ASSERT_EQ(sol.landmarks.size(), ds.ground_truth.landmarks.size());
  // zero-noise features classify to the generating label; match landmarks by
  // position since the solver assigns its own ids
  for (const Landmark& est : sol.landmarks) {
    double best = 1e18;
    const Landmark* truth = nullptr;
    for (const Landmark& lm : ds.ground_truth.landmarks) {
      const double d = (lm.position - est.position).norm();
      if (d < best) {
        best = d;
        truth = &lm;
      }
    }
    ASSERT_LT(best, 1e-6);
    EXPECT_EQ(est.category_id, truth->category_id);
    EXPECT_EQ(est.instance_id, truth->instance_id);
  }
}

TEST(Jacobian, TwoStencilsAgree) {
  Rng rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    WorldConfig w;
    w.num_landmarks = 3;
    w.seed = 81 + trial;
    TrajectoryConfig t;
    t.num_frames = 8;
    t.keyframe_stride = 3;
    NoiseConfig n;
    n.odom_sigma_rot = 0.01;
    n.odom_sigma_trans = 0.04;
    n.sigma_t = 0.2;
    const Dataset ds = make_dataset(w, t, n, 81 + trial);
    SolverConfig cfg;
    const PoseFeatureGraph g = graph_from_dataset(ds, integrate_odometry(ds), cfg);
    const Eigen::MatrixXd j1 = assemble_jacobian(g, cfg, 1e-6);
    const Eigen::MatrixXd j2 = assemble_jacobian(g, cfg, 1e-7);
    const double scale = std::max(1.0, j1.cwiseAbs().maxCoeff());
    EXPECT_LT((j1 - j2).cwiseAbs().maxCoeff() / scale, 1e-4);
  }
}
