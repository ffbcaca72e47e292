#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "semslam/errors.hpp"
#include "semslam/geometry.hpp"
#include "semslam/optimizer.hpp"
#include "semslam/simulator.hpp"

namespace semslam {

inline constexpr int kDatasetSchemaVersion = 1;

// ---------------------------------------------------------------------------
// number formatting

/// Locale-independent shortest general format at the given significant digits.
/// Negative zero canonicalizes to "0" (JSON parsers may drop its sign anyway).
inline std::string format_double(double v, int precision) {
  if (!std::isfinite(v)) throw Error("format_double: non-finite value");
  if (v == 0.0) return "0";
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, precision);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) throw Error("format_fixed: non-finite value");
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, decimals);
  return std::string(buf, res.ptr);
}

namespace detail {

// Minimal deterministic JSON emitter: fixed key order, 17-significant-digit
// floats, no whitespace. Reading goes through nlohmann::json.
class JsonWriter {
 public:
  void begin_object() { sep(); out_ += '{'; comma_ = false; }
  void end_object() { out_ += '}'; comma_ = true; }
  void begin_array() { sep(); out_ += '['; comma_ = false; }
  void end_array() { out_ += ']'; comma_ = true; }

  void key(std::string_view k) {
    sep();
    out_ += '"';
    out_ += k;
    out_ += "\":";
    comma_ = false;
  }

  void value(double v) {
    sep();
    out_ += format_double(v, 17);
    comma_ = true;
  }
  void value(int v) { value_integral(std::to_string(v)); }
  void value(std::uint64_t v) { value_integral(std::to_string(v)); }
  void value(std::string_view s) {
    sep();
    out_ += '"';
    for (const char c : s) {
      if (c == '"' || c == '\\') out_ += '\\';
      out_ += c;
    }
    out_ += '"';
    comma_ = true;
  }

  void vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
    begin_array();
    for (Eigen::Index i = 0; i < v.size(); ++i) value(v[i]);
    end_array();
  }

  void pose(const Se3Pose& p) {
    begin_object();
    key("t");
    vec(p.translation);
    key("q");
    vec(canonical_quaternion_xyzw(p.rotation_q));
    end_object();
  }

  const std::string& str() const { return out_; }

 private:
  void value_integral(const std::string& s) {
    sep();
    out_ += s;
    comma_ = true;
  }
  void sep() {
    if (comma_) out_ += ',';
  }

  std::string out_;
  bool comma_ = false;
};

using njson = nlohmann::json;

inline const njson& jfield(const njson& obj, const char* k, const std::string& ctx) {
  const auto it = obj.find(k);
  if (it == obj.end()) throw ParseError(ctx + ": missing field '" + k + "'");
  return *it;
}

inline double jdouble(const njson& obj, const char* k, const std::string& ctx) {
  const njson& f = jfield(obj, k, ctx);
  if (!f.is_number()) throw ParseError(ctx + ": field '" + k + "' is not a number");
  return f.get<double>();
}

inline int jint(const njson& obj, const char* k, const std::string& ctx) {
  const njson& f = jfield(obj, k, ctx);
  if (!f.is_number_integer()) {
    throw ParseError(ctx + ": field '" + k + "' is not an integer");
  }
  return f.get<int>();
}

inline std::uint64_t juint64(const njson& obj, const char* k, const std::string& ctx) {
  const njson& f = jfield(obj, k, ctx);
  if (!f.is_number_unsigned() && !f.is_number_integer()) {
    throw ParseError(ctx + ": field '" + k + "' is not an integer");
  }
  return f.get<std::uint64_t>();
}

inline std::string jstring(const njson& obj, const char* k, const std::string& ctx) {
  const njson& f = jfield(obj, k, ctx);
  if (!f.is_string()) throw ParseError(ctx + ": field '" + k + "' is not a string");
  return f.get<std::string>();
}

inline VecX jvecx(const njson& obj, const char* k, const std::string& ctx) {
  const njson& f = jfield(obj, k, ctx);
  if (!f.is_array()) throw ParseError(ctx + ": field '" + k + "' is not an array");
  VecX v(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f[i].is_number()) throw ParseError(ctx + ": '" + k + "' has a non-number");
    v[static_cast<Eigen::Index>(i)] = f[i].get<double>();
  }
  return v;
}

inline Vec3 jvec3(const njson& obj, const char* k, const std::string& ctx) {
  const VecX v = jvecx(obj, k, ctx);
  if (v.size() != 3) throw ParseError(ctx + ": '" + k + "' must have 3 entries");
  return v.head<3>();
}

inline Vec6 jvec6(const njson& obj, const char* k, const std::string& ctx) {
  const VecX v = jvecx(obj, k, ctx);
  if (v.size() != 6) throw ParseError(ctx + ": '" + k + "' must have 6 entries");
  return v.head<6>();
}

inline Se3Pose jpose(const njson& obj, const std::string& ctx) {
  Se3Pose p;
  p.translation = jvec3(obj, "t", ctx);
  const VecX q = jvecx(obj, "q", ctx);
  if (q.size() != 4) throw ParseError(ctx + ": 'q' must have 4 entries");
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw ParseError(ctx + ": 'q' is not unit norm");
  }
  // stored unnormalized so re-serialization reproduces the bytes
  p.rotation_q = Eigen::Quaterniond(q[3], q[0], q[1], q[2]);
  return p;
}

inline njson parse_json(const std::string& text, const std::string& ctx) {
  try {
    return njson::parse(text);
  } catch (const njson::parse_error& e) {
    throw ParseError(ctx + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// dataset serialization

inline std::string dataset_to_json(const Dataset& ds) {
  detail::JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(kDatasetSchemaVersion);

  w.key("meta");
  w.begin_object();
  w.key("seed");
  w.value(ds.seed);
  w.key("world");
  w.begin_object();
  w.key("num_landmarks");
  w.value(ds.world_config.num_landmarks);
  w.key("arena_half_extent");
  w.value(ds.world_config.arena_half_extent);
  w.key("num_categories");
  w.value(ds.world_config.num_categories);
  w.key("instances_per_category");
  w.value(ds.world_config.instances_per_category);
  w.key("dim_c");
  w.value(ds.world_config.dim_c);
  w.key("dim_i");
  w.value(ds.world_config.dim_i);
  w.key("prototype_separation");
  w.value(ds.world_config.prototype_separation);
  w.key("seed");
  w.value(ds.world_config.seed);
  w.end_object();
  w.key("trajectory");
  w.begin_object();
  w.key("shape");
  w.value(std::string_view(to_string(ds.trajectory_config.shape)));
  w.key("side_or_radius");
  w.value(ds.trajectory_config.side_or_radius);
  w.key("num_frames");
  w.value(ds.trajectory_config.num_frames);
  w.key("keyframe_stride");
  w.value(ds.trajectory_config.keyframe_stride);
  w.end_object();
  w.key("noise");
  w.begin_object();
  w.key("odom_sigma_rot");
  w.value(ds.noise_config.odom_sigma_rot);
  w.key("odom_sigma_trans");
  w.value(ds.noise_config.odom_sigma_trans);
  w.key("sigma_t");
  w.value(ds.noise_config.sigma_t);
  w.key("sigma_enc");
  w.value(ds.noise_config.sigma_enc);
  w.key("sigma_v");
  w.value(ds.noise_config.sigma_v);
  w.key("detection_range");
  w.value(ds.noise_config.detection_range);
  w.key("fov_half_angle");
  w.value(ds.noise_config.fov_half_angle);
  w.key("detection_prob");
  w.value(ds.noise_config.detection_prob);
  w.end_object();
  w.end_object();

  w.key("prototypes");
  w.begin_object();
  w.key("dim_c");
  w.value(ds.prototypes.dim_c);
  w.key("dim_i");
  w.value(ds.prototypes.dim_i);
  w.key("entries");
  w.begin_array();
  for (const LabelPrototype& p : ds.prototypes.entries) {
    w.begin_object();
    w.key("category");
    w.value(p.category_id);
    w.key("instance");
    w.value(p.instance_id);
    w.key("mu_c");
    w.vec(p.mu_c);
    w.key("mu_i");
    w.vec(p.mu_i);
    w.end_object();
  }
  w.end_array();
  w.end_object();

  w.key("ground_truth");
  w.begin_object();
  w.key("trajectory");
  w.begin_array();
  for (const Se3Pose& p : ds.ground_truth.trajectory) w.pose(p);
  w.end_array();
  w.key("landmarks");
  w.begin_array();
  for (const Landmark& lm : ds.ground_truth.landmarks) {
    w.begin_object();
    w.key("id");
    w.value(lm.id);
    w.key("position");
    w.vec(lm.position);
    w.key("orientation");
    w.begin_array();
    w.value(lm.orientation.azimuth);
    w.value(lm.orientation.elevation);
    w.value(lm.orientation.inplane);
    w.end_array();
    w.key("category");
    w.value(lm.category_id);
    w.key("instance");
    w.value(lm.instance_id);
    w.key("feature_c");
    w.vec(lm.feature_c);
    w.key("feature_i");
    w.vec(lm.feature_i);
    w.end_object();
  }
  w.end_array();
  w.end_object();

  w.key("odometry");
  w.begin_array();
  for (const OdometryEdge& e : ds.odometry) {
    w.begin_object();
    w.key("from");
    w.value(e.from_frame);
    w.key("to");
    w.value(e.to_frame);
    w.key("relative");
    w.pose(e.relative);
    w.key("sigma");
    w.vec(e.sigma);
    w.end_object();
  }
  w.end_array();

  w.key("keyframes");
  w.begin_array();
  for (const KeyframeObservations& kf : ds.keyframes) {
    w.begin_object();
    w.key("frame");
    w.value(kf.frame);
    w.key("detections");
    w.begin_array();
    for (std::size_t k = 0; k < kf.detections.size(); ++k) {
      const Detection& d = kf.detections[k];
      w.begin_object();
      w.key("coord");
      w.vec(d.coord);
      w.key("sigma_t");
      w.value(d.sigma_t);
      w.key("true_landmark");
      w.value(k < kf.true_landmark_ids.size() ? kf.true_landmark_ids[k] : -1);
      w.key("mu_sc");
      w.vec(d.feature.mu_sc);
      w.key("mu_si");
      w.vec(d.feature.mu_si);
      w.key("sigma_s");
      w.value(d.feature.sigma_s);
      w.key("mu_sv");
      w.vec(d.feature.mu_sv.to_vector());
      w.key("sigma_sv");
      w.vec(d.feature.sigma_sv);
      w.end_object();
    }
    w.end_array();
    w.end_object();
  }
  w.end_array();

  w.end_object();
  std::string out = w.str();
  out += '\n';
  return out;
}

inline Dataset dataset_from_json(const std::string& text) {
  using detail::njson;
  const njson j = detail::parse_json(text, "dataset");
  if (!j.is_object()) throw ParseError("dataset: top level is not an object");
  const int version = detail::jint(j, "schema_version", "dataset");
  if (version != kDatasetSchemaVersion) {
    throw SchemaVersionMismatchError("dataset: schema_version " +
                                     std::to_string(version) + ", expected " +
                                     std::to_string(kDatasetSchemaVersion));
  }
  Dataset ds;

  const njson& meta = detail::jfield(j, "meta", "dataset");
  ds.seed = detail::juint64(meta, "seed", "meta");
  const njson& world = detail::jfield(meta, "world", "meta");
  ds.world_config.num_landmarks = detail::jint(world, "num_landmarks", "world");
  ds.world_config.arena_half_extent =
      detail::jdouble(world, "arena_half_extent", "world");
  ds.world_config.num_categories = detail::jint(world, "num_categories", "world");
  ds.world_config.instances_per_category =
      detail::jint(world, "instances_per_category", "world");
  ds.world_config.dim_c = detail::jint(world, "dim_c", "world");
  ds.world_config.dim_i = detail::jint(world, "dim_i", "world");
  ds.world_config.prototype_separation =
      detail::jdouble(world, "prototype_separation", "world");
  ds.world_config.seed = detail::juint64(world, "seed", "world");
  const njson& traj = detail::jfield(meta, "trajectory", "meta");
  ds.trajectory_config.shape =
      trajectory_shape_from_string(detail::jstring(traj, "shape", "trajectory"));
  ds.trajectory_config.side_or_radius =
      detail::jdouble(traj, "side_or_radius", "trajectory");
  ds.trajectory_config.num_frames = detail::jint(traj, "num_frames", "trajectory");
  ds.trajectory_config.keyframe_stride =
      detail::jint(traj, "keyframe_stride", "trajectory");
  const njson& noise = detail::jfield(meta, "noise", "meta");
  ds.noise_config.odom_sigma_rot = detail::jdouble(noise, "odom_sigma_rot", "noise");
  ds.noise_config.odom_sigma_trans =
      detail::jdouble(noise, "odom_sigma_trans", "noise");
  ds.noise_config.sigma_t = detail::jdouble(noise, "sigma_t", "noise");
  ds.noise_config.sigma_enc = detail::jdouble(noise, "sigma_enc", "noise");
  ds.noise_config.sigma_v = detail::jdouble(noise, "sigma_v", "noise");
  ds.noise_config.detection_range = detail::jdouble(noise, "detection_range", "noise");
  ds.noise_config.fov_half_angle = detail::jdouble(noise, "fov_half_angle", "noise");
  ds.noise_config.detection_prob = detail::jdouble(noise, "detection_prob", "noise");

  const njson& protos = detail::jfield(j, "prototypes", "dataset");
  ds.prototypes.dim_c = detail::jint(protos, "dim_c", "prototypes");
  ds.prototypes.dim_i = detail::jint(protos, "dim_i", "prototypes");
  for (const njson& e : detail::jfield(protos, "entries", "prototypes")) {
    LabelPrototype p;
    p.category_id = detail::jint(e, "category", "prototype entry");
    p.instance_id = detail::jint(e, "instance", "prototype entry");
    p.mu_c = detail::jvecx(e, "mu_c", "prototype entry");
    p.mu_i = detail::jvecx(e, "mu_i", "prototype entry");
    if (p.mu_c.size() != ds.prototypes.dim_c || p.mu_i.size() != ds.prototypes.dim_i) {
      throw ParseError("prototype entry: dimension mismatch with table");
    }
    ds.prototypes.entries.push_back(std::move(p));
  }

  const njson& gt = detail::jfield(j, "ground_truth", "dataset");
  for (const njson& p : detail::jfield(gt, "trajectory", "ground_truth")) {
    ds.ground_truth.trajectory.push_back(detail::jpose(p, "ground_truth pose"));
  }
  for (const njson& l : detail::jfield(gt, "landmarks", "ground_truth")) {
    Landmark lm;
    lm.id = detail::jint(l, "id", "landmark");
    lm.position = detail::jvec3(l, "position", "landmark");
    const VecX o = detail::jvecx(l, "orientation", "landmark");
    if (o.size() != 3) throw ParseError("landmark: orientation must have 3 angles");
    lm.orientation = EulerAngle(o[0], o[1], o[2]);
    lm.category_id = detail::jint(l, "category", "landmark");
    lm.instance_id = detail::jint(l, "instance", "landmark");
    lm.feature_c = detail::jvecx(l, "feature_c", "landmark");
    lm.feature_i = detail::jvecx(l, "feature_i", "landmark");
    ds.ground_truth.landmarks.push_back(std::move(lm));
  }

  for (const njson& e : detail::jfield(j, "odometry", "dataset")) {
    OdometryEdge edge;
    edge.from_frame = detail::jint(e, "from", "odometry edge");
    edge.to_frame = detail::jint(e, "to", "odometry edge");
    edge.relative = detail::jpose(detail::jfield(e, "relative", "odometry edge"),
                                  "odometry relative");
    edge.sigma = detail::jvec6(e, "sigma", "odometry edge");
    ds.odometry.push_back(edge);
  }

  for (const njson& kfj : detail::jfield(j, "keyframes", "dataset")) {
    KeyframeObservations kf;
    kf.frame = detail::jint(kfj, "frame", "keyframe");
    for (const njson& dj : detail::jfield(kfj, "detections", "keyframe")) {
      Detection d;
      d.keyframe_id = kf.frame;
      d.coord = detail::jvec3(dj, "coord", "detection");
      d.sigma_t = detail::jdouble(dj, "sigma_t", "detection");
      d.feature.mu_sc = detail::jvecx(dj, "mu_sc", "detection");
      d.feature.mu_si = detail::jvecx(dj, "mu_si", "detection");
      d.feature.sigma_s = detail::jdouble(dj, "sigma_s", "detection");
      d.feature.mu_sv = TrigOrientation::from_vector(detail::jvec6(dj, "mu_sv", "detection"));
      d.feature.sigma_sv = detail::jvec6(dj, "sigma_sv", "detection");
      kf.true_landmark_ids.push_back(detail::jint(dj, "true_landmark", "detection"));
      kf.detections.push_back(std::move(d));
    }
    ds.keyframes.push_back(std::move(kf));
  }
  return ds;
}

/// Writes the dataset JSON; returns the byte count.
inline std::size_t write_dataset(const Dataset& ds, const std::string& path) {
  const std::string bytes = dataset_to_json(ds);
  detail::write_file(path, bytes);
  return bytes.size();
}

inline Dataset read_dataset(const std::string& path) {
  return dataset_from_json(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// solution serialization

inline std::string solution_to_json(const Solution& sol) {
  detail::JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(kDatasetSchemaVersion);
  w.key("cost_history");
  w.begin_array();
  for (const double c : sol.cost_history) w.value(c);
  w.end_array();
  w.key("iterations");
  w.begin_array();
  for (const EmIterationStats& it : sol.iterations) {
    w.begin_object();
    w.key("cost");
    w.value(it.cost);
    w.key("spawned");
    w.value(it.spawned);
    w.key("lm_costs");
    w.begin_array();
    for (const double c : it.lm_costs) w.value(c);
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.key("trajectory");
  w.begin_array();
  for (const Se3Pose& p : sol.trajectory) w.pose(p);
  w.end_array();
  w.key("landmarks");
  w.begin_array();
  for (const Landmark& lm : sol.landmarks) {
    w.begin_object();
    w.key("id");
    w.value(lm.id);
    w.key("position");
    w.vec(lm.position);
    w.key("orientation");
    w.begin_array();
    w.value(lm.orientation.azimuth);
    w.value(lm.orientation.elevation);
    w.value(lm.orientation.inplane);
    w.end_array();
    w.key("category");
    w.value(lm.category_id);
    w.key("instance");
    w.value(lm.instance_id);
    w.key("feature_c");
    w.vec(lm.feature_c);
    w.key("feature_i");
    w.vec(lm.feature_i);
    w.end_object();
  }
  w.end_array();
  w.key("final_weights");
  w.begin_array();
  for (const WeightMatrix& wm : sol.final_weights) {
    w.begin_object();
    w.key("frame");
    w.value(wm.keyframe_id);
    w.key("rows");
    w.value(static_cast<int>(wm.weights.rows()));
    w.key("cols");
    w.value(static_cast<int>(wm.weights.cols()));
    w.key("weights");
    w.begin_array();
    for (Eigen::Index i = 0; i < wm.weights.rows(); ++i) {
      w.begin_array();
      for (Eigen::Index jcol = 0; jcol < wm.weights.cols(); ++jcol) {
        w.value(wm.weights(i, jcol));
      }
      w.end_array();
    }
    w.end_array();
    w.key("row_pruned");
    w.begin_array();
    for (const std::uint8_t f : wm.row_pruned) w.value(static_cast<int>(f));
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.end_object();
  std::string out = w.str();
  out += '\n';
  return out;
}

inline Solution solution_from_json(const std::string& text) {
  using detail::njson;
  const njson j = detail::parse_json(text, "solution");
  const int version = detail::jint(j, "schema_version", "solution");
  if (version != kDatasetSchemaVersion) {
    throw SchemaVersionMismatchError("solution: schema_version " +
                                     std::to_string(version));
  }
  Solution sol;
  for (const njson& c : detail::jfield(j, "cost_history", "solution")) {
    sol.cost_history.push_back(c.get<double>());
  }
  for (const njson& itj : detail::jfield(j, "iterations", "solution")) {
    EmIterationStats it;
    it.cost = detail::jdouble(itj, "cost", "iteration");
    it.spawned = detail::jint(itj, "spawned", "iteration");
    for (const njson& c : detail::jfield(itj, "lm_costs", "iteration")) {
      it.lm_costs.push_back(c.get<double>());
    }
    sol.iterations.push_back(std::move(it));
  }
  for (const njson& p : detail::jfield(j, "trajectory", "solution")) {
    sol.trajectory.push_back(detail::jpose(p, "solution pose"));
  }
  for (const njson& l : detail::jfield(j, "landmarks", "solution")) {
    Landmark lm;
    lm.id = detail::jint(l, "id", "landmark");
    lm.position = detail::jvec3(l, "position", "landmark");
    const VecX o = detail::jvecx(l, "orientation", "landmark");
    if (o.size() != 3) throw ParseError("landmark: orientation must have 3 angles");
    lm.orientation = EulerAngle(o[0], o[1], o[2]);
    lm.category_id = detail::jint(l, "category", "landmark");
    lm.instance_id = detail::jint(l, "instance", "landmark");
    lm.feature_c = detail::jvecx(l, "feature_c", "landmark");
    lm.feature_i = detail::jvecx(l, "feature_i", "landmark");
    sol.landmarks.push_back(std::move(lm));
  }
  for (const njson& wj : detail::jfield(j, "final_weights", "solution")) {
    WeightMatrix wm;
    wm.keyframe_id = detail::jint(wj, "frame", "weights");
    const int rows = detail::jint(wj, "rows", "weights");
    const int cols = detail::jint(wj, "cols", "weights");
    wm.weights.resize(rows, cols);
    const njson& rowsj = detail::jfield(wj, "weights", "weights");
    if (static_cast<int>(rowsj.size()) != rows) {
      throw ParseError("weights: row count mismatch");
    }
    for (int i = 0; i < rows; ++i) {
      if (static_cast<int>(rowsj[i].size()) != cols) {
        throw ParseError("weights: column count mismatch");
      }
      for (int c = 0; c < cols; ++c) wm.weights(i, c) = rowsj[i][c].get<double>();
    }
    for (const njson& f : detail::jfield(wj, "row_pruned", "weights")) {
      wm.row_pruned.push_back(static_cast<std::uint8_t>(f.get<int>()));
    }
    sol.final_weights.push_back(std::move(wm));
  }
  return sol;
}

inline std::size_t write_solution(const Solution& sol, const std::string& path) {
  const std::string bytes = solution_to_json(sol);
  detail::write_file(path, bytes);
  return bytes.size();
}

inline Solution read_solution(const std::string& path) {
  return solution_from_json(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// trajectory text format

/// One pose per line: "timestamp tx ty tz qx qy qz qw". Timestamps are frame
/// indices with 6 decimal places; the remaining fields carry 9 significant
/// digits.
inline std::string trajectory_to_string(const std::vector<Se3Pose>& poses) {
  std::string out;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Eigen::Vector4d q = canonical_quaternion_xyzw(poses[i].rotation_q);
    out += format_fixed(static_cast<double>(i), 6);
    for (int k = 0; k < 3; ++k) {
      out += ' ';
      out += format_double(poses[i].translation[k], 9);
    }
    for (int k = 0; k < 4; ++k) {
      out += ' ';
      out += format_double(q[k], 9);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<Se3Pose> parse_trajectory(const std::string& text) {
  std::vector<Se3Pose> poses;
  std::size_t pos = 0;
  int line_no = 0;
  double prev_ts = -std::numeric_limits<double>::infinity();
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    double fields[8];
    std::size_t cursor = 0;
    for (int f = 0; f < 8; ++f) {
      while (cursor < line.size() && line[cursor] == ' ') ++cursor;
      const std::size_t start = cursor;
      while (cursor < line.size() && line[cursor] != ' ') ++cursor;
      if (start == cursor) {
        throw ParseError("trajectory line " + std::to_string(line_no) +
                         ": expected 8 fields");
      }
      const auto res = std::from_chars(line.data() + start, line.data() + cursor,
                                       fields[f]);
      if (res.ec != std::errc{} || res.ptr != line.data() + cursor) {
        throw ParseError("trajectory line " + std::to_string(line_no) +
                         ": bad number in field " + std::to_string(f + 1));
      }
    }
    while (cursor < line.size() && line[cursor] == ' ') ++cursor;
    if (cursor != line.size()) {
      throw ParseError("trajectory line " + std::to_string(line_no) +
                       ": trailing characters");
    }
    if (fields[0] <= prev_ts) {
      throw ParseError("trajectory line " + std::to_string(line_no) +
                       ": timestamps must increase strictly");
    }
    prev_ts = fields[0];
    const Eigen::Vector4d q(fields[4], fields[5], fields[6], fields[7]);
    if (std::abs(q.norm() - 1.0) > 1e-6) {
      throw ParseError("trajectory line " + std::to_string(line_no) +
                       ": quaternion is not unit norm");
    }
    Se3Pose p;
    p.translation = Vec3(fields[1], fields[2], fields[3]);
    // stored unnormalized so re-serialization reproduces the bytes
    p.rotation_q = Eigen::Quaterniond(q[3], q[0], q[1], q[2]);
    poses.push_back(p);
  }
  return poses;
}

inline void export_trajectory(const std::vector<Se3Pose>& poses,
                              const std::string& path) {
  detail::write_file(path, trajectory_to_string(poses));
}

inline std::vector<Se3Pose> import_trajectory(const std::string& path) {
  return parse_trajectory(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// metrics

namespace detail {

/// Rigid (rotation + translation, no scale) least-squares alignment mapping
/// est onto gt: returns (R, t) minimizing sum |gt_i - (R est_i + t)|^2.
inline std::pair<Mat3, Vec3> rigid_align(const std::vector<Se3Pose>& est,
                                         const std::vector<Se3Pose>& gt) {
  const std::size_t n = est.size();
  Vec3 ce = Vec3::Zero(), cg = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    ce += est[i].translation;
    cg += gt[i].translation;
  }
  ce /= static_cast<double>(n);
  cg /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cov += (gt[i].translation - cg) * (est[i].translation - ce).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    s(2, 2) = -1.0;
  }
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  return {r, cg - r * ce};
}

}  // namespace detail

/// Per-frame absolute translation errors after rigid alignment.
inline std::vector<double> ate_errors(const std::vector<Se3Pose>& estimated,
                                      const std::vector<Se3Pose>& ground_truth) {
  if (estimated.size() != ground_truth.size() || estimated.empty()) {
    throw LengthMismatchError("ate: trajectories must have equal nonzero length");
  }
  const auto [r, t] = detail::rigid_align(estimated, ground_truth);
  std::vector<double> errors;
  errors.reserve(estimated.size());
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    errors.push_back(
        (ground_truth[i].translation - (r * estimated[i].translation + t)).norm());
  }
  return errors;
}

/// RMSE of absolute translation errors after rigid alignment (no scale).
inline double ate(const std::vector<Se3Pose>& estimated,
                  const std::vector<Se3Pose>& ground_truth) {
  const std::vector<double> errors = ate_errors(estimated, ground_truth);
  double s = 0.0;
  for (const double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

/// Translation magnitudes of relative-pose discrepancies over frame gap delta.
inline std::vector<double> rpe_errors(const std::vector<Se3Pose>& estimated,
                                      const std::vector<Se3Pose>& ground_truth,
                                      int delta_frames) {
  if (estimated.size() != ground_truth.size()) {
    throw LengthMismatchError("rpe: trajectories must have equal length");
  }
  if (delta_frames < 1 ||
      estimated.size() <= static_cast<std::size_t>(delta_frames)) {
    throw LengthMismatchError("rpe: need length > delta_frames >= 1");
  }
  std::vector<double> errors;
  for (std::size_t i = 0; i + delta_frames < estimated.size(); ++i) {
    const Se3Pose rel_est =
        se3_compose(se3_inverse(estimated[i]), estimated[i + delta_frames]);
    const Se3Pose rel_gt =
        se3_compose(se3_inverse(ground_truth[i]), ground_truth[i + delta_frames]);
    errors.push_back(
        se3_compose(se3_inverse(rel_gt), rel_est).translation.norm());
  }
  return errors;
}

inline double rpe(const std::vector<Se3Pose>& estimated,
                  const std::vector<Se3Pose>& ground_truth, int delta_frames) {
  const std::vector<double> errors = rpe_errors(estimated, ground_truth, delta_frames);
  double s = 0.0;
  for (const double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

struct MetricReport {
  double ate_rmse = 0.0;
  double rpe_rmse = 0.0;
  std::vector<double> ate_series;
  std::vector<double> rpe_series;
};

inline MetricReport evaluate_trajectories(const std::vector<Se3Pose>& estimated,
                                          const std::vector<Se3Pose>& ground_truth,
                                          int rpe_delta = 1) {
  MetricReport rep;
  rep.ate_series = ate_errors(estimated, ground_truth);
  rep.rpe_series = rpe_errors(estimated, ground_truth, rpe_delta);
  double s = 0.0;
  for (const double e : rep.ate_series) s += e * e;
  rep.ate_rmse = std::sqrt(s / static_cast<double>(rep.ate_series.size()));
  s = 0.0;
  for (const double e : rep.rpe_series) s += e * e;
  rep.rpe_rmse = std::sqrt(s / static_cast<double>(rep.rpe_series.size()));
  return rep;
}

// ---------------------------------------------------------------------------
// simulation config document

struct SimConfig {
  WorldConfig world;
  TrajectoryConfig trajectory;
  NoiseConfig noise;
};

inline SimConfig sim_config_from_json(const std::string& text) {
  using detail::njson;
  const njson j = detail::parse_json(text, "config");
  if (!j.is_object()) throw ParseError("config: top level is not an object");
  SimConfig cfg;
  const auto get = [](const njson& obj, const char* k, double fallback) {
    return obj.contains(k) ? detail::jdouble(obj, k, "config") : fallback;
  };
  const auto geti = [](const njson& obj, const char* k, int fallback) {
    return obj.contains(k) ? detail::jint(obj, k, "config") : fallback;
  };
  for (const auto& [section, body] : j.items()) {
    if (section == "world") {
      cfg.world.num_landmarks = geti(body, "num_landmarks", cfg.world.num_landmarks);
      cfg.world.arena_half_extent =
          get(body, "arena_half_extent", cfg.world.arena_half_extent);
      cfg.world.num_categories = geti(body, "num_categories", cfg.world.num_categories);
      cfg.world.instances_per_category =
          geti(body, "instances_per_category", cfg.world.instances_per_category);
      cfg.world.dim_c = geti(body, "dim_c", cfg.world.dim_c);
      cfg.world.dim_i = geti(body, "dim_i", cfg.world.dim_i);
      cfg.world.prototype_separation =
          get(body, "prototype_separation", cfg.world.prototype_separation);
    } else if (section == "trajectory") {
      if (body.contains("shape")) {
        cfg.trajectory.shape =
            trajectory_shape_from_string(detail::jstring(body, "shape", "config"));
      }
      cfg.trajectory.side_or_radius =
          get(body, "side_or_radius", cfg.trajectory.side_or_radius);
      cfg.trajectory.num_frames = geti(body, "num_frames", cfg.trajectory.num_frames);
      cfg.trajectory.keyframe_stride =
          geti(body, "keyframe_stride", cfg.trajectory.keyframe_stride);
    } else if (section == "noise") {
      cfg.noise.odom_sigma_rot = get(body, "odom_sigma_rot", cfg.noise.odom_sigma_rot);
      cfg.noise.odom_sigma_trans =
          get(body, "odom_sigma_trans", cfg.noise.odom_sigma_trans);
      cfg.noise.sigma_t = get(body, "sigma_t", cfg.noise.sigma_t);
      cfg.noise.sigma_enc = get(body, "sigma_enc", cfg.noise.sigma_enc);
      cfg.noise.sigma_v = get(body, "sigma_v", cfg.noise.sigma_v);
      cfg.noise.detection_range = get(body, "detection_range", cfg.noise.detection_range);
      cfg.noise.fov_half_angle = get(body, "fov_half_angle", cfg.noise.fov_half_angle);
      cfg.noise.detection_prob = get(body, "detection_prob", cfg.noise.detection_prob);
    } else {
      throw ParseError("config: unknown section '" + section + "'");
    }
  }
  return cfg;
}

inline SimConfig read_sim_config(const std::string& path) {
  return sim_config_from_json(detail::read_file(path));
}

}  // namespace semslam
