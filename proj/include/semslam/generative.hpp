#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "semslam/errors.hpp"
#include "semslam/geometry.hpp"
#include "semslam/rng.hpp"

namespace semslam {

using VecX = Eigen::VectorXd;

/// Lower bound applied to the analytic trig variances before they whiten
/// residuals or drive the encoder emulator. Near v = 0 the cos variance falls
/// to ~sigma_v^4/2 (3e-6 at sigma_v = 0.05), which would otherwise produce
/// residual weights of order 1e5 and ill-conditioned normal equations.
inline constexpr double kTrigVarianceFloor = 1e-4;

/// Per-(category, instance) Gaussian prior means over the latent feature
/// blocks. Stands in for a learned prior over labels.
struct LabelPrototype {
  int category_id = 0;
  int instance_id = 0;
  VecX mu_c;
  VecX mu_i;
};

struct PrototypeTable {
  int dim_c = 0;
  int dim_i = 0;
  std::vector<LabelPrototype> entries;

  const LabelPrototype& find(int category_id, int instance_id) const {
    for (const auto& e : entries) {
      if (e.category_id == category_id && e.instance_id == instance_id) return e;
    }
    throw Error("PrototypeTable: no prototype for label (" +
                std::to_string(category_id) + ", " + std::to_string(instance_id) +
                ")");
  }
};

/// Variational-likelihood parameters for one object observation: shape block
/// means with a shared diagonal deviation, and the trig orientation mean with
/// per-component deviations.
struct EncodedFeature {
  VecX mu_sc;
  VecX mu_si;
  double sigma_s = 1.0;
  TrigOrientation mu_sv;
  Vec6 sigma_sv = Vec6::Constant(1.0);
};

/// Occupancy grid; probabilities for predictions, {0,1} for targets.
struct VoxelGrid {
  std::array<int, 3> resolution{0, 0, 0};
  std::vector<double> occupancy;

  int cell_count() const { return resolution[0] * resolution[1] * resolution[2]; }

  static VoxelGrid filled(std::array<int, 3> res, double value) {
    VoxelGrid g;
    g.resolution = res;
    g.occupancy.assign(static_cast<std::size_t>(res[0]) * res[1] * res[2], value);
    return g;
  }
};

// ---------------------------------------------------------------------------
// densities

/// Exact log density of a diagonal Gaussian.
inline double gaussian_log_density(const VecX& x, const VecX& mean,
                                   const VecX& variance_diag) {
  if (x.size() != mean.size() || x.size() != variance_diag.size()) {
    throw DimensionMismatchError("gaussian_log_density: size mismatch");
  }
  if ((variance_diag.array() <= 0.0).any()) {
    throw Error("gaussian_log_density: variances must be positive");
  }
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double d = x[k] - mean[k];
    s += std::log(2.0 * kPi * variance_diag[k]) + d * d / variance_diag[k];
  }
  return -0.5 * s;
}

/// Isotropic convenience overload.
inline double gaussian_log_density_iso(const VecX& x, const VecX& mean,
                                       double variance) {
  return gaussian_log_density(x, mean, VecX::Constant(x.size(), variance));
}

inline double gaussian_log_density(double x, double mean, double variance) {
  if (variance <= 0.0) throw Error("gaussian_log_density: variance must be positive");
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * kPi * variance) + d * d / variance);
}

/// Log prior of the shape blocks under a prototype: both blocks are
/// unit-variance Gaussians centered at the prototype means.
inline double feature_prior_logpdf(const VecX& mu_sc, const VecX& mu_si,
                                   const VecX& ref_c, const VecX& ref_i) {
  return gaussian_log_density_iso(mu_sc, ref_c, 1.0) +
         gaussian_log_density_iso(mu_si, ref_i, 1.0);
}

inline double feature_prior_logpdf(const EncodedFeature& f,
                                   const LabelPrototype& p) {
  return feature_prior_logpdf(f.mu_sc, f.mu_si, p.mu_c, p.mu_i);
}

/// Closed-form KL divergence between diagonal Gaussians.
inline double kl_diag_gaussians(const VecX& q_mean, const VecX& q_var,
                                const VecX& p_mean, const VecX& p_var) {
  if (q_mean.size() != q_var.size() || q_mean.size() != p_mean.size() ||
      q_mean.size() != p_var.size()) {
    throw DimensionMismatchError("kl_diag_gaussians: size mismatch");
  }
  if ((q_var.array() <= 0.0).any() || (p_var.array() <= 0.0).any()) {
    throw Error("kl_diag_gaussians: variances must be positive");
  }
  double kl = 0.0;
  for (Eigen::Index k = 0; k < q_mean.size(); ++k) {
    const double d = q_mean[k] - p_mean[k];
    kl += 0.5 * (std::log(p_var[k] / q_var[k]) +
                 (q_var[k] + d * d) / p_var[k] - 1.0);
  }
  return kl;
}

struct KlBlocks {
  double kl_c = 0.0;
  double kl_i = 0.0;
  double kl_v = 0.0;

  double total() const { return kl_c + kl_i + kl_v; }
};

/// Block decomposition of the KL term: category and instance blocks against
/// unit-variance prototype priors, orientation block against the analytic trig
/// prior moments at (v, sigma_v). Requires sigma_v > 0 so the prior variances
/// are positive; no floor is applied here.
inline KlBlocks kl_blocks(const EncodedFeature& f, const LabelPrototype& p,
                          const EulerAngle& v, double sigma_v) {
  if (sigma_v <= 0.0) throw Error("kl_blocks: sigma_v must be positive");
  KlBlocks out;
  out.kl_c = kl_diag_gaussians(
      f.mu_sc, VecX::Constant(f.mu_sc.size(), f.sigma_s * f.sigma_s), p.mu_c,
      VecX::Ones(p.mu_c.size()));
  out.kl_i = kl_diag_gaussians(
      f.mu_si, VecX::Constant(f.mu_si.size(), f.sigma_s * f.sigma_s), p.mu_i,
      VecX::Ones(p.mu_i.size()));
  Vec6 prior_mean, prior_var;
  trig_prior_moments(v, sigma_v, prior_mean, prior_var);
  const Vec6 q_mean = f.mu_sv.to_vector();
  const Vec6 q_var = f.sigma_sv.cwiseProduct(f.sigma_sv);
  out.kl_v = kl_diag_gaussians(q_mean, q_var, prior_mean, prior_var);
  return out;
}

/// Variational lower bound from a reconstruction log-likelihood and a total KL.
inline double elbo(double kl_total, double recon_loglik) {
  return recon_loglik - kl_total;
}

/// False-negative-weighted voxel cross entropy:
///   sum_j -gamma t_j log p_j - (1-gamma)(1-t_j) log(1-p_j)
/// Predictions are clamped to [1e-7, 1-1e-7] before the logs.
inline double recon_loss(const VoxelGrid& pred, const VoxelGrid& target,
                         double gamma) {
  if (pred.resolution != target.resolution ||
      pred.occupancy.size() != target.occupancy.size()) {
    throw ResolutionMismatchError("recon_loss: grids differ in resolution");
  }
  if (gamma < 0.0 || gamma > 1.0) throw Error("recon_loss: gamma must be in [0,1]");
  double loss = 0.0;
  for (std::size_t j = 0; j < pred.occupancy.size(); ++j) {
    const double p = std::clamp(pred.occupancy[j], 1e-7, 1.0 - 1e-7);
    const double t = target.occupancy[j];
    loss += -gamma * t * std::log(p) - (1.0 - gamma) * (1.0 - t) * std::log(1.0 - p);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// encoder emulator

/// Draws a variational-likelihood feature directly from the generative priors,
/// standing in for a trained encoder. Shape block means are sampled around the
/// prototype with deviation sigma_enc; trig components around the analytic
/// prior moments of the relative orientation, with the variance floor applied.
///
/// sigma_enc = 0 and sigma_v = 0 are exact noiseless encodings. The stored
/// deviations stay positive in those limits (sigma_s floored at 1e-6, sigma_sv
/// at sqrt(kTrigVarianceFloor)) so downstream densities remain finite.
inline EncodedFeature emulate_encoding(const LabelPrototype& p,
                                       const EulerAngle& v_rel, double sigma_enc,
                                       double sigma_v, Rng& rng) {
  if (sigma_enc < 0.0) throw Error("emulate_encoding: sigma_enc must be >= 0");
  if (sigma_v < 0.0) throw Error("emulate_encoding: sigma_v must be >= 0");
  EncodedFeature f;
  f.mu_sc.resize(p.mu_c.size());
  for (Eigen::Index k = 0; k < p.mu_c.size(); ++k) {
    f.mu_sc[k] = rng.normal(p.mu_c[k], sigma_enc);
  }
  f.mu_si.resize(p.mu_i.size());
  for (Eigen::Index k = 0; k < p.mu_i.size(); ++k) {
    f.mu_si[k] = rng.normal(p.mu_i[k], sigma_enc);
  }
  f.sigma_s = std::max(sigma_enc, 1e-6);

  Vec6 mean, var;
  trig_prior_moments(v_rel, sigma_v, mean, var);
  Vec6 mu_sv;
  for (int k = 0; k < 6; ++k) {
    const double floored = std::max(var[k], kTrigVarianceFloor);
    const double sampling_sd = sigma_v > 0.0 ? std::sqrt(floored) : 0.0;
    mu_sv[k] = rng.normal(mean[k], sampling_sd);
    f.sigma_sv[k] = std::sqrt(floored);
  }
  f.mu_sv = TrigOrientation::from_vector(mu_sv);
  return f;
}

/// Draws prototype means with a minimum pairwise separation: category means
/// against all previous categories, instance means against the other instances
/// of the same category. Components are N(0, separation^2); a draw is retried
/// up to 10^4 times before SeparationInfeasibleError.
inline PrototypeTable sample_prototypes(int num_categories,
                                        int instances_per_category, int dim_c,
                                        int dim_i, double separation, Rng& rng) {
  if (num_categories < 1 || instances_per_category < 1 || dim_c < 1 || dim_i < 1) {
    throw Error("sample_prototypes: counts and dimensions must be >= 1");
  }
  if (separation <= 0.0) throw Error("sample_prototypes: separation must be positive");

  const auto draw_separated = [&](int dim, const std::vector<VecX>& others) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      VecX v(dim);
      for (int k = 0; k < dim; ++k) v[k] = rng.normal(0.0, separation);
      bool ok = true;
      for (const VecX& o : others) {
        if ((v - o).norm() < separation) {
          ok = false;
          break;
        }
      }
      if (ok) return v;
    }
    throw SeparationInfeasibleError(
        "sample_prototypes: could not satisfy separation after 10^4 attempts");
  };

  PrototypeTable table;
  table.dim_c = dim_c;
  table.dim_i = dim_i;
  std::vector<VecX> category_means;
  for (int c = 0; c < num_categories; ++c) {
    category_means.push_back(draw_separated(dim_c, category_means));
    std::vector<VecX> instance_means;
    for (int i = 0; i < instances_per_category; ++i) {
      instance_means.push_back(draw_separated(dim_i, instance_means));
      LabelPrototype p;
      p.category_id = c;
      p.instance_id = i;
      p.mu_c = category_means.back();
      p.mu_i = instance_means.back();
      table.entries.push_back(std::move(p));
    }
  }
  return table;
}

}  // namespace semslam
