#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "viewplan/geom3d.hpp"
#include "viewplan/meshkit.hpp"
#include "viewplan/rng.hpp"

namespace viewplan {

/// Query points over a planning horizon: T timesteps x N points, with a
/// validity mask. Masked entries are excluded from every reward denominator.
struct QueryPointSet {
  std::vector<std::vector<Vec3>> points;      // [T][N]
  std::vector<std::vector<std::uint8_t>> valid;  // [T][N], 1 = usable

  int horizon() const { return static_cast<int>(points.size()); }
  int count() const { return points.empty() ? 0 : static_cast<int>(points[0].size()); }

  static QueryPointSet all_valid(std::vector<std::vector<Vec3>> pts) {
    QueryPointSet q;
    q.valid.resize(pts.size());
    for (std::size_t t = 0; t < pts.size(); ++t) {
      q.valid[t].assign(pts[t].size(), 1);
    }
    q.points = std::move(pts);
    return q;
  }

  void validate() const {
    if (points.size() != valid.size()) {
      throw std::invalid_argument("QueryPointSet: points/valid shape mismatch");
    }
    for (std::size_t t = 0; t < points.size(); ++t) {
      if (points[t].size() != valid[t].size()) {
        throw std::invalid_argument("QueryPointSet: points/valid shape mismatch");
      }
    }
  }

  QueryPointSet slice(int t) const {
    QueryPointSet q;
    q.points = {points.at(t)};
    q.valid = {valid.at(t)};
    return q;
  }
};

struct RewardWeights {
  double lambda_c = 0.1;
  double lambda_m = 0.5;
  double lambda_s = 0.5;
  double lambda_var = 0.1;  // population-variance discount inside the margin term
  double sigma_safe = 0.1;  // meters
};

struct PerturbationConfig {
  int J = 4;
  double sigma_pos = 0.02;  // meters, per translation axis
  double sigma_rot = 0.05;  // radians, per axis-angle axis
  std::uint64_t seed = 0;

  void validate() const {
    if (J < 1) throw std::invalid_argument("PerturbationConfig: J must be >= 1");
    if (sigma_pos < 0.0 || sigma_rot < 0.0) {
      throw std::invalid_argument("PerturbationConfig: sigmas must be >= 0");
    }
  }
};

/// Occluders for one timestep: static environment plus the robot volume for
/// that step. Either pointer may be null (treated as empty).
struct OccluderSet {
  const Bvh* env = nullptr;
  const Bvh* robot = nullptr;

  bool blocks(const Segment& seg, double eps) const {
    if (env && env->segment_hits(seg, eps)) return true;
    if (robot && robot->segment_hits(seg, eps)) return true;
    return false;
  }
};

// One point is visible when the camera-to-point segment is unobstructed and
// the point projects inside the image with positive depth.
inline bool point_visibility(const Pose& cam, const CameraIntrinsics& intr, const Vec3& q,
                             const OccluderSet& occ, double eps = 1e-4) {
  const Projection pr = project(intr, cam, q);
  if (!in_fov(intr, pr)) return false;
  return !occ.blocks(Segment{cam.position, q}, eps);
}

struct VisibilityScore {
  double value = 0.0;
  bool degenerate = false;  // every point masked
  std::vector<std::vector<std::uint8_t>> bits;  // [T][N] visibility indicators
};

// Everything a reward evaluation needs besides the camera trajectory itself.
// `robots[t]` is the occluder volume while executing step t; the list may be
// empty when no robot is modeled.
struct RewardContext {
  const CameraIntrinsics* intr = nullptr;
  const Bvh* env = nullptr;
  std::vector<const Bvh*> robots;
  const QueryPointSet* qps = nullptr;
  std::vector<Vec3> ee_positions;  // [T]
  RewardWeights weights;
  PerturbationConfig perturb;
  double eps = 1e-4;

  OccluderSet occluders(int t) const {
    OccluderSet o;
    o.env = env;
    if (!robots.empty()) o.robot = robots.at(t);
    return o;
  }
};

// Mean visibility over valid (t, i) pairs; bits are zero for masked entries.
inline VisibilityScore r_vis(const std::vector<Pose>& traj, const RewardContext& ctx) {
  const QueryPointSet& qps = *ctx.qps;
  qps.validate();
  if (static_cast<int>(traj.size()) != qps.horizon()) {
    throw std::invalid_argument("r_vis: trajectory/query horizon mismatch");
  }
  VisibilityScore out;
  out.bits.resize(qps.horizon());
  int valid_count = 0;
  int visible = 0;
  for (int t = 0; t < qps.horizon(); ++t) {
    const OccluderSet occ = ctx.occluders(t);
    out.bits[t].assign(qps.points[t].size(), 0);
    for (std::size_t i = 0; i < qps.points[t].size(); ++i) {
      if (!qps.valid[t][i]) continue;
      ++valid_count;
      if (point_visibility(traj[t], *ctx.intr, qps.points[t][i], occ, ctx.eps)) {
        out.bits[t][i] = 1;
        ++visible;
      }
    }
  }
  if (valid_count == 0) {
    out.degenerate = true;
    return out;
  }
  out.value = static_cast<double>(visible) / valid_count;
  return out;
}

// Mean of exp(-distance) between camera and valid query points.
inline double r_close(const std::vector<Pose>& traj, const QueryPointSet& qps) {
  qps.validate();
  if (static_cast<int>(traj.size()) != qps.horizon()) {
    throw std::invalid_argument("r_close: trajectory/query horizon mismatch");
  }
  double sum = 0.0;
  int valid_count = 0;
  for (int t = 0; t < qps.horizon(); ++t) {
    for (std::size_t i = 0; i < qps.points[t].size(); ++i) {
      if (!qps.valid[t][i]) continue;
      ++valid_count;
      sum += std::exp(-(traj[t].position - qps.points[t][i]).norm());
    }
  }
  return valid_count == 0 ? 0.0 : sum / valid_count;
}

namespace detail {

inline std::vector<Pose> perturb_trajectory(const std::vector<Pose>& traj,
                                            const PerturbationConfig& cfg, int j) {
  if (cfg.sigma_pos == 0.0 && cfg.sigma_rot == 0.0) return traj;
  std::vector<Pose> out = traj;
  for (std::size_t t = 0; t < out.size(); ++t) {
    std::mt19937_64 rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(j),
                                               static_cast<std::uint64_t>(t)));
    std::normal_distribution<double> n;
    const Vec3 dp(n(rng), n(rng), n(rng));
    const Vec3 daa(n(rng), n(rng), n(rng));
    out[t].position += cfg.sigma_pos * dp;
    // Camera-frame wobble: compose the axis-angle noise on the right.
    out[t].rotation = out[t].rotation * Rotation::from_axis_angle(cfg.sigma_rot * daa);
  }
  return out;
}

}  // namespace detail

// Worst score discounted by the population variance of all scores.
inline double margin_combine(const std::vector<double>& scores, double lambda_var) {
  if (scores.empty()) throw std::invalid_argument("margin_combine: empty score set");
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  double worst = scores[0];
  for (double s : scores) worst = std::min(worst, s);
  return worst * (1.0 - lambda_var * var);
}

// Robustness margin: worst visibility over J pose-noise rollouts, discounted
// by the population variance of the per-rollout scores.
inline double r_marg(const std::vector<Pose>& traj, const RewardContext& ctx) {
  ctx.perturb.validate();
  std::vector<double> scores(ctx.perturb.J);
  for (int j = 0; j < ctx.perturb.J; ++j) {
    const std::vector<Pose> noisy = detail::perturb_trajectory(traj, ctx.perturb, j);
    scores[j] = r_vis(noisy, ctx).value;
  }
  return margin_combine(scores, ctx.weights.lambda_var);
}

// Proximity penalty against the end-effector path; strictly negative.
inline double r_safe(const std::vector<Pose>& traj, const std::vector<Vec3>& ee_positions,
                     double sigma_safe) {
  if (traj.size() != ee_positions.size()) {
    throw std::invalid_argument("r_safe: trajectory/end-effector length mismatch");
  }
  if (!(sigma_safe > 0.0)) throw std::invalid_argument("r_safe: sigma_safe must be > 0");
  double sum = 0.0;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    sum += std::exp(-(traj[t].position - ee_positions[t]).norm() / sigma_safe);
  }
  return -sum / static_cast<double>(traj.size());
}

struct RewardBreakdown {
  double r_vis = 0.0;
  double r_close = 0.0;
  double r_marg = 0.0;
  double r_safe = 0.0;
  double total = 0.0;
  bool degenerate = false;
  std::vector<std::vector<std::uint8_t>> vis_bits;  // [T][N]
};

inline RewardBreakdown composite_reward(const std::vector<Pose>& traj, const RewardContext& ctx) {
  RewardBreakdown b;
  const VisibilityScore vis = r_vis(traj, ctx);
  b.r_vis = vis.value;
  b.degenerate = vis.degenerate;
  b.vis_bits = vis.bits;
  b.r_close = r_close(traj, *ctx.qps);
  b.r_marg = r_marg(traj, ctx);
  b.r_safe = r_safe(traj, ctx.ee_positions, ctx.weights.sigma_safe);
  b.total = b.r_vis + ctx.weights.lambda_c * b.r_close + ctx.weights.lambda_m * b.r_marg +
            ctx.weights.lambda_s * b.r_safe;
  return b;
}

}  // namespace viewplan
