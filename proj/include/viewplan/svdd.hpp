#pragma once

// Reward-guided denoising: at every reverse-diffusion step a batch of
// candidate next states is drawn from the analytic kernel, each candidate is
// scored by the reward of its posterior-mean decode, and one candidate is kept
// by softmax-weighted resampling at temperature alpha.  Small alpha chases the
// reward aggressively; large alpha stays close to the prior.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "viewplan/diffusion_core.hpp"
#include "viewplan/geom3d.hpp"
#include "viewplan/rng.hpp"

namespace viewplan {

using RewardFn = std::function<double(const VecX&)>;

enum class PlanMode { svdd, prior_only };

struct SvddConfig {
  double alpha = 0.1;  // softmax temperature on rewards
  int M = 16;          // candidates per denoising step
  PlanMode mode = PlanMode::svdd;
  int stride = 1;      // >1 skips steps via the deterministic-variance update
  double eta = 1.0;    // stochasticity of strided updates
  std::uint64_t seed = 0;
  bool record_candidates = false;  // keep per-step candidate matrices in the trace

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("SvddConfig: alpha must be > 0");
    if (M < 1) throw std::invalid_argument("SvddConfig: M must be >= 1");
    if (stride < 1) throw std::invalid_argument("SvddConfig: stride must be >= 1");
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("SvddConfig: eta must be in [0, 1]");
  }
};

struct StepTrace {
  int k = 0;       // step the proposals were drawn from
  int k_next = 0;  // step the proposals land on
  std::vector<double> values;   // reward of each candidate's decode (empty in prior_only)
  std::vector<double> weights;  // normalized selection weights (empty in prior_only)
  int chosen = 0;
  bool fallback = false;  // selection degraded to uniform because of non-finite values
  MatX candidates;        // M x d, only filled when record_candidates is set
};

struct RewMaxResult {
  VecX x0;
  std::vector<StepTrace> steps;
  long reward_evals = 0;
  int fallback_steps = 0;
};

// Reward of the best current guess of the clean sample.  At k = 0 the state
// is already clean, so the reward applies directly.
inline double soft_value_estimate(const AnalyticPrior& prior, const VecX& x, int k,
                                  const NoiseSchedule& sched, const RewardFn& reward) {
  if (k == 0) return reward(x);
  return reward(posterior_mean_x0(prior, x, k, sched));
}

struct ResampleOutcome {
  int chosen = 0;
  std::vector<double> weights;
  bool fallback = false;
};

// Softmax-weighted categorical pick over candidate values, numerically robust
// via the log-sum-exp shift.  Any NaN or +inf value, or an all -inf batch,
// degrades to a flagged uniform pick so a broken reward cannot crash a run.
inline ResampleOutcome categorical_resample(const std::vector<double>& values, double alpha,
                                            std::mt19937_64& rng) {
  if (values.empty()) throw std::invalid_argument("categorical_resample: empty values");
  if (!(alpha > 0.0)) throw std::invalid_argument("categorical_resample: alpha must be > 0");
  const int m = static_cast<int>(values.size());
  ResampleOutcome out;
  out.weights.assign(m, 1.0 / m);

  double vmax = -std::numeric_limits<double>::infinity();
  for (double v : values) vmax = std::max(vmax, v);
  bool ok = std::isfinite(vmax);
  double total = 0.0;
  std::vector<double> raw(m, 0.0);
  if (ok) {
    for (int i = 0; i < m; ++i) {
      raw[i] = std::exp((values[i] - vmax) / alpha);
      total += raw[i];
    }
    ok = std::isfinite(total) && total > 0.0;
  }
  if (!ok) {
    out.fallback = true;
    std::uniform_int_distribution<int> pick(0, m - 1);
    out.chosen = pick(rng);
    return out;
  }

  for (int i = 0; i < m; ++i) out.weights[i] = raw[i] / total;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  out.chosen = m - 1;  // guard against round-off leaving u past the last edge
  for (int i = 0; i < m; ++i) {
    acc += out.weights[i];
    if (u < acc) {
      out.chosen = i;
      break;
    }
  }
  return out;
}

namespace detail {

// Stream tags keep proposal draws, selection draws, and the chain start on
// independent substreams of one run seed, so the m-th proposal at step k is
// the same bits no matter what happened elsewhere in the run.  In particular
// a single-candidate guided run walks exactly the prior-only chain.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kProposalStream = 2;
inline constexpr std::uint64_t kSelectStream = 3;

}  // namespace detail

// Full reverse-diffusion run with per-step resampling.  The chain starts from
// a standard normal, which matches the terminal noise marginal exactly when
// the prior has been standardized to zero mean and unit variance per
// dimension, and to within alpha_bar[K] otherwise.
inline RewMaxResult rew_max_diff(const AnalyticPrior& prior, const NoiseSchedule& sched,
                                 const RewardFn& reward, const SvddConfig& cfg) {
  cfg.validate();
  const int d = prior_dim(prior);
  RewMaxResult result;

  VecX x(d);
  {
    std::mt19937_64 rng = make_rng(derive_seed(cfg.seed, detail::kInitStream));
    std::normal_distribution<double> n;
    for (int i = 0; i < d; ++i) x[i] = n(rng);
  }

  const int proposals = cfg.mode == PlanMode::prior_only ? 1 : cfg.M;
  int k = sched.K;
  while (k > 0) {
    const int k_next = std::max(0, k - cfg.stride);
    StepTrace trace;
    trace.k = k;
    trace.k_next = k_next;
    if (cfg.record_candidates) trace.candidates.resize(proposals, d);

    std::vector<VecX> cands(proposals);
    for (int m = 0; m < proposals; ++m) {
      std::mt19937_64 rng = make_rng(derive_seed(cfg.seed, detail::kProposalStream,
                                                 static_cast<std::uint64_t>(k),
                                                 static_cast<std::uint64_t>(m)));
      cands[m] = cfg.stride == 1 ? reverse_kernel_sample(prior, x, k, sched, rng)
                                 : ddim_step(prior, x, k, k_next, sched, cfg.eta, rng);
      if (cfg.record_candidates) trace.candidates.row(m) = cands[m].transpose();
    }

    if (cfg.mode == PlanMode::prior_only) {
      trace.chosen = 0;
      x = cands[0];
    } else {
      trace.values.resize(proposals);
      for (int m = 0; m < proposals; ++m) {
        trace.values[m] = soft_value_estimate(prior, cands[m], k_next, sched, reward);
      }
      result.reward_evals += proposals;
      std::mt19937_64 sel = make_rng(derive_seed(cfg.seed, detail::kSelectStream,
                                                 static_cast<std::uint64_t>(k)));
      ResampleOutcome pick = categorical_resample(trace.values, cfg.alpha, sel);
      trace.weights = std::move(pick.weights);
      trace.chosen = pick.chosen;
      trace.fallback = pick.fallback;
      if (pick.fallback) ++result.fallback_steps;
      x = cands[pick.chosen];
    }

    result.steps.push_back(std::move(trace));
    k = k_next;
  }

  result.x0 = std::move(x);
  return result;
}

// --- trajectory packing -----------------------------------------------------
//
// A length-T pose trajectory is a 9T vector: per step, 3 position entries
// followed by the 6-entry rotation encoding (first two rotation-matrix
// columns).  The 6-entry form survives additive noise, which is what lets
// diffusion operate on poses at all.

struct DecodedTrajectory {
  std::vector<Pose> poses;
  int degenerate_rotations = 0;  // steps whose rotation block failed to orthonormalize
};

inline VecX encode_trajectory(const std::vector<Pose>& poses) {
  VecX x(9 * static_cast<int>(poses.size()));
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto base = static_cast<Eigen::Index>(9 * i);
    x.segment<3>(base) = poses[i].position;
    x.segment<6>(base + 3) = poses[i].rotation.to_rot6d();
  }
  return x;
}

// Degenerate rotation blocks fall back to the previous step's rotation (or
// identity at step 0) instead of aborting: a planner must always produce a
// usable pose sequence.
inline DecodedTrajectory decode_trajectory(const VecX& x) {
  if (x.size() % 9 != 0) throw std::invalid_argument("decode_trajectory: size must be a multiple of 9");
  DecodedTrajectory out;
  const int T = static_cast<int>(x.size() / 9);
  out.poses.reserve(T);
  for (int i = 0; i < T; ++i) {
    const auto base = static_cast<Eigen::Index>(9 * i);
    Pose p;
    p.position = x.segment<3>(base);
    Rotation rot;
    if (try_rot6d_to_rotation(x.segment<6>(base + 3), &rot)) {
      p.rotation = rot;
    } else {
      p.rotation = i > 0 ? out.poses.back().rotation : Rotation{};
      ++out.degenerate_rotations;
    }
    out.poses.push_back(p);
  }
  return out;
}

}  // namespace viewplan
