#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "viewplan/rng.hpp"

namespace viewplan {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Variance schedule for the forward noising chain.
/// beta[k], alpha[k] = 1 - beta[k], alpha_bar[k] = prod_{j<=k} alpha[j],
/// all 1-indexed with alpha_bar[0] = 1.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta;       // size K+1, beta[0] unused
  std::vector<double> alpha;      // size K+1
  std::vector<double> alpha_bar;  // size K+1, alpha_bar[0] = 1

  static NoiseSchedule from_betas(const std::vector<double>& betas) {
    NoiseSchedule s;
    s.K = static_cast<int>(betas.size());
    if (s.K < 1) throw std::invalid_argument("NoiseSchedule: need at least one step");
    s.beta.resize(s.K + 1);
    s.alpha.resize(s.K + 1);
    s.alpha_bar.resize(s.K + 1);
    s.beta[0] = 0.0;
    s.alpha[0] = 1.0;
    s.alpha_bar[0] = 1.0;
    for (int k = 1; k <= s.K; ++k) {
      const double b = betas[k - 1];
      if (!(b > 0.0) || !(b < 1.0)) {
        throw std::invalid_argument("NoiseSchedule: betas must lie in (0, 1)");
      }
      s.beta[k] = b;
      s.alpha[k] = 1.0 - b;
      s.alpha_bar[k] = s.alpha_bar[k - 1] * s.alpha[k];
    }
    return s;
  }

  void check_step(int k) const {
    if (k < 1 || k > K) throw std::out_of_range("NoiseSchedule: step index out of range");
  }
};

inline NoiseSchedule linear_schedule(int K, double beta_start, double beta_end) {
  if (K < 1) throw std::invalid_argument("linear_schedule: K must be >= 1");
  std::vector<double> betas(K);
  for (int k = 0; k < K; ++k) {
    const double t = K == 1 ? 1.0 : static_cast<double>(k) / (K - 1);
    betas[k] = beta_start + (beta_end - beta_start) * t;
  }
  if (K == 1) betas[0] = beta_end;
  return NoiseSchedule::from_betas(betas);
}

// Linear ramp with the customary fixed endpoints (tuned for K around 1000).
inline NoiseSchedule default_schedule(int K) { return linear_schedule(K, 1e-4, 2e-2); }

// Endpoint scaling by 1000/K preserves the total noise budget at any K, so
// the terminal marginal stays indistinguishable from N(0, I). Prefer this
// for short chains; at K = 1000 it coincides with default_schedule.
inline NoiseSchedule scaled_linear_schedule(int K) {
  const double s = 1000.0 / K;
  return linear_schedule(K, std::min(1e-4 * s, 0.999), std::min(2e-2 * s, 0.999));
}

/// Gaussian prior with either a diagonal or a full covariance. The full case
/// is stored by its eigendecomposition so every chain operation is exact.
struct GaussianPrior {
  VecX mean;
  VecX eigenvalues;  // covariance spectrum (diagonal entries when axis-aligned)
  MatX basis;        // orthonormal eigenvectors; empty when axis-aligned

  static GaussianPrior diagonal(VecX mean, VecX variances) {
    for (int i = 0; i < variances.size(); ++i) {
      if (!(variances[i] >= 0.0)) {
        throw std::invalid_argument("GaussianPrior: variances must be >= 0");
      }
    }
    GaussianPrior g;
    g.mean = std::move(mean);
    g.eigenvalues = std::move(variances);
    if (g.mean.size() != g.eigenvalues.size()) {
      throw std::invalid_argument("GaussianPrior: mean/variance size mismatch");
    }
    return g;
  }

  static GaussianPrior full(VecX mean, const MatX& cov) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
      throw std::invalid_argument("GaussianPrior: covariance shape mismatch");
    }
    Eigen::SelfAdjointEigenSolver<MatX> es(cov);
    if (es.info() != Eigen::Success) {
      throw std::invalid_argument("GaussianPrior: eigendecomposition failed");
    }
    if (es.eigenvalues().minCoeff() < -1e-10) {
      throw std::invalid_argument("GaussianPrior: covariance must be positive semidefinite");
    }
    GaussianPrior g;
    g.mean = std::move(mean);
    g.eigenvalues = es.eigenvalues().cwiseMax(0.0);
    g.basis = es.eigenvectors();
    return g;
  }

  static GaussianPrior point_mass(VecX mean, double variance = 1e-12) {
    const int d = static_cast<int>(mean.size());
    return diagonal(std::move(mean), VecX::Constant(d, variance));
  }

  int dim() const { return static_cast<int>(mean.size()); }
  bool axis_aligned() const { return basis.size() == 0; }

  VecX to_basis(const VecX& x) const { return axis_aligned() ? x : VecX(basis.transpose() * x); }
  VecX from_basis(const VecX& y) const { return axis_aligned() ? y : VecX(basis * y); }

  // Marginal moments (diagonal of the covariance).
  VecX marginal_variance() const {
    if (axis_aligned()) return eigenvalues;
    return (basis * eigenvalues.asDiagonal() * basis.transpose()).diagonal();
  }
};

/// Mixture of Gaussian priors with normalized component weights.
struct GmmPrior {
  std::vector<double> weights;
  std::vector<GaussianPrior> components;

  void validate() const {
    if (weights.size() != components.size() || components.empty()) {
      throw std::invalid_argument("GmmPrior: weights/components mismatch");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("GmmPrior: weights must be >= 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("GmmPrior: weights must sum to 1");
    }
    for (const auto& c : components) {
      if (c.dim() != components[0].dim()) {
        throw std::invalid_argument("GmmPrior: component dimension mismatch");
      }
    }
  }

  int dim() const { return components.empty() ? 0 : components[0].dim(); }
};

using AnalyticPrior = std::variant<GaussianPrior, GmmPrior>;

inline int prior_dim(const AnalyticPrior& prior) {
  return std::visit([](const auto& p) { return p.dim(); }, prior);
}

// ---- direct prior sampling ----

inline VecX sample_prior(const GaussianPrior& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  VecX y(g.dim());
  for (int i = 0; i < g.dim(); ++i) y[i] = std::sqrt(g.eigenvalues[i]) * n(rng);
  return g.mean + g.from_basis(y);
}

inline VecX sample_prior(const GmmPrior& m, std::mt19937_64& rng) {
  m.validate();
  std::discrete_distribution<int> pick(m.weights.begin(), m.weights.end());
  return sample_prior(m.components[pick(rng)], rng);
}

inline VecX sample_prior(const AnalyticPrior& prior, std::mt19937_64& rng) {
  return std::visit([&](const auto& p) { return sample_prior(p, rng); }, prior);
}

// ---- forward process ----

// x_k = sqrt(alpha_bar_k) x0 + sqrt(1 - alpha_bar_k) eps.
inline VecX forward_noise(const VecX& x0, int k, const NoiseSchedule& sched,
                          std::mt19937_64& rng) {
  sched.check_step(k);
  const double a = std::sqrt(sched.alpha_bar[k]);
  const double s = std::sqrt(1.0 - sched.alpha_bar[k]);
  std::normal_distribution<double> n;
  VecX out(x0.size());
  for (int i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * n(rng);
  return out;
}

// ---- exact reverse kernel ----
//
// With prior x0 ~ N(mu, Sigma) the pair (x_{k-1}, x_k) is jointly Gaussian:
//   S_j = abar_j Sigma + (1 - abar_j) I,  Cov(x_{k-1}, x_k) = sqrt(alpha_k) S_{k-1}
// so x_{k-1} | x_k is Gaussian with
//   mean = sqrt(abar_{k-1}) mu + sqrt(alpha_k) S_{k-1} S_k^{-1} (x_k - sqrt(abar_k) mu)
//   cov  = beta_k S_{k-1} S_k^{-1}
// All matrices share the prior's eigenbasis, so everything is per-eigenvalue.

namespace detail {

struct GaussCond {
  VecX mean;
  VecX stddev_basis;  // per-eigenvalue standard deviations
};

inline GaussCond reverse_moments(const GaussianPrior& g, const VecX& x_k, int k,
                                 const NoiseSchedule& sched) {
  const double abar_k = sched.alpha_bar[k];
  const double abar_p = sched.alpha_bar[k - 1];
  const double alpha_k = sched.alpha[k];
  const double beta_k = sched.beta[k];
  const VecX resid = g.to_basis(x_k - std::sqrt(abar_k) * g.mean);
  VecX mean_basis(g.dim());
  VecX std_basis(g.dim());
  for (int i = 0; i < g.dim(); ++i) {
    const double lam = g.eigenvalues[i];
    const double s_prev = abar_p * lam + (1.0 - abar_p);
    const double s_cur = abar_k * lam + (1.0 - abar_k);
    mean_basis[i] = std::sqrt(alpha_k) * s_prev / s_cur * resid[i];
    std_basis[i] = std::sqrt(beta_k * s_prev / s_cur);
  }
  GaussCond out;
  out.mean = std::sqrt(abar_p) * g.mean + g.from_basis(mean_basis);
  out.stddev_basis = std::move(std_basis);
  return out;
}

// log N(x; mean, S_k) for the noised marginal of one component.
inline double noised_log_density(const GaussianPrior& g, const VecX& x_k, int k,
                                 const NoiseSchedule& sched) {
  const double abar = sched.alpha_bar[k];
  const VecX resid = g.to_basis(x_k - std::sqrt(abar) * g.mean);
  double logdet = 0.0, quad = 0.0;
  for (int i = 0; i < g.dim(); ++i) {
    const double s = abar * g.eigenvalues[i] + (1.0 - abar);
    logdet += std::log(s);
    quad += resid[i] * resid[i] / s;
  }
  return -0.5 * (logdet + quad + g.dim() * std::log(2.0 * 3.14159265358979323846));
}

inline std::vector<double> responsibilities(const GmmPrior& m, const VecX& x_k, int k,
                                            const NoiseSchedule& sched) {
  std::vector<double> logw(m.components.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < m.components.size(); ++c) {
    logw[c] = std::log(std::max(m.weights[c], 1e-300)) +
              noised_log_density(m.components[c], x_k, k, sched);
    best = std::max(best, logw[c]);
  }
  double sum = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - best);
    sum += lw;
  }
  for (double& w : logw) w /= sum;
  return logw;
}

}  // namespace detail

inline VecX reverse_kernel_sample(const GaussianPrior& g, const VecX& x_k, int k,
                                  const NoiseSchedule& sched, std::mt19937_64& rng) {
  sched.check_step(k);
  const detail::GaussCond cond = detail::reverse_moments(g, x_k, k, sched);
  std::normal_distribution<double> n;
  VecX y(g.dim());
  for (int i = 0; i < g.dim(); ++i) y[i] = cond.stddev_basis[i] * n(rng);
  return cond.mean + g.from_basis(y);
}

inline VecX reverse_kernel_sample(const GmmPrior& m, const VecX& x_k, int k,
                                  const NoiseSchedule& sched, std::mt19937_64& rng) {
  sched.check_step(k);
  m.validate();
  const std::vector<double> resp = detail::responsibilities(m, x_k, k, sched);
  std::discrete_distribution<int> pick(resp.begin(), resp.end());
  return reverse_kernel_sample(m.components[pick(rng)], x_k, k, sched, rng);
}

inline VecX reverse_kernel_sample(const AnalyticPrior& prior, const VecX& x_k, int k,
                                  const NoiseSchedule& sched, std::mt19937_64& rng) {
  return std::visit([&](const auto& p) { return reverse_kernel_sample(p, x_k, k, sched, rng); },
                    prior);
}

// ---- posterior over the clean sample ----
//
// E[x0 | x_k] = mu + sqrt(abar_k) Sigma S_k^{-1} (x_k - sqrt(abar_k) mu),
// Var[x0 | x_k] = Sigma (1 - abar_k) S_k^{-1} (shared eigenbasis again).

inline VecX posterior_mean_x0(const GaussianPrior& g, const VecX& x_k, int k,
                              const NoiseSchedule& sched) {
  sched.check_step(k);
  const double abar = sched.alpha_bar[k];
  const VecX resid = g.to_basis(x_k - std::sqrt(abar) * g.mean);
  VecX y(g.dim());
  for (int i = 0; i < g.dim(); ++i) {
    const double lam = g.eigenvalues[i];
    y[i] = std::sqrt(abar) * lam / (abar * lam + (1.0 - abar)) * resid[i];
  }
  return g.mean + g.from_basis(y);
}

inline VecX posterior_mean_x0(const GmmPrior& m, const VecX& x_k, int k,
                              const NoiseSchedule& sched) {
  sched.check_step(k);
  m.validate();
  const std::vector<double> resp = detail::responsibilities(m, x_k, k, sched);
  VecX out = VecX::Zero(m.dim());
  for (std::size_t c = 0; c < m.components.size(); ++c) {
    out += resp[c] * posterior_mean_x0(m.components[c], x_k, k, sched);
  }
  return out;
}

inline VecX posterior_mean_x0(const AnalyticPrior& prior, const VecX& x_k, int k,
                              const NoiseSchedule& sched) {
  return std::visit([&](const auto& p) { return posterior_mean_x0(p, x_k, k, sched); }, prior);
}

// Full posterior covariance of x0 given x_k (Gaussian prior only; for a
// mixture it depends on the responsibilities and is not provided).
inline MatX posterior_cov_x0(const GaussianPrior& g, int k, const NoiseSchedule& sched) {
  sched.check_step(k);
  const double abar = sched.alpha_bar[k];
  VecX v(g.dim());
  for (int i = 0; i < g.dim(); ++i) {
    const double lam = g.eigenvalues[i];
    v[i] = lam * (1.0 - abar) / (abar * lam + (1.0 - abar));
  }
  if (g.axis_aligned()) return v.asDiagonal();
  return g.basis * v.asDiagonal() * g.basis.transpose();
}

// ---- strided deterministic update ----
//
// Standard stride formula with the analytic posterior mean as the x0
// predictor: eta = 0 is deterministic; eta = 1 at unit stride reproduces the
// reverse kernel moments up to the x0-posterior variance term.
inline VecX ddim_step(const AnalyticPrior& prior, const VecX& x_k, int k, int k_next,
                      const NoiseSchedule& sched, double eta, std::mt19937_64& rng) {
  sched.check_step(k);
  if (k_next < 0 || k_next >= k) {
    throw std::invalid_argument("ddim_step: k_next must lie in [0, k)");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("ddim_step: eta must lie in [0, 1]");
  }
  const double abar_k = sched.alpha_bar[k];
  const double abar_n = sched.alpha_bar[k_next];
  const VecX x0_hat = posterior_mean_x0(prior, x_k, k, sched);
  const VecX eps_hat = (x_k - std::sqrt(abar_k) * x0_hat) / std::sqrt(1.0 - abar_k);
  const double sigma = eta * std::sqrt((1.0 - abar_n) / (1.0 - abar_k)) *
                       std::sqrt(1.0 - abar_k / abar_n);
  const double dir = std::sqrt(std::max(0.0, 1.0 - abar_n - sigma * sigma));
  VecX out = std::sqrt(abar_n) * x0_hat + dir * eps_hat;
  if (sigma > 0.0) {
    std::normal_distribution<double> n;
    for (int i = 0; i < out.size(); ++i) out[i] += sigma * n(rng);
  }
  return out;
}

// ---- demo fitting ----

// Diagonal Gaussian with the sample mean and population variance, floored.
inline GaussianPrior fit_demo_prior(const std::vector<VecX>& demos, double var_floor = 1e-6) {
  if (demos.size() < 2) {
    throw std::invalid_argument("fit_demo_prior: need at least 2 demos");
  }
  const int d = static_cast<int>(demos[0].size());
  for (const auto& v : demos) {
    if (v.size() != d) throw std::invalid_argument("fit_demo_prior: demo dimension mismatch");
    if (!v.allFinite()) throw std::invalid_argument("fit_demo_prior: demo contains non-finite values");
  }
  VecX mean = VecX::Zero(d);
  for (const auto& v : demos) mean += v;
  mean /= static_cast<double>(demos.size());
  VecX var = VecX::Zero(d);
  for (const auto& v : demos) var += (v - mean).cwiseAbs2();
  var /= static_cast<double>(demos.size());
  var = var.cwiseMax(var_floor);
  return GaussianPrior::diagonal(std::move(mean), std::move(var));
}

// One JSON array of numbers per line.
inline std::vector<VecX> load_demos_jsonl(std::istream& in, const std::string& name) {
  std::vector<VecX> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> vals;
    std::istringstream ls(line);
    char c = 0;
    ls >> c;
    if (c != '[') {
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected JSON array");
    }
    while (true) {
      double v = 0.0;
      if (!(ls >> v)) {
        throw std::runtime_error(name + ":" + std::to_string(lineno) + ": malformed number");
      }
      vals.push_back(v);
      ls >> c;
      if (c == ']') break;
      if (c != ',') {
        throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected ',' or ']'");
      }
    }
    VecX v(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
    out.push_back(std::move(v));
  }
  return out;
}

inline std::vector<VecX> load_demos_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_demos_jsonl: cannot open " + path);
  return load_demos_jsonl(in, path);
}

// ---- per-dimension standardization ----

struct Standardizer {
  VecX shift;
  VecX scale;

  VecX standardize(const VecX& x) const { return (x - shift).cwiseQuotient(scale); }
  VecX destandardize(const VecX& z) const { return shift + z.cwiseProduct(scale); }

  static Standardizer identity(int d) {
    return Standardizer{VecX::Zero(d), VecX::Ones(d)};
  }
};

// Standardizer matching the prior's marginal moments, and the prior expressed
// in standardized coordinates. Keeps the terminal N(0, I) assumption honest.
inline Standardizer standardizer_from_prior(const AnalyticPrior& prior) {
  Standardizer s;
  if (const auto* g = std::get_if<GaussianPrior>(&prior)) {
    s.shift = g->mean;
    s.scale = g->marginal_variance().cwiseMax(1e-12).cwiseSqrt();
  } else {
    const auto& m = std::get<GmmPrior>(prior);
    m.validate();
    VecX mean = VecX::Zero(m.dim());
    for (std::size_t c = 0; c < m.components.size(); ++c) {
      mean += m.weights[c] * m.components[c].mean;
    }
    VecX second = VecX::Zero(m.dim());
    for (std::size_t c = 0; c < m.components.size(); ++c) {
      second += m.weights[c] * (m.components[c].marginal_variance() +
                                m.components[c].mean.cwiseAbs2());
    }
    s.shift = mean;
    s.scale = (second - mean.cwiseAbs2()).cwiseMax(1e-12).cwiseSqrt();
  }
  return s;
}

inline GaussianPrior standardized(const GaussianPrior& g, const Standardizer& s) {
  if (g.axis_aligned()) {
    return GaussianPrior::diagonal((g.mean - s.shift).cwiseQuotient(s.scale),
                                   g.eigenvalues.cwiseQuotient(s.scale.cwiseAbs2()));
  }
  const MatX cov = g.basis * g.eigenvalues.asDiagonal() * g.basis.transpose();
  const MatX scaled = s.scale.cwiseInverse().asDiagonal() * cov *
                      s.scale.cwiseInverse().asDiagonal();
  return GaussianPrior::full((g.mean - s.shift).cwiseQuotient(s.scale), scaled);
}

inline AnalyticPrior standardized(const AnalyticPrior& prior, const Standardizer& s) {
  if (const auto* g = std::get_if<GaussianPrior>(&prior)) return standardized(*g, s);
  const auto& m = std::get<GmmPrior>(prior);
  GmmPrior out;
  out.weights = m.weights;
  for (const auto& c : m.components) out.components.push_back(standardized(c, s));
  return out;
}

}  // namespace viewplan
