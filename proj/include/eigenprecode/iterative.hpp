#pragma once

// Multi-start fixed-point solver for the weighted sum of Jensen upper-bound rates
//   R_k^ub = log2(sigma2 + sum_i p_i^H R_k p_i) - log2(sigma2 + sum_{i != k} p_i^H R_k p_i)
// under sum_k ||p_k||^2 <= P. Used offline to label training data.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "eigenprecode/baselines.hpp"
#include "eigenprecode/channel.hpp"
#include "eigenprecode/error.hpp"
#include "eigenprecode/linalg.hpp"
#include "eigenprecode/precoder.hpp"
#include "eigenprecode/rng.hpp"

namespace eigenprecode::iterative {

struct IterativeOptions {
  int max_iters = 20;
  int n_starts = 10;
  std::vector<double> weights;  // empty = all ones
  double tol = 1e-7;
  std::uint64_t seed = 0;
  // Optional continuation of the best start until convergence (offline labeling).
  int refine_iters = 0;
  double refine_tol = 1e-9;  // step size, relative to sqrt(P)

  void validate(int users) const {
    if (max_iters < 1) throw Error(ErrorKind::InvalidConfig, "max_iters: must be >= 1");
    if (n_starts < 1) throw Error(ErrorKind::InvalidConfig, "n_starts: must be >= 1");
    if (!weights.empty() && static_cast<int>(weights.size()) != users)
      throw Error(ErrorKind::InvalidConfig, "weights: length must equal K");
    for (double w : weights)
      if (!(w >= 0.0)) throw Error(ErrorKind::InvalidConfig, "weights: must be >= 0");
    if (!(tol >= 0.0)) throw Error(ErrorKind::InvalidConfig, "tol: must be >= 0");
    if (refine_iters < 0) throw Error(ErrorKind::InvalidConfig, "refine_iters: must be >= 0");
    if (!(refine_tol >= 0.0)) throw Error(ErrorKind::InvalidConfig, "refine_tol: must be >= 0");
  }

  std::vector<double> resolved_weights(int users) const {
    return weights.empty() ? std::vector<double>(users, 1.0) : weights;
  }
};

inline std::vector<double> upper_bound_rates(const Precoder& pre, const CovarianceSet& covs,
                                             double sigma2) {
  const RMatrix g = gain_matrix(pre.directions, covs);
  std::vector<double> rates(pre.size());
  for (std::size_t k = 0; k < pre.size(); ++k) {
    double interference = sigma2;
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (i != k) interference += pre.powers[i] * g(k, i);
    const double total = interference + pre.powers[k] * g(k, k);
    rates[k] = std::log2(total) - std::log2(interference);
  }
  return rates;
}

inline double weighted_sum(const std::vector<double>& rates, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < rates.size(); ++k) s += (w.empty() ? 1.0 : w[k]) * rates[k];
  return s;
}

inline double objective(const Precoder& pre, const CovarianceSet& covs, double sigma2,
                        const std::vector<double>& weights) {
  return weighted_sum(upper_bound_rates(pre, covs, sigma2), weights);
}

/// One fixed-point update p_k <- (B + mu I)^{-1} A_k p_k, rescaled to the budget.
inline Precoder iterate_once(const Precoder& pre, const CovarianceSet& covs,
                             const ScenarioConfig& cfg, const std::vector<double>& weights) {
  const std::size_t users = pre.size();
  if (pre.total_power() <= 0.0)
    throw Error(ErrorKind::InvalidArgument, "iterate_once: zero precoder");
  const std::vector<double> w = weights.empty() ? std::vector<double>(users, 1.0) : weights;
  const RMatrix g = gain_matrix(pre.directions, covs);
  const Eigen::Index mt = covs[0].rows();

  std::vector<CMatrix> a(users);
  CMatrix b = CMatrix::Zero(mt, mt);
  for (std::size_t k = 0; k < users; ++k) {
    double interference = cfg.sigma2;
    for (std::size_t i = 0; i < users; ++i)
      if (i != k) interference += pre.powers[i] * g(k, i);
    const double total = interference + pre.powers[k] * g(k, k);
    a[k] = (w[k] / interference) * covs[k];
    b += (w[k] / interference - w[k] / total) * covs[k];
  }
  // Step parameter mu = sum_k p_k^H (A_k - B) p_k / sum_k ||p_k||^2. Dividing by
  // the total power makes fixed points stationary for any budget P.
  double mu = 0.0;
  std::vector<CVector> p(users);
  for (std::size_t k = 0; k < users; ++k) {
    p[k] = pre.vector(k);
    mu += p[k].dot((a[k] - b) * p[k]).real();
  }
  mu /= pre.total_power();

  CMatrix m = b + mu * CMatrix::Identity(mt, mt);
  m = 0.5 * (m + m.adjoint()).eval();
  Eigen::PartialPivLU<CMatrix> lu(m);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) throw Error(ErrorKind::SingularSystem, "iterate_once: B + mu I singular");

  std::vector<CVector> next(users);
  double total = 0.0;
  for (std::size_t k = 0; k < users; ++k) {
    next[k] = pre.powers[k] > 0.0 ? CVector(lu.solve(a[k] * p[k])) : CVector(CVector::Zero(mt));
    total += next[k].squaredNorm();
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorKind::SingularSystem, "iterate_once: update vanished");
  const double scale = std::sqrt(cfg.P / total);
  for (auto& v : next) v *= scale;
  Precoder out = Precoder::from_vectors(next);
  // keep the previous direction for users that carry no power
  for (std::size_t k = 0; k < users; ++k)
    if (out.powers[k] == 0.0) out.directions[k] = pre.directions[k];
  return out;
}

struct StartTrace {
  std::vector<double> objectives;  // objective before the first and after each update
  Precoder final;
};

inline StartTrace run_start(Precoder start, const CovarianceSet& covs, const ScenarioConfig& cfg,
                            const IterativeOptions& opts) {
  const std::vector<double> w = opts.resolved_weights(cfg.K);
  StartTrace trace;
  // the loop keeps the budget tight
  const double scale = cfg.P / start.total_power();
  for (double& p : start.powers) p *= scale;
  double obj = objective(start, covs, cfg.sigma2, w);
  trace.objectives.push_back(obj);
  for (int it = 0; it < opts.max_iters; ++it) {
    Precoder next = iterate_once(start, covs, cfg, w);
    const double next_obj = objective(next, covs, cfg.sigma2, w);
    trace.objectives.push_back(next_obj);
    start = std::move(next);
    const double change = std::abs(next_obj - obj) / std::max(std::abs(obj), 1e-300);
    obj = next_obj;
    if (change < opts.tol) break;
  }
  trace.final = std::move(start);
  return trace;
}

/// Continues the fixed point until the step ||p^{t+1} - p^t||_F / sqrt(P) drops
/// below `tol`. The objective is flat near a stationary point, so its change
/// is a poor stopping signal there.
inline Precoder refine(Precoder pre, const CovarianceSet& covs, const ScenarioConfig& cfg,
                       const std::vector<double>& weights, int max_iters, double tol) {
  for (int it = 0; it < max_iters; ++it) {
    Precoder next = iterate_once(pre, covs, cfg, weights);
    double step2 = 0.0;
    for (std::size_t k = 0; k < pre.size(); ++k) step2 += (next.vector(k) - pre.vector(k)).squaredNorm();
    pre = std::move(next);
    if (std::sqrt(step2 / cfg.P) < tol) break;
  }
  return pre;
}

struct SolveResult {
  Precoder best;
  int best_start = 0;
  std::vector<double> start_objectives;
  std::vector<StartTrace> traces;
};

/// Start points: RZF, SLNR, then random unit directions with equal power.
inline std::vector<Precoder> initial_points(const ChannelState& state, const CovarianceSet& covs,
                                            const ScenarioConfig& cfg,
                                            const IterativeOptions& opts) {
  std::vector<Precoder> starts;
  const int mt = cfg.antennas();
  bool has_channel = false;
  for (const auto& u : state.users) has_channel = has_channel || u.h_bar.norm() > 0.0;
  if (opts.n_starts >= 1) {
    if (has_channel)
      starts.push_back(baselines::rzf(state, cfg));
    else
      starts.push_back(baselines::slnr(covs, cfg));
  }
  if (opts.n_starts >= 2) starts.push_back(baselines::slnr(covs, cfg));
  Rng rng = make_rng(opts.seed, "iterative/start");
  while (static_cast<int>(starts.size()) < opts.n_starts) {
    Precoder p;
    for (int k = 0; k < cfg.K; ++k) {
      CVector d = complex_normal_vector(mt, rng);
      p.directions.push_back(d.normalized());
    }
    p.powers.assign(cfg.K, cfg.P / cfg.K);
    starts.push_back(std::move(p));
  }
  // A start whose every power vanished (e.g. all channels zero) cannot iterate.
  for (auto& s : starts)
    if (!(s.total_power() > 0.0)) s.powers.assign(cfg.K, cfg.P / cfg.K);
  return starts;
}

inline SolveResult solve_detailed(const ChannelState& state, const CovarianceSet& covs,
                                  const ScenarioConfig& cfg, const IterativeOptions& opts) {
  opts.validate(cfg.K);
  const std::vector<double> w = opts.resolved_weights(cfg.K);
  SolveResult out;
  const std::vector<Precoder> starts = initial_points(state, covs, cfg, opts);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < starts.size(); ++s) {
    StartTrace trace = run_start(starts[s], covs, cfg, opts);
    const double obj = trace.objectives.back();
    out.start_objectives.push_back(obj);
    if (obj > best) {
      best = obj;
      out.best_start = static_cast<int>(s);
      out.best = trace.final;
    }
    out.traces.push_back(std::move(trace));
  }
  if (opts.refine_iters > 0) {
    Precoder refined = refine(out.best, covs, cfg, w, opts.refine_iters, opts.refine_tol);
    if (objective(refined, covs, cfg.sigma2, w) >= best) out.best = std::move(refined);
  }
  out.best.gammas = sinr(out.best, covs, cfg.sigma2);
  return out;
}

inline Precoder solve(const ChannelState& state, const CovarianceSet& covs,
                      const ScenarioConfig& cfg, const IterativeOptions& opts) {
  return solve_detailed(state, covs, cfg, opts).best;
}

inline Precoder solve(const ChannelState& state, const ScenarioConfig& cfg,
                      const IterativeOptions& opts) {
  return solve(state, channel::covariance(state, cfg), cfg, opts);
}

}  // namespace eigenprecode::iterative
