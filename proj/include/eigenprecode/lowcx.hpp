#pragma once

// Low-complexity weighted framework. Multipliers and powers are the
// beta^2-weighted blend of an instantaneous part taken from RZF and a
// statistical part predicted by the SLMNN from beam-domain statistics; the
// directions come from matrix-free generalized eigen-solves.

#include <cmath>
#include <string>
#include <vector>

#include "eigenprecode/baselines.hpp"
#include "eigenprecode/channel.hpp"
#include "eigenprecode/error.hpp"
#include "eigenprecode/features.hpp"
#include "eigenprecode/linalg.hpp"
#include "eigenprecode/neural.hpp"
#include "eigenprecode/precoder.hpp"
#include "eigenprecode/structure.hpp"

namespace eigenprecode::lowcx {

struct Part {
  std::vector<double> mu;
  std::vector<double> rho;
};

struct WeightedParts {
  std::vector<double> mu_h, rho_h;
  std::vector<double> mu_w, rho_w;
};

/// Instantaneous part from RZF: rho_h = xi^2 ||W h_bar_k||^2 and
/// mu_h = sigma2 (T_h^{-1})^H 1 with T_h built on h_bar_k h_bar_k^H and the RZF SINRs.
inline Part instantaneous_parts(const ChannelState& state, const ScenarioConfig& cfg) {
  const baselines::RzfParts rzf = baselines::rzf_parts(state, cfg);
  std::vector<CVector> vectors;
  for (const auto& c : rzf.columns) vectors.push_back(std::sqrt(rzf.xi2) * c);
  Precoder pre = Precoder::from_vectors(vectors);
  CovarianceSet rank_one;
  for (const auto& u : state.users) rank_one.push_back(u.h_bar * u.h_bar.adjoint());
  // gamma_k^rzf = xi^2 |h_k^H W h_k|^2 / (sigma2 + xi^2 sum_{i != k} |h_k^H W h_i|^2)
  pre.gammas = sinr(pre, rank_one, cfg.sigma2);
  Part out;
  out.rho = pre.powers;
  try {
    out.mu = structure::mu_from_precoder(pre, rank_one, cfg.sigma2).mu;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SingularT) throw Error(ErrorKind::SingularT, std::string("T_h: ") + e.what());
    throw;
  }
  return out;
}

/// Statistical part from given multipliers: directions and T with every beta set to 0.
inline Part statistical_parts_from_mu(const std::vector<double>& mu_w, const ChannelState& state,
                                      const ScenarioConfig& cfg, const CMatrix& v, double eps,
                                      linalg::EigenStrategy strategy = linalg::EigenStrategy::Auto) {
  const CovarianceSet covs = channel::covariance(channel::with_beta(state, 0.0), v);
  Part out;
  out.mu = mu_w;
  try {
    out.rho = structure::recover_precoder(Multipliers{mu_w}, covs, cfg, eps, strategy).powers;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SingularT) throw Error(ErrorKind::SingularT, std::string("T_w: ") + e.what());
    throw;
  }
  return out;
}

struct Slmnn {
  const neural::NetSpec* spec = nullptr;
  const neural::NetParams* params = nullptr;
};

inline std::vector<double> predict_mu_w(const ChannelState& state, const ScenarioConfig& cfg,
                                        const Slmnn& net) {
  if (!net.spec || !net.params) throw Error(ErrorKind::MissingWeights, "lowcx needs SLMNN weights");
  if (net.spec->k_out != cfg.K || net.spec->input_h != cfg.beams())
    throw Error(ErrorKind::ShapeMismatch, "SLMNN spec does not match the scenario config");
  const RVector mu = neural::forward(*net.spec, *net.params, features::slmnn_input(state),
                                     cfg.snr_db(), cfg.P, false);
  return {mu.data(), mu.data() + mu.size()};
}

inline Part statistical_parts(const ChannelState& state, const ScenarioConfig& cfg, const Slmnn& net,
                              double eps) {
  return statistical_parts_from_mu(predict_mu_w(state, cfg, net), state, cfg,
                                   channel::sampling_matrix(cfg), eps);
}

/// mu_k = beta_k^2 [mu_h]_k + (1 - beta_k^2) [mu_w]_k, and the same for rho.
inline std::pair<Multipliers, std::vector<double>> combine(const WeightedParts& parts,
                                                           const std::vector<double>& betas) {
  const std::size_t k = betas.size();
  if (parts.mu_h.size() != k || parts.rho_h.size() != k || parts.mu_w.size() != k ||
      parts.rho_w.size() != k)
    throw Error(ErrorKind::DimensionMismatch, "combine: part lengths differ from |beta|");
  Multipliers mu{std::vector<double>(k)};
  std::vector<double> rho(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double a = betas[i] * betas[i];
    const double b = 1.0 - a;
    mu.mu[i] = a * parts.mu_h[i] + b * parts.mu_w[i];
    rho[i] = a * parts.rho_h[i] + b * parts.rho_w[i];
  }
  return {mu, rho};
}

/// Directions for the combined multipliers; powers are the combined rho
/// (no T solve). Users with mu_k <= eps are silent.
inline Precoder assemble(const Multipliers& mu, const std::vector<double>& rho,
                         const CovarianceSet& covs, const ScenarioConfig& cfg, double eps,
                         linalg::EigenStrategy strategy) {
  const int antennas = covs.empty() ? 0 : static_cast<int>(covs[0].rows());
  Precoder out = Precoder::zeros(static_cast<int>(covs.size()), antennas);
  out.gammas.assign(covs.size(), 0.0);
  Multipliers pruned = mu;
  for (double& m : pruned.mu)
    if (m <= eps) m = 0.0;
  for (std::size_t k = 0; k < covs.size(); ++k) {
    if (pruned.mu[k] == 0.0) continue;
    auto [s, n] = structure::assemble_sn(k, pruned, covs, cfg.sigma2);
    const linalg::EigenPair e = linalg::max_generalized_eigenpair(s, n, linalg::kEigenTol, strategy);
    out.directions[k] = e.vector;
    out.gammas[k] = e.value;
    out.powers[k] = rho[k];
  }
  return out;
}

struct RunDetail {
  WeightedParts parts;
  Multipliers mu;
  std::vector<double> rho;
  Precoder precoder;
};

inline RunDetail run_detailed(const ChannelState& state, const ScenarioConfig& cfg, const Slmnn& net,
                              double eps,
                              linalg::EigenStrategy strategy = linalg::EigenStrategy::MatrixFree) {
  channel::validate_state(state, cfg);
  const CMatrix v = channel::sampling_matrix(cfg);
  const std::vector<double> betas = state.betas();
  RunDetail d;
  // a part whose weight is zero for every user is skipped
  bool any_beta = false;
  for (double b : betas) any_beta = any_beta || b > 0.0;
  if (any_beta) {
    const Part h = instantaneous_parts(state, cfg);
    d.parts.mu_h = h.mu;
    d.parts.rho_h = h.rho;
  } else {
    d.parts.mu_h.assign(cfg.K, 0.0);
    d.parts.rho_h.assign(cfg.K, 0.0);
  }
  bool any_statistical = false;
  for (double b : betas) any_statistical = any_statistical || b < 1.0;
  if (any_statistical) {
    const Part w = statistical_parts_from_mu(predict_mu_w(state, cfg, net), state, cfg, v, eps, strategy);
    d.parts.mu_w = w.mu;
    d.parts.rho_w = w.rho;
  } else {
    d.parts.mu_w.assign(cfg.K, 0.0);
    d.parts.rho_w.assign(cfg.K, 0.0);
  }
  std::tie(d.mu, d.rho) = combine(d.parts, betas);
  d.precoder = assemble(d.mu, d.rho, channel::covariance(state, v), cfg, eps, strategy);
  return d;
}

inline Precoder run(const ChannelState& state, const ScenarioConfig& cfg, const Slmnn& net,
                    double eps,
                    linalg::EigenStrategy strategy = linalg::EigenStrategy::MatrixFree) {
  return run_detailed(state, cfg, net, eps, strategy).precoder;
}

}  // namespace eigenprecode::lowcx
