#pragma once

// Reference precoders: regularized zero-forcing, SLNR and statistical beam
// selection on a critically sampled DFT grid.

#include <cmath>
#include <vector>

#include "eigenprecode/channel.hpp"
#include "eigenprecode/error.hpp"
#include "eigenprecode/linalg.hpp"
#include "eigenprecode/precoder.hpp"
#include "eigenprecode/structure.hpp"

namespace eigenprecode::baselines {

/// Stacked estimates, row k = h_bar_k^H.
inline CMatrix stacked_channels(const ChannelState& state) {
  const Eigen::Index users = static_cast<Eigen::Index>(state.users.size());
  const Eigen::Index mt = state.users.empty() ? 0 : state.users[0].h_bar.size();
  CMatrix h(users, mt);
  for (Eigen::Index k = 0; k < users; ++k) h.row(k) = state.users[k].h_bar.adjoint();
  return h;
}

struct RzfParts {
  CMatrix w;                     // (K sigma2 I + H^H H)^{-1}
  std::vector<CVector> columns;  // W h_bar_k
  double xi2 = 0.0;              // normalization so the total power is P
};

inline RzfParts rzf_parts(const ChannelState& state, const ScenarioConfig& cfg) {
  const CMatrix h = stacked_channels(state);
  if (h.cwiseAbs().maxCoeff() == 0.0)
    throw Error(ErrorKind::AllZeroChannels, "rzf: every h_bar is zero");
  const Eigen::Index mt = h.cols();
  CMatrix reg = cfg.K * cfg.sigma2 * CMatrix::Identity(mt, mt) + h.adjoint() * h;
  reg = 0.5 * (reg + reg.adjoint()).eval();
  Eigen::LLT<CMatrix> llt(reg);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::NotPositiveDefinite, "rzf: regularized Gram matrix");
  RzfParts out;
  out.w = llt.solve(CMatrix::Identity(mt, mt));
  double total = 0.0;
  for (const auto& u : state.users) {
    out.columns.push_back(out.w * u.h_bar);
    total += out.columns.back().squaredNorm();
  }
  out.xi2 = cfg.P / total;
  return out;
}

inline Precoder rzf(const ChannelState& state, const ScenarioConfig& cfg) {
  const RzfParts parts = rzf_parts(state, cfg);
  std::vector<CVector> vectors;
  for (const auto& c : parts.columns) vectors.push_back(std::sqrt(parts.xi2) * c);
  return Precoder::from_vectors(vectors);
}

/// Max generalized eigenvector of (R_k, sigma2 I + sum_{i != k} R_i), equal power.
inline Precoder slnr(const CovarianceSet& covs, const ScenarioConfig& cfg) {
  const Multipliers ones{std::vector<double>(covs.size(), 1.0)};
  const auto d = structure::directions_from_mu(ones, covs, cfg.sigma2);
  Precoder out;
  out.directions = d.directions;
  out.powers.assign(covs.size(), cfg.P / static_cast<double>(covs.size()));
  return out;
}

/// Diagonal of Xi_k = mu_k (sigma2 I + sum_{i != k} mu_i Lambda_i)^{-1} Lambda_k.
inline std::vector<double> beam_gains(const ChannelState& state, std::size_t k,
                                      const Multipliers& mu, double sigma2) {
  const std::size_t beams = state.users[k].omega.size();
  std::vector<double> xi(beams);
  for (std::size_t b = 0; b < beams; ++b) {
    double denom = sigma2;
    for (std::size_t i = 0; i < state.users.size(); ++i)
      if (i != k) denom += mu.mu[i] * state.users[i].omega[b];
    xi[b] = mu.mu[k] * state.users[k].omega[b] / denom;
  }
  return xi;
}

/// Beam selection for statistical-only CSI on a unitary DFT grid: each user
/// takes the column maximizing its Xi_k diagonal (lowest index on ties).
inline Precoder bdma_select(const ChannelState& state, const ScenarioConfig& cfg,
                            const Multipliers& mu) {
  if (cfg.Nh != 1 || cfg.Nv != 1)
    throw Error(ErrorKind::RequiresCriticalSampling, "bdma_select needs N_h = N_v = 1");
  for (const auto& u : state.users)
    if (u.beta != 0.0)
      throw Error(ErrorKind::RequiresStatisticalOnly, "bdma_select needs beta_k = 0");
  if (mu.size() != state.users.size())
    throw Error(ErrorKind::DimensionMismatch, "bdma_select: |mu| != K");
  const CMatrix v = channel::sampling_matrix(cfg);
  Precoder out;
  for (std::size_t k = 0; k < state.users.size(); ++k) {
    const std::vector<double> xi = beam_gains(state, k, mu, cfg.sigma2);
    std::size_t best = 0;
    for (std::size_t b = 1; b < xi.size(); ++b)
      if (xi[b] > xi[best]) best = b;
    out.directions.push_back(v.col(static_cast<Eigen::Index>(best)));
    out.gammas.push_back(xi[best]);
  }
  const CovarianceSet covs = channel::covariance(state, v);
  out.powers = structure::power_control(out.directions, out.gammas, covs, cfg.sigma2);
  return out;
}

}  // namespace eigenprecode::baselines
