#pragma once

// Optimal precoder structure. Given Lagrange multipliers mu, each user's unit
// direction is the maximum generalized eigenvector of
//   (S_k, N_k) = (mu_k R_k, sigma2 I + sum_{i != k} mu_i R_i)
// and its eigenvalue is the SINR target gamma_k. Powers follow from the tight
// constraints T rho = sigma2 1, and the map is inverted by T^T mu = sigma2 1.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "eigenprecode/channel.hpp"
#include "eigenprecode/error.hpp"
#include "eigenprecode/linalg.hpp"
#include "eigenprecode/precoder.hpp"

namespace eigenprecode {

struct Multipliers {
  std::vector<double> mu;

  std::size_t size() const { return mu.size(); }
  double sum() const { return std::accumulate(mu.begin(), mu.end(), 0.0); }

  void validate(double budget) const {
    for (std::size_t k = 0; k < mu.size(); ++k)
      if (!(mu[k] >= 0.0) || !std::isfinite(mu[k]))
        throw Error(ErrorKind::InvalidArgument, "multiplier " + std::to_string(k) + " negative");
    if (sum() > budget * (1.0 + 1e-6))
      throw Error(ErrorKind::InvalidArgument, "multipliers exceed the power budget");
  }
};

namespace structure {

inline double default_eps(const ScenarioConfig& cfg) { return 1e-3 * cfg.P / cfg.K; }

inline std::pair<CMatrix, CMatrix> assemble_sn(std::size_t k, const Multipliers& mu,
                                               const CovarianceSet& covs, double sigma2) {
  const Eigen::Index n = covs.at(k).rows();
  CMatrix s = mu.mu.at(k) * covs[k];
  CMatrix noise = sigma2 * CMatrix::Identity(n, n);
  for (std::size_t i = 0; i < covs.size(); ++i)
    if (i != k && mu.mu[i] != 0.0) noise += mu.mu[i] * covs[i];
  return {std::move(s), std::move(noise)};
}

struct Directions {
  std::vector<CVector> directions;
  std::vector<double> gammas;
};

inline Directions directions_from_mu(const Multipliers& mu, const CovarianceSet& covs,
                                     double sigma2,
                                     linalg::EigenStrategy strategy = linalg::EigenStrategy::Auto,
                                     double tol = linalg::kEigenTol) {
  if (mu.size() != covs.size())
    throw Error(ErrorKind::DimensionMismatch, "directions_from_mu: |mu| != K");
  Directions out;
  for (std::size_t k = 0; k < covs.size(); ++k) {
    auto [s, n] = assemble_sn(k, mu, covs, sigma2);
    linalg::EigenPair e = linalg::max_generalized_eigenpair(s, n, tol, strategy);
    out.directions.push_back(std::move(e.vector));
    out.gammas.push_back(e.value);
  }
  return out;
}

/// t_kk = g_kk / gamma_k, t_ki = -g_ki with g_ki = unit_i^H R_k unit_i.
inline RMatrix build_t(const std::vector<CVector>& directions, const std::vector<double>& gammas,
                       const CovarianceSet& covs) {
  RMatrix t = -gain_matrix(directions, covs);
  for (Eigen::Index k = 0; k < t.rows(); ++k) t(k, k) = -t(k, k) / gammas[k];
  return t;
}

namespace detail {

/// Solves t x = rhs after scaling each row to a unit diagonal.
inline RVector solve_t(const RMatrix& t, const RVector& rhs) {
  RMatrix scaled = t;
  RVector b = rhs;
  for (Eigen::Index k = 0; k < t.rows(); ++k) {
    const double d = std::abs(t(k, k));
    if (!(d > 0.0) || !std::isfinite(d)) throw Error(ErrorKind::SingularT, "T has a zero diagonal");
    scaled.row(k) /= d;
    b[k] /= d;
  }
  Eigen::FullPivLU<RMatrix> lu(scaled);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw Error(ErrorKind::SingularT, "T matrix is singular");
  RVector x = lu.solve(b);
  if (!x.allFinite()) throw Error(ErrorKind::SingularT, "T solve produced non-finite values");
  return x;
}

}  // namespace detail

/// rho = sigma2 T^{-1} 1.
inline std::vector<double> power_control(const std::vector<CVector>& directions,
                                         const std::vector<double>& gammas,
                                         const CovarianceSet& covs, double sigma2) {
  const auto users = static_cast<Eigen::Index>(directions.size());
  for (double g : gammas)
    if (!(g > 0.0)) throw Error(ErrorKind::SingularT, "power_control: gamma must be > 0");
  const RMatrix t = build_t(directions, gammas, covs);
  const RVector rho = detail::solve_t(t, RVector::Constant(users, sigma2));
  std::vector<double> out(users);
  const double scale = rho.cwiseAbs().sum();
  for (Eigen::Index k = 0; k < users; ++k) {
    if (rho[k] < -1e-10 * scale)
      throw Error(ErrorKind::NegativePower,
                  "power_control: rho_" + std::to_string(k) + " = " + std::to_string(rho[k]));
    out[k] = std::max(0.0, rho[k]);
  }
  return out;
}

/// mu = sigma2 (T^{-1})^H 1 over the users carrying power; silent users get 0.
inline Multipliers mu_from_precoder(const Precoder& pre, const CovarianceSet& covs,
                                    double sigma2) {
  if (pre.gammas.size() != pre.size())
    throw Error(ErrorKind::InvalidArgument, "mu_from_precoder: precoder carries no gammas");
  // users whose power is negligible against the total are treated as silent
  const double total = pre.total_power();
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < pre.size(); ++k)
    if (pre.powers[k] > 1e-12 * total && pre.gammas[k] > 0.0) active.push_back(k);
  Multipliers out{std::vector<double>(pre.size(), 0.0)};
  if (active.empty()) return out;
  std::vector<CVector> dirs;
  std::vector<double> gammas;
  CovarianceSet sub;
  for (std::size_t k : active) {
    dirs.push_back(pre.directions[k]);
    gammas.push_back(pre.gammas[k]);
    sub.push_back(covs[k]);
  }
  // With Q = T diag(rho), T^T mu = sigma2 1 is Q^T mu = sigma2 rho; Q is
  // diagonally dominant at consistent inputs and far better conditioned than T.
  RMatrix q = build_t(dirs, gammas, sub);
  RVector rho(static_cast<Eigen::Index>(active.size()));
  for (std::size_t j = 0; j < active.size(); ++j) {
    rho[static_cast<Eigen::Index>(j)] = pre.powers[active[j]];
    q.col(static_cast<Eigen::Index>(j)) *= pre.powers[active[j]];
  }
  const RVector mu = detail::solve_t(q.transpose(), sigma2 * rho);
  for (std::size_t j = 0; j < active.size(); ++j) {
    double m = mu[static_cast<Eigen::Index>(j)];
    if (m < 0.0) {
      if (m < -1e-9)
        throw Error(ErrorKind::NegativeMultiplier,
                    "mu_" + std::to_string(active[j]) + " = " + std::to_string(m));
      m = 0.0;
    }
    out.mu[active[j]] = m;
  }
  return out;
}

/// Prunes users with mu_k <= eps, then directions via the eigenproblem and
/// powers via the T solve for the survivors.
inline Precoder recover_precoder(const Multipliers& mu, const CovarianceSet& covs,
                                 const ScenarioConfig& cfg, double eps,
                                 linalg::EigenStrategy strategy = linalg::EigenStrategy::Auto) {
  if (mu.size() != covs.size())
    throw Error(ErrorKind::DimensionMismatch, "recover_precoder: |mu| != K");
  const int antennas = covs.empty() ? 0 : static_cast<int>(covs[0].rows());
  Precoder out = Precoder::zeros(static_cast<int>(covs.size()), antennas);
  out.gammas.assign(covs.size(), 0.0);

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < mu.size(); ++k)
    if (mu.mu[k] > eps) active.push_back(k);
  if (active.empty()) return out;

  Multipliers sub_mu;
  CovarianceSet sub_covs;
  for (std::size_t k : active) {
    sub_mu.mu.push_back(mu.mu[k]);
    sub_covs.push_back(covs[k]);
  }
  const Directions d = directions_from_mu(sub_mu, sub_covs, cfg.sigma2, strategy);
  std::vector<double> rho;
  // A user whose covariance vanishes on every direction gets gamma = 0; it
  // cannot be served, so it is dropped from the power solve.
  std::vector<std::size_t> served;
  for (std::size_t j = 0; j < active.size(); ++j)
    if (d.gammas[j] > 0.0) served.push_back(j);
  if (served.size() == active.size()) {
    rho = power_control(d.directions, d.gammas, sub_covs, cfg.sigma2);
  } else {
    std::vector<CVector> dirs;
    std::vector<double> gam;
    CovarianceSet cs;
    for (std::size_t j : served) {
      dirs.push_back(d.directions[j]);
      gam.push_back(d.gammas[j]);
      cs.push_back(sub_covs[j]);
    }
    const std::vector<double> r = served.empty() ? std::vector<double>{}
                                                 : power_control(dirs, gam, cs, cfg.sigma2);
    rho.assign(active.size(), 0.0);
    for (std::size_t j = 0; j < served.size(); ++j) rho[served[j]] = r[j];
  }
  for (std::size_t j = 0; j < active.size(); ++j) {
    const std::size_t k = active[j];
    out.directions[k] = d.directions[j];
    out.gammas[k] = d.gammas[j];
    out.powers[k] = rho[j];
  }
  return out;
}

/// C_k = 1 + (1/sigma2) sum_{i != k} p_i^H R_k p_i - p_k^H R_k p_k / (sigma2 gamma_k).
inline std::vector<double> constraint_values(const Precoder& pre, const CovarianceSet& covs,
                                             double sigma2) {
  const RMatrix g = gain_matrix(pre.directions, covs);
  std::vector<double> c(pre.size(), 0.0);
  for (std::size_t k = 0; k < pre.size(); ++k) {
    if (!(pre.gammas.size() == pre.size() && pre.gammas[k] > 0.0)) continue;
    double interference = 0.0;
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (i != k) interference += pre.powers[i] * g(k, i);
    c[k] = 1.0 + interference / sigma2 - pre.powers[k] * g(k, k) / (sigma2 * pre.gammas[k]);
  }
  return c;
}

struct KktReport {
  double stationarity = 0.0;  // max_k ||mu_k R_k u_k - gamma_k N_k u_k|| / ||N_k u_k||
  double slackness = 0.0;     // max_k |mu_k C_k|
  double total() const { return stationarity + slackness; }
};

inline KktReport kkt_report(const Precoder& pre, const Multipliers& mu, const CovarianceSet& covs,
                            double sigma2) {
  const std::vector<double> gammas =
      pre.gammas.size() == pre.size() ? pre.gammas : sinr(pre, covs, sigma2);
  Precoder with_gamma = pre;
  with_gamma.gammas = gammas;
  KktReport rep;
  const std::vector<double> c = constraint_values(with_gamma, covs, sigma2);
  for (std::size_t k = 0; k < pre.size(); ++k) {
    if (pre.powers[k] <= 0.0) continue;
    auto [s, n] = assemble_sn(k, mu, covs, sigma2);
    const CVector nu = n * pre.directions[k];
    const CVector res = s * pre.directions[k] - gammas[k] * nu;
    rep.stationarity = std::max(rep.stationarity, res.norm() / nu.norm());
    rep.slackness = std::max(rep.slackness, std::abs(mu.mu[k] * c[k]));
  }
  return rep;
}

inline double kkt_residual(const Precoder& pre, const Multipliers& mu, const CovarianceSet& covs,
                           double sigma2) {
  return kkt_report(pre, mu, covs, sigma2).total();
}

}  // namespace structure
}  // namespace eigenprecode
