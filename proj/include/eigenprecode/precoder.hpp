#pragma once

#include <cmath>
#include <vector>

#include "eigenprecode/channel.hpp"
#include "eigenprecode/linalg.hpp"

namespace eigenprecode {

/// p_k = sqrt(rho_k) * unit direction. `gammas` is empty unless the precoder
/// came from structure recovery or the iterative solver.
struct Precoder {
  std::vector<CVector> directions;
  std::vector<double> powers;
  std::vector<double> gammas;

  std::size_t size() const { return directions.size(); }
  double total_power() const {
    double s = 0.0;
    for (double p : powers) s += p;
    return s;
  }
  CVector vector(std::size_t k) const { return std::sqrt(powers[k]) * directions[k]; }

  static Precoder zeros(int users, int antennas) {
    Precoder p;
    for (int k = 0; k < users; ++k) {
      CVector e = CVector::Zero(antennas);
      e[0] = 1.0;
      p.directions.push_back(e);
    }
    p.powers.assign(users, 0.0);
    return p;
  }

  /// Splits full precoding vectors into unit directions and powers.
  static Precoder from_vectors(const std::vector<CVector>& vectors) {
    Precoder p;
    for (const auto& v : vectors) {
      const double n2 = v.squaredNorm();
      if (n2 > 0.0) {
        p.directions.push_back(v / std::sqrt(n2));
      } else {
        CVector e = CVector::Zero(v.size());
        e[0] = 1.0;
        p.directions.push_back(e);
      }
      p.powers.push_back(n2);
    }
    return p;
  }
};

/// g(k, i) = unit_i^H R_k unit_i.
inline RMatrix gain_matrix(const std::vector<CVector>& directions, const CovarianceSet& covs) {
  const auto users = static_cast<Eigen::Index>(directions.size());
  RMatrix g(users, users);
  for (Eigen::Index k = 0; k < users; ++k)
    for (Eigen::Index i = 0; i < users; ++i)
      g(k, i) = std::max(0.0, directions[i].dot(covs[k] * directions[i]).real());
  return g;
}

/// SINR_k = rho_k g_kk / (sigma2 + sum_{i != k} rho_i g_ki).
inline std::vector<double> sinr(const Precoder& pre, const CovarianceSet& covs, double sigma2) {
  const RMatrix g = gain_matrix(pre.directions, covs);
  std::vector<double> out(pre.size());
  for (std::size_t k = 0; k < pre.size(); ++k) {
    double interference = sigma2;
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (i != k) interference += pre.powers[i] * g(k, i);
    out[k] = pre.powers[k] * g(k, k) / interference;
  }
  return out;
}

}  // namespace eigenprecode
