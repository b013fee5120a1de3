#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "eigenprecode/channel.hpp"
#include "eigenprecode/linalg.hpp"
#include "eigenprecode/rng.hpp"

namespace testing_support {

using eigenprecode::CMatrix;
using eigenprecode::CVector;
using eigenprecode::cdouble;

inline CMatrix random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cdouble(n(rng), n(rng));
  return m;
}

inline CVector random_vector(Eigen::Index n, std::mt19937_64& rng) {
  return random_complex(n, 1, rng).col(0);
}

/// A A^H / n + shift I.
inline CMatrix random_hpd(Eigen::Index n, std::mt19937_64& rng, double shift = 0.5) {
  const CMatrix a = random_complex(n, n, rng);
  CMatrix m = a * a.adjoint() / static_cast<double>(n) + shift * CMatrix::Identity(n, n);
  return 0.5 * (m + m.adjoint());
}

/// Rank-r PSD matrix.
inline CMatrix random_psd(Eigen::Index n, Eigen::Index rank, std::mt19937_64& rng) {
  const CMatrix a = random_complex(n, rank, rng);
  CMatrix m = a * a.adjoint() / static_cast<double>(rank);
  return 0.5 * (m + m.adjoint());
}

/// Textbook Gaussian elimination with partial pivoting.
inline CVector naive_solve(CMatrix a, CVector b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (Eigen::Index j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
    std::swap(b[c], b[piv]);
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const cdouble f = a(r, c) / a(c, c);
      for (Eigen::Index j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  CVector x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    cdouble s = b[r];
    for (Eigen::Index j = r + 1; j < n; ++j) s -= a(r, j) * x[j];
    x[r] = s / a(r, r);
  }
  return x;
}

struct OraclePair {
  double value;
  CVector vector;
};

/// All generalized eigenpairs of (S, N) from a general eigensolver on N^{-1} S,
/// sorted by decreasing eigenvalue.
inline std::vector<OraclePair> oracle_generalized_eigs(const CMatrix& s, const CMatrix& n) {
  const Eigen::Index dim = s.rows();
  CMatrix ninv_s(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) ninv_s.col(j) = naive_solve(n, s.col(j));
  Eigen::ComplexEigenSolver<CMatrix> es(ninv_s);
  std::vector<OraclePair> out;
  for (Eigen::Index i = 0; i < dim; ++i)
    out.push_back({es.eigenvalues()[i].real(), es.eigenvectors().col(i).normalized()});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.value > b.value; });
  return out;
}

struct DeskInstance {
  eigenprecode::ScenarioConfig cfg;
  eigenprecode::ChannelState state;
  CMatrix v;
  eigenprecode::CovarianceSet covs;
};

inline DeskInstance desk_instance(std::uint64_t seed, double beta, double snr_db = 10.0, int users = 4,
                                  int nv = 2, int nh = 2, double sparsity = 0.25) {
  DeskInstance d;
  d.cfg.K = users;
  d.cfg.Nv = nv;
  d.cfg.Nh = nh;
  d.cfg.sigma2 = d.cfg.P * std::pow(10.0, -snr_db / 10.0);
  d.cfg.seed = seed;
  d.state = eigenprecode::channel::synth_scenario(d.cfg, sparsity, eigenprecode::channel::FixedBeta{beta});
  d.v = eigenprecode::channel::sampling_matrix(d.cfg);
  d.covs = eigenprecode::channel::covariance(d.state, d.v);
  return d;
}

/// Positive multipliers summing to P.
inline std::vector<double> random_mu(int users, double budget, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> mu(users);
  double s = 0.0;
  for (double& m : mu) s += (m = u(rng));
  for (double& m : mu) m *= budget / s;
  return mu;
}

}  // namespace testing_support
