#pragma once

// Beam-domain channel model: oversampled DFT sampling matrices, the posteriori
// channel h = beta*h_bar + sqrt(1-beta^2) V (m .* w), its covariance, and a
// synthetic scenario generator with sparse log-normal beam powers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "eigenprecode/error.hpp"
#include "eigenprecode/linalg.hpp"
#include "eigenprecode/rng.hpp"

namespace eigenprecode {

struct ScenarioConfig {
  int Mv = 4;
  int Mh = 4;
  int Nv = 2;
  int Nh = 2;
  int K = 4;
  double P = 1.0;
  double sigma2 = 0.01;
  std::uint64_t seed = 0;

  int antennas() const { return Mv * Mh; }
  int oversampling() const { return Nv * Nh; }
  int beams() const { return antennas() * oversampling(); }
  double snr_db() const { return 10.0 * std::log10(P / sigma2); }

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw Error(ErrorKind::InvalidConfig, field + ": " + why);
    };
    if (Mv < 1) fail("Mv", "must be >= 1");
    if (Mh < 1) fail("Mh", "must be >= 1");
    if (Nv < 1) fail("Nv", "must be >= 1");
    if (Nh < 1) fail("Nh", "must be >= 1");
    if (K < 1) fail("K", "must be >= 1");
    if (!(P > 0.0) || !std::isfinite(P)) fail("P", "must be finite and > 0");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) fail("sigma2", "must be finite and > 0");
  }

  bool operator==(const ScenarioConfig&) const = default;
};

struct UserChannel {
  CVector h_bar;
  std::vector<double> omega;
  double beta = 0.0;
};

struct ChannelState {
  std::vector<UserChannel> users;

  std::size_t size() const { return users.size(); }
  std::vector<double> betas() const {
    std::vector<double> b;
    b.reserve(users.size());
    for (const auto& u : users) b.push_back(u.beta);
    return b;
  }
};

using CovarianceSet = std::vector<CMatrix>;

namespace channel {

struct FixedBeta {
  double value = 1.0;
};

/// beta = J0(2 pi f_d tau) with f_d = v f_c / c, clamped to [0, 1].
struct JakesBeta {
  double speed_kmph = 30.0;
  double carrier_hz = 4.8e9;
  double delay_s = 0.5e-3;

  double beta() const {
    const double v = speed_kmph / 3.6;
    const double fd = v * carrier_hz / 299792458.0;
    const double j0 = std::cyl_bessel_j(0.0, 2.0 * std::numbers::pi * fd * delay_s);
    return std::clamp(j0, 0.0, 1.0);
  }
};

using BetaModel = std::variant<FixedBeta, JakesBeta>;

inline double beta_of(const BetaModel& model) {
  return std::visit(
      [](const auto& m) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, FixedBeta>)
          return m.value;
        else
          return m.beta();
      },
      model);
}

inline CMatrix oversampled_dft(int m, int nf) {
  if (m < 1 || nf < 1) throw Error(ErrorKind::InvalidArgument, "oversampled_dft: M, N_f >= 1");
  const int cols = nf * m;
  CMatrix v(m, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < cols; ++c) {
      // reduce m*n modulo the period before forming the angle
      const long long k = (static_cast<long long>(r) * c) % cols;
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / cols;
      v(r, c) = scale * cdouble(std::cos(angle), std::sin(angle));
    }
  return v;
}

/// V_{M_t} = V_{M_h} (x) V_{M_v}, size M_t x N M_t.
inline CMatrix sampling_matrix(const ScenarioConfig& cfg) {
  cfg.validate();
  return linalg::kron(oversampled_dft(cfg.Mh, cfg.Nh), oversampled_dft(cfg.Mv, cfg.Nv));
}

inline void validate_state(const ChannelState& state, const ScenarioConfig& cfg) {
  if (state.users.size() != static_cast<std::size_t>(cfg.K))
    throw Error(ErrorKind::DimensionMismatch,
                "channel state has " + std::to_string(state.users.size()) + " users, K = " +
                    std::to_string(cfg.K));
  for (std::size_t k = 0; k < state.users.size(); ++k) {
    const auto& u = state.users[k];
    const std::string who = "user " + std::to_string(k);
    if (u.h_bar.size() != cfg.antennas())
      throw Error(ErrorKind::DimensionMismatch, who + ": h_bar length");
    if (u.omega.size() != static_cast<std::size_t>(cfg.beams()))
      throw Error(ErrorKind::DimensionMismatch, who + ": omega length");
    if (!(u.beta >= 0.0 && u.beta <= 1.0))
      throw Error(ErrorKind::InvalidArgument, who + ": beta outside [0, 1]");
    for (double w : u.omega)
      if (!(w >= 0.0) || !std::isfinite(w))
        throw Error(ErrorKind::InvalidArgument, who + ": omega must be finite and >= 0");
    if (!u.h_bar.allFinite()) throw Error(ErrorKind::InvalidArgument, who + ": h_bar not finite");
  }
}

/// Synthetic beam-domain scenario. Each user's coupling vector has a support of
/// ceil(sparsity * N M_t) beams (half contiguous, half scattered) with log-normal
/// powers normalized to sum M_t; h_bar is one draw of V (sqrt(omega) .* g).
inline ChannelState synth_scenario(const ScenarioConfig& cfg, double sparsity,
                                   const BetaModel& beta_model, Rng& rng,
                                   const CMatrix* v_cached = nullptr) {
  cfg.validate();
  if (!(sparsity > 0.0 && sparsity <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "synth_scenario: sparsity must be in (0, 1]");
  const CMatrix v = v_cached ? *v_cached : sampling_matrix(cfg);
  const int beams = cfg.beams();
  const int mt = cfg.antennas();
  const int support =
      std::clamp(static_cast<int>(std::ceil(sparsity * beams - 1e-12)), 1, beams);
  const double beta = beta_of(beta_model);
  std::normal_distribution<double> log_power(0.0, 1.0);
  std::uniform_int_distribution<int> start_dist(0, beams - 1);

  ChannelState state;
  state.users.resize(cfg.K);
  for (auto& user : state.users) {
    std::vector<char> active(beams, 0);
    const int contiguous = (support + 1) / 2;
    const int start = start_dist(rng);
    for (int i = 0; i < contiguous; ++i) active[(start + i) % beams] = 1;
    std::vector<int> rest;
    for (int i = 0; i < beams; ++i)
      if (!active[i]) rest.push_back(i);
    std::shuffle(rest.begin(), rest.end(), rng);
    for (int i = 0; i < support - contiguous; ++i) active[rest[i]] = 1;

    user.omega.assign(beams, 0.0);
    double total = 0.0;
    for (int i = 0; i < beams; ++i)
      if (active[i]) {
        user.omega[i] = std::exp(log_power(rng));
        total += user.omega[i];
      }
    for (double& w : user.omega) w *= mt / total;

    CVector g = complex_normal_vector(beams, rng);
    for (int i = 0; i < beams; ++i) g[i] *= std::sqrt(user.omega[i]);
    user.h_bar = v * g;
    user.beta = beta;
  }
  return state;
}

inline ChannelState synth_scenario(const ScenarioConfig& cfg, double sparsity,
                                   const BetaModel& beta_model) {
  Rng rng = make_rng(cfg.seed, "scenario");
  return synth_scenario(cfg, sparsity, beta_model, rng);
}

/// One draw of every user's channel under the posteriori model.
inline std::vector<CVector> posterior_sample(const ChannelState& state, const CMatrix& v,
                                             Rng& rng) {
  std::vector<CVector> out;
  out.reserve(state.users.size());
  const Eigen::Index beams = v.cols();
  for (const auto& u : state.users) {
    CVector w = complex_normal_vector(beams, rng);
    if (u.beta == 1.0) {
      out.push_back(u.h_bar);
      continue;
    }
    for (Eigen::Index i = 0; i < beams; ++i) w[i] *= std::sqrt(u.omega[i]);
    out.push_back(u.beta * u.h_bar + std::sqrt(1.0 - u.beta * u.beta) * (v * w));
  }
  return out;
}

inline std::vector<CVector> posterior_sample(const ChannelState& state, const ScenarioConfig& cfg,
                                             Rng& rng) {
  return posterior_sample(state, sampling_matrix(cfg), rng);
}

/// Statistical part V diag(omega) V^H of one user's covariance.
inline CMatrix beam_covariance(const std::vector<double>& omega, const CMatrix& v) {
  CMatrix vs = v;
  for (Eigen::Index i = 0; i < v.cols(); ++i) vs.col(i) *= std::sqrt(omega[i]);
  CMatrix r = vs * vs.adjoint();
  return 0.5 * (r + r.adjoint());
}

/// R_k = beta_k^2 h_bar h_bar^H + (1 - beta_k^2) V Lambda_k V^H.
inline CovarianceSet covariance(const ChannelState& state, const CMatrix& v) {
  CovarianceSet covs;
  covs.reserve(state.users.size());
  for (const auto& u : state.users) {
    const double b2 = u.beta * u.beta;
    CMatrix r = b2 * (u.h_bar * u.h_bar.adjoint());
    if (b2 < 1.0) r += (1.0 - b2) * beam_covariance(u.omega, v);
    covs.push_back(0.5 * (r + r.adjoint()));
  }
  return covs;
}

inline CovarianceSet covariance(const ChannelState& state, const ScenarioConfig& cfg) {
  validate_state(state, cfg);
  return covariance(state, sampling_matrix(cfg));
}

/// Copy of the state with every beta forced to `beta`.
inline ChannelState with_beta(ChannelState state, double beta) {
  for (auto& u : state.users) u.beta = beta;
  return state;
}

}  // namespace channel
}  // namespace eigenprecode
