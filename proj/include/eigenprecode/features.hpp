#pragma once

// Network inputs built from a channel state.

#include "eigenprecode/channel.hpp"
#include "eigenprecode/linalg.hpp"

namespace eigenprecode::features {

/// X = [Re(H_beta), Im(H_beta), Omega_beta]^H with H_beta rows beta_k h_bar_k^H and
/// Omega_beta rows (1 - beta_k^2) omega_k^T; size (2 M_t + N M_t) x K.
inline RMatrix lmnn_input(const ChannelState& state) {
  const auto users = static_cast<Eigen::Index>(state.users.size());
  const Eigen::Index mt = users ? state.users[0].h_bar.size() : 0;
  const Eigen::Index beams = users ? static_cast<Eigen::Index>(state.users[0].omega.size()) : 0;
  RMatrix x(2 * mt + beams, users);
  for (Eigen::Index k = 0; k < users; ++k) {
    const auto& u = state.users[k];
    const double b = u.beta;
    for (Eigen::Index m = 0; m < mt; ++m) {
      x(m, k) = b * u.h_bar[m].real();
      x(mt + m, k) = -b * u.h_bar[m].imag();
    }
    const double s = 1.0 - b * b;
    for (Eigen::Index i = 0; i < beams; ++i) x(2 * mt + i, k) = s * u.omega[i];
  }
  return x;
}

/// Omega^H only, size N M_t x K; beta and h_bar are ignored.
inline RMatrix slmnn_input(const ChannelState& state) {
  const auto users = static_cast<Eigen::Index>(state.users.size());
  const Eigen::Index beams = users ? static_cast<Eigen::Index>(state.users[0].omega.size()) : 0;
  RMatrix x(beams, users);
  for (Eigen::Index k = 0; k < users; ++k)
    for (Eigen::Index i = 0; i < beams; ++i) x(i, k) = state.users[k].omega[i];
  return x;
}

}  // namespace eigenprecode::features
