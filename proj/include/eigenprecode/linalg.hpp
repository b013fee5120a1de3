#pragma once

// Complex dense kernels: Hermitian solves, conjugate gradient and the maximum
// generalized eigenpair of a Hermitian pencil (S, N) with N positive definite.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <string>

#include "eigenprecode/error.hpp"

namespace eigenprecode {

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

namespace linalg {

inline constexpr double kSolveTol = 1e-10;
inline constexpr double kEigenTol = 1e-8;
/// Pencils of dimension below this use the Cholesky-whitened dense path.
inline constexpr Eigen::Index kDenseThreshold = 64;

struct EigenPair {
  double value = 0.0;
  CVector vector;
};

enum class EigenStrategy { Auto, Dense, MatrixFree };

inline bool is_hermitian(const CMatrix& a, double tol = kSolveTol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Rotates v so that its first non-negligible component is real positive.
inline void fix_phase(CVector& v) {
  if (v.size() == 0) return;
  const double peak = v.cwiseAbs().maxCoeff();
  if (peak == 0.0) return;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]);
    if (mag > 1e-8 * peak) {
      v *= std::conj(v[i]) / mag;
      v[i] = cdouble(mag, 0.0);
      return;
    }
  }
}

inline CVector hermitian_solve(const CMatrix& a, const CVector& b) {
  if (a.rows() != a.cols())
    throw Error(ErrorKind::DimensionMismatch, "hermitian_solve: matrix is not square");
  if (b.size() != a.rows())
    throw Error(ErrorKind::DimensionMismatch, "hermitian_solve: rhs length " +
                                                  std::to_string(b.size()) + " vs " +
                                                  std::to_string(a.rows()));
  if (!is_hermitian(a)) throw Error(ErrorKind::NotHermitian, "hermitian_solve");
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::NotPositiveDefinite, "hermitian_solve: Cholesky pivot <= 0");
  return llt.solve(b);
}

using LinearOperator = std::function<CVector(const CVector&)>;

struct CgResult {
  CVector x;
  int iterations = 0;
  double residual = 0.0;  // ||Ax - b||_2
};

/// Thrown when CG exhausts max_iter; carries the best iterate seen.
class CgNotConverged : public Error {
 public:
  CgNotConverged(CVector best, double residual)
      : Error(ErrorKind::MaxIterExceeded,
              "conjugate_gradient: residual " + std::to_string(residual)),
        best_(std::move(best)),
        residual_(residual) {}
  const CVector& best() const { return best_; }
  double residual() const { return residual_; }

 private:
  CVector best_;
  double residual_;
};

inline CgResult conjugate_gradient(const LinearOperator& apply_a, const CVector& b, double tol,
                                   int max_iter, const CVector* x0 = nullptr) {
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "conjugate_gradient: tol must be > 0");
  const double bnorm = b.norm();
  CgResult out;
  if (bnorm == 0.0) {
    out.x = CVector::Zero(b.size());
    return out;
  }
  CVector x = x0 ? *x0 : CVector::Zero(b.size());
  CVector r = x0 ? CVector(b - apply_a(x)) : b;
  CVector p = r;
  double rr = r.squaredNorm();
  CVector best = x;
  double best_res = std::sqrt(rr);
  const double target = tol * bnorm;
  if (best_res <= target) {
    out.x = x;
    out.residual = best_res;
    return out;
  }
  for (int it = 1; it <= max_iter; ++it) {
    const CVector ap = apply_a(p);
    const double pap = p.dot(ap).real();
    if (!(pap > 0.0)) break;  // operator not PD along p
    const double alpha = rr / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    const double res = std::sqrt(rr_new);
    if (res < best_res) {
      best_res = res;
      best = x;
    }
    if (res <= target) {
      out.x = x;
      out.iterations = it;
      out.residual = res;
      return out;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  throw CgNotConverged(best, best_res);
}

namespace detail {

inline EigenPair degenerate_pair(Eigen::Index n) {
  EigenPair e;
  e.value = 0.0;
  e.vector = CVector::Zero(n);
  e.vector[0] = 1.0;
  return e;
}

inline void check_pencil(const CMatrix& s, const CMatrix& n) {
  if (s.rows() != s.cols() || n.rows() != n.cols() || s.rows() != n.rows())
    throw Error(ErrorKind::DimensionMismatch, "max_generalized_eigenpair: pencil shapes differ");
  if (s.rows() == 0) throw Error(ErrorKind::DimensionMismatch, "max_generalized_eigenpair: empty");
}

inline EigenPair dense_max_pair(const CMatrix& s, const CMatrix& n) {
  Eigen::LLT<CMatrix> llt(n);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::SingularN, "max_generalized_eigenpair: N not positive definite");
  // C = L^{-1} S L^{-H}
  CMatrix c = llt.matrixL().solve(s);
  c = llt.matrixL().solve(CMatrix(c.adjoint())).adjoint();
  c = 0.5 * (c + c.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(c);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorKind::NoConvergence, "max_generalized_eigenpair: dense eigensolver");
  const Eigen::Index top = c.rows() - 1;
  EigenPair out;
  out.value = std::max(0.0, eig.eigenvalues()[top]);
  out.vector = llt.matrixU().solve(CVector(eig.eigenvectors().col(top)));
  out.vector.normalize();
  return out;
}

/// Restarted Lanczos on x -> N^{-1} S x, which is self-adjoint in the N inner
/// product. N is only applied, never factored: each new Krylov vector costs one
/// CG solve. Ritz pairs come from the projected matrix Q^H S Q.
inline EigenPair matrix_free_max_pair(const CMatrix& s, const CMatrix& n, double tol) {
  const Eigen::Index dim = s.rows();
  const double n_scale = n.cwiseAbs().maxCoeff();
  if (!(n.diagonal().real().minCoeff() > 0.0))
    throw Error(ErrorKind::SingularN, "max_generalized_eigenpair: N has non-positive diagonal");
  const LinearOperator apply_n = [&n](const CVector& v) -> CVector { return n * v; };
  // Deterministic start: S applied to a fixed non-degenerate vector.
  CVector seed(dim);
  for (Eigen::Index i = 0; i < dim; ++i) seed[i] = cdouble(1.0 + 0.1 * i, 0.05 * i);
  CVector x = s * seed;
  if (x.norm() == 0.0) return degenerate_pair(dim);
  x.normalize();
  const Eigen::Index basis_max = std::min<Eigen::Index>(dim, 32);
  const int cg_iters = static_cast<int>(3 * dim + 10);
  constexpr int kMaxRestarts = 500;
  auto solve_n = [&](const CVector& b) {
    try {
      return conjugate_gradient(apply_n, b, 1e-13, cg_iters).x;
    } catch (const CgNotConverged& e) {
      if (e.residual() > 1e-9 * b.norm() * std::max(1.0, n_scale))
        throw Error(ErrorKind::SingularN, "max_generalized_eigenpair: CG on N failed");
      return e.best();
    }
  };
  double lambda = 0.0;
  // top Ritz pair of the current basis; true if it meets the tolerance
  auto ritz_converged = [&](const CMatrix& q, const CMatrix& sq, Eigen::Index m) {
    CMatrix h = q.leftCols(m).adjoint() * sq.leftCols(m);
    h = 0.5 * (h + h.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<CMatrix> ritz(h);
    x = q.leftCols(m) * ritz.eigenvectors().col(m - 1);
    x.normalize();
    const CVector sx = s * x;
    const CVector nx = n * x;
    lambda = sx.dot(x).real() / nx.dot(x).real();
    return (sx - lambda * nx).norm() <= tol * sx.norm();
  };
  for (int restart = 0;; ++restart) {
    CMatrix q(dim, basis_max), nq(dim, basis_max), sq(dim, basis_max);
    Eigen::Index m = 0;
    CVector v = x;
    bool done = false;
    while (m < basis_max) {
      // two passes of Gram-Schmidt in the N inner product
      const double before = std::sqrt(std::max(0.0, v.dot(n * v).real()));
      for (int pass = 0; pass < 2 && m > 0; ++pass)
        v -= q.leftCols(m) * (nq.leftCols(m).adjoint() * v);
      const CVector nv = n * v;
      const double norm = std::sqrt(std::max(0.0, v.dot(nv).real()));
      if (!(norm > 1e-10 * before)) break;  // invariant subspace reached
      q.col(m) = v / norm;
      nq.col(m) = nv / norm;
      sq.col(m) = s * q.col(m);
      ++m;
      if (m >= 2 && ritz_converged(q, sq, m)) {
        done = true;
        break;
      }
      if (m < basis_max) v = solve_n(sq.col(m - 1));
    }
    if (done || ritz_converged(q, sq, m)) break;
    if (restart + 1 == kMaxRestarts)
      throw Error(ErrorKind::NoConvergence, "max_generalized_eigenpair: Lanczos restarts");
  }
  EigenPair out;
  out.value = std::max(0.0, lambda);
  out.vector = x;
  return out;
}

}  // namespace detail

/// Largest generalized eigenpair of (S, N): S v = lambda N v, ||v||_2 = 1, first
/// non-negligible component real positive. S = 0 yields (0, e_1).
inline EigenPair max_generalized_eigenpair(const CMatrix& s, const CMatrix& n,
                                           double tol = kEigenTol,
                                           EigenStrategy strategy = EigenStrategy::Auto) {
  detail::check_pencil(s, n);
  if (s.cwiseAbs().maxCoeff() == 0.0) {
    if (Eigen::LLT<CMatrix>(n).info() != Eigen::Success)
      throw Error(ErrorKind::SingularN, "max_generalized_eigenpair: N not positive definite");
    return detail::degenerate_pair(s.rows());
  }
  if (strategy == EigenStrategy::Auto)
    strategy = s.rows() < kDenseThreshold ? EigenStrategy::Dense : EigenStrategy::MatrixFree;
  EigenPair out = strategy == EigenStrategy::Dense ? detail::dense_max_pair(s, n)
                                                   : detail::matrix_free_max_pair(s, n, tol);
  fix_phase(out.vector);
  return out;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// |<a, b>| for unit vectors; phase-invariant similarity.
inline double cosine_similarity(const CVector& a, const CVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::abs(a.dot(b)) / (na * nb);
}

}  // namespace linalg
}  // namespace eigenprecode
