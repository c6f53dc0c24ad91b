#pragma once

// Active-set nonnegative least squares (Lawson-Hanson, in the Gram-matrix
// form of Bro and de Jong).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mbias/errors.hpp"

namespace mbias {

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
};

/// Minimizes 0.5 x'Gx - h'x subject to x >= 0 for symmetric positive
/// (semi)definite G. Equivalent to NNLS with G = A'A and h = A'b.
inline NnlsResult nnls_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, double tol = 1e-12,
                            int max_iter = 0) {
  const auto q = h.size();
  if (G.rows() != q || G.cols() != q) throw ShapeError("nnls: Gram matrix shape mismatch");
  if (!G.allFinite() || !h.allFinite()) throw DomainError("nnls: non-finite input");
  if (max_iter <= 0) max_iter = 30 * static_cast<int>(q) + 100;

  const double scale = std::max({1.0, G.cwiseAbs().maxCoeff(), h.cwiseAbs().maxCoeff()});
  const double kkt_tol = tol * scale;

  NnlsResult res;
  Eigen::VectorXd& x = res.x;
  x = Eigen::VectorXd::Zero(q);
  std::vector<bool> passive(static_cast<std::size_t>(q), false);
  Eigen::VectorXd w = h;

  auto solve_passive = [&](Eigen::VectorXd& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < q; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    const auto np = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd Gp(np, np);
    Eigen::VectorXd hp(np);
    for (Eigen::Index a = 0; a < np; ++a) {
      hp(a) = h(idx[a]);
      for (Eigen::Index b = 0; b < np; ++b) Gp(a, b) = G(idx[a], idx[b]);
    }
    Eigen::VectorXd sp = Gp.ldlt().solve(hp);
    if (!sp.allFinite()) sp = Gp.completeOrthogonalDecomposition().solve(hp);
    s.setZero(q);
    for (Eigen::Index a = 0; a < np; ++a) s(idx[a]) = sp(a);
  };

  Eigen::VectorXd s(q);
  Eigen::Index last_added = -1;
  while (true) {
    Eigen::Index best = -1;
    double best_w = kkt_tol;
    for (Eigen::Index j = 0; j < q; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w && j != last_added) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    if (++res.iterations > max_iter) throw SolverError("nnls: iteration cap exceeded");
    passive[static_cast<std::size_t>(best)] = true;
    solve_passive(s);
    bool added_kept = true;
    int inner = 0;
    while (true) {
      double alpha = 0.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
          const double denom = x(j) - s(j);
          const double a = denom > 0.0 ? x(j) / denom : 0.0;
          if (blocking < 0 || a < alpha) {
            alpha = a;
            blocking = j;
          }
        }
      }
      if (blocking < 0) break;
      x += alpha * (s - x);
      for (Eigen::Index j = 0; j < q; ++j) {
        if (passive[static_cast<std::size_t>(j)] && (j == blocking || x(j) <= 0.0)) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
          if (j == best) added_kept = false;
        }
      }
      solve_passive(s);
      if (++inner > max_iter) throw SolverError("nnls: inner iteration cap exceeded");
    }
    x = s;
    for (Eigen::Index j = 0; j < q; ++j)
      if (!passive[static_cast<std::size_t>(j)]) x(j) = 0.0;
    w = h - G * x;
    // Rounding can make the variable that was just dropped look attractive
    // again; skip it for one round.
    last_added = added_kept ? -1 : best;
  }
  return res;
}

/// Nonnegative least squares: argmin_{x >= 0} ||Ax - b||^2.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol = 1e-12) {
  if (A.rows() != b.size()) throw ShapeError("nnls: A and b disagree in row count");
  return nnls_gram(A.transpose() * A, A.transpose() * b, tol).x;
}

}  // namespace mbias
