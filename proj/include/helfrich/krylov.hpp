#ifndef HELFRICH_KRYLOV_HPP
#define HELFRICH_KRYLOV_HPP

/// Restarted GMRES with right preconditioning for matrix-free complex operators.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

namespace helfrich {

struct GmresResult {
  int iterations = 0;
  double residual = 0.0;  // final ||b - A x||
  bool converged = false;
  std::vector<double> history;
};

/// Solves A x = b; `apply(v)` returns A v and `precond(v)` an approximation of A^{-1} v.
template <class Apply, class Precond>
GmresResult gmres(const Apply& apply, const Precond& precond, const Eigen::VectorXcd& b, Eigen::VectorXcd& x,
                  double tol, int max_iter, int restart) {
  using V = Eigen::VectorXcd;
  using C = std::complex<double>;
  GmresResult res;
  if (x.size() != b.size()) x = V::Zero(b.size());
  V r = b - apply(x);
  double beta = r.norm();
  res.history.push_back(beta);
  while (res.iterations < max_iter) {
    if (beta <= tol) {
      res.converged = true;
      break;
    }
    const int m = restart;
    std::vector<V> Q;
    std::vector<V> Z;
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(m + 1, m);
    std::vector<C> cs(m), sn(m);
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(m + 1);
    g[0] = beta;
    Q.push_back(r / beta);
    int k = 0;
    for (; k < m && res.iterations < max_iter; ++k) {
      ++res.iterations;
      Z.push_back(precond(Q[k]));
      V w = apply(Z[k]);
      // Two passes of modified Gram-Schmidt.
      for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j <= k; ++j) {
          const C h = Q[j].dot(w);
          H(j, k) += h;
          w -= h * Q[j];
        }
      H(k + 1, k) = w.norm();
      for (int j = 0; j < k; ++j) {
        const C t = std::conj(cs[j]) * H(j, k) + std::conj(sn[j]) * H(j + 1, k);
        H(j + 1, k) = -sn[j] * H(j, k) + cs[j] * H(j + 1, k);
        H(j, k) = t;
      }
      const double a = std::abs(H(k, k)), bb = std::abs(H(k + 1, k));
      const double nrm = std::hypot(a, bb);
      if (nrm == 0.0) {
        cs[k] = 1.0;
        sn[k] = 0.0;
      } else {
        cs[k] = H(k, k) / nrm;
        sn[k] = H(k + 1, k) / nrm;
      }
      H(k, k) = nrm;
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = std::conj(cs[k]) * g[k];
      res.history.push_back(std::abs(g[k + 1]));
      if (std::abs(g[k + 1]) <= tol || bb == 0.0) {
        ++k;
        break;
      }
      Q.push_back(w / bb);
    }
    Eigen::VectorXcd y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    for (int j = 0; j < k; ++j) x += y[j] * Z[j];
    r = b - apply(x);
    beta = r.norm();
    res.history.push_back(beta);
  }
  res.residual = beta;
  res.converged = beta <= tol;
  return res;
}

}  // namespace helfrich

#endif
