#include "helfrich/hermite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace helfrich {

GaussRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Hermite order must be positive");
  // Jacobi matrix of the monic He_n recurrence: off-diagonal sqrt(k).
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(double(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussRule r;
  for (int i = 0; i < n; ++i) {
    r.nodes.push_back(es.eigenvalues()[i]);
    r.weights.push_back(es.eigenvectors()(0, i) * es.eigenvectors()(0, i));
  }
  // Enforce exact node symmetry so parity arguments hold in floating point.
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (r.nodes[n - 1 - i] - r.nodes[i]);
    const double w = 0.5 * (r.weights[i] + r.weights[n - 1 - i]);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = r.weights[n - 1 - i] = w;
  }
  if (n % 2) r.nodes[n / 2] = 0.0;
  double s = 0.0;
  for (double w : r.weights) s += w;
  for (double& w : r.weights) w /= s;
  return r;
}

void hermite_values(int nmax, double x, double* out) {
  out[0] = 1.0;
  if (nmax >= 1) out[1] = x;
  // psi_{n+1} = (x psi_n - sqrt(n) psi_{n-1}) / sqrt(n+1)
  for (int n = 1; n < nmax; ++n) out[n + 1] = (x * out[n] - std::sqrt(double(n)) * out[n - 1]) / std::sqrt(double(n + 1));
}

MultiIndexSet::MultiIndexSet(int dim, int degree) : dim_(dim), degree_(degree) {
  if (dim < 0 || degree < 0) throw std::invalid_argument("bad multi-index set");
  MultiIndex cur(dim, 0);
  for (int total = 0; total <= degree; ++total) {
    std::vector<MultiIndex> level;
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == dim - 1 || dim == 0) {
        if (dim == 0) {
          if (left == 0) level.push_back(cur);
          return;
        }
        cur[pos] = left;
        level.push_back(cur);
        return;
      }
      for (int v = left; v >= 0; --v) {
        cur[pos] = v;
        rec(pos + 1, left - v);
      }
    };
    rec(0, total);
    for (auto& m : level) {
      lookup_[m] = static_cast<int>(indices_.size());
      indices_.push_back(m);
    }
    if (dim == 0) break;
  }
}

int MultiIndexSet::find(const MultiIndex& m) const {
  auto it = lookup_.find(m);
  return it == lookup_.end() ? -1 : it->second;
}

int MultiIndexSet::total_degree(int i) const {
  int s = 0;
  for (int v : indices_[i]) s += v;
  return s;
}

TensorRule tensor_gauss_hermite(int dim, int order) {
  const GaussRule g = gauss_hermite(order);
  long n = 1;
  for (int i = 0; i < dim; ++i) n *= order;
  TensorRule t;
  t.dim = dim;
  t.nodes.resize(dim, n);
  t.weights.resize(n);
  for (long j = 0; j < n; ++j) {
    long r = j;
    double w = 1.0;
    for (int c = dim - 1; c >= 0; --c) {
      const int q = static_cast<int>(r % order);
      r /= order;
      t.nodes(c, j) = g.nodes[q];
      w *= g.weights[q];
    }
    t.weights[j] = w;
  }
  return t;
}

Eigen::VectorXd multi_hermite_values(const MultiIndexSet& set, const Eigen::VectorXd& xi) {
  const int d = set.degree(), K = set.dim();
  std::vector<double> table(static_cast<size_t>(K) * (d + 1));
  for (int c = 0; c < K; ++c) hermite_values(d, xi[c], &table[c * (d + 1)]);
  Eigen::VectorXd out(set.size());
  for (int i = 0; i < set.size(); ++i) {
    double v = 1.0;
    for (int c = 0; c < K; ++c) v *= table[c * (d + 1) + set[i][c]];
    out[i] = v;
  }
  return out;
}

double hermite_expansion(const MultiIndexSet& set, const Eigen::VectorXd& coeffs, const Eigen::VectorXd& xi,
                         Eigen::VectorXd* grad) {
  const int d = set.degree(), K = set.dim();
  std::vector<double> table(static_cast<size_t>(K) * (d + 1));
  for (int c = 0; c < K; ++c) hermite_values(d, xi[c], &table[c * (d + 1)]);
  auto psi = [&](int c, int n) { return n < 0 ? 0.0 : table[c * (d + 1) + n]; };
  double val = 0.0;
  if (grad) grad->setZero(K);
  for (int i = 0; i < set.size(); ++i) {
    const MultiIndex& m = set[i];
    double v = 1.0;
    for (int c = 0; c < K; ++c) v *= psi(c, m[c]);
    val += coeffs[i] * v;
    if (grad) {
      for (int c = 0; c < K; ++c) {
        if (m[c] == 0) continue;
        // psi_n' = sqrt(n) psi_{n-1}
        double dv = std::sqrt(double(m[c])) * psi(c, m[c] - 1);
        for (int o = 0; o < K; ++o)
          if (o != c) dv *= psi(o, m[o]);
        (*grad)[c] += coeffs[i] * dv;
      }
    }
  }
  return val;
}

}  // namespace helfrich
