#ifndef HELFRICH_HERMITE_HPP
#define HELFRICH_HERMITE_HPP

/// Normalized probabilists' Hermite polynomials, multi-index sets and
/// Gauss-Hermite rules for the standard Gaussian.

#include <Eigen/Dense>
#include <map>
#include <vector>

namespace helfrich {

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

/// n-point Gauss rule for N(0,1) (Golub-Welsch).
GaussRule gauss_hermite(int n);

/// psi_0..psi_nmax at x, psi_n = He_n / sqrt(n!).
void hermite_values(int nmax, double x, double* out);

using MultiIndex = std::vector<int>;

/// Multi-indices over `dim` coordinates with total degree <= degree,
/// ordered by degree and then reverse-lexicographically.
class MultiIndexSet {
 public:
  MultiIndexSet(int dim, int degree);

  int dim() const { return dim_; }
  int degree() const { return degree_; }
  int size() const { return static_cast<int>(indices_.size()); }
  const MultiIndex& operator[](int i) const { return indices_[i]; }
  /// Position of m, or -1 when absent.
  int find(const MultiIndex& m) const;
  int total_degree(int i) const;

 private:
  int dim_, degree_;
  std::vector<MultiIndex> indices_;
  std::map<MultiIndex, int> lookup_;
};

/// Tensor Gauss-Hermite rule on R^dim in standardized coordinates.
struct TensorRule {
  int dim = 0;
  Eigen::MatrixXd nodes;     // dim x n
  Eigen::VectorXd weights;   // n, sums to 1
  int size() const { return static_cast<int>(weights.size()); }
};

TensorRule tensor_gauss_hermite(int dim, int order);

/// Values of every basis polynomial at standardized point xi (length = set size).
Eigen::VectorXd multi_hermite_values(const MultiIndexSet& set, const Eigen::VectorXd& xi);

/// Evaluates sum_i c_i Psi_i(xi) and, if grad != nullptr, its gradient in xi.
double hermite_expansion(const MultiIndexSet& set, const Eigen::VectorXd& coeffs, const Eigen::VectorXd& xi,
                         Eigen::VectorXd* grad = nullptr);

}  // namespace helfrich

#endif
