#pragma once

// Small dense matrices for metric tensors (n is at most a handful).

#include <cstddef>
#include <span>
#include <vector>

namespace nshift {

using Vec = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(int n, double fill = 0.0) : n_(n), a_(static_cast<std::size_t>(n) * n, fill) {}
  static Matrix identity(int n);

  int size() const { return n_; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }

  Vec apply(std::span<const double> x) const;

 private:
  int n_ = 0;
  std::vector<double> a_;
};

// Cholesky factor L (lower) of a symmetric matrix. Returns the 1-based index
// of the first leading principal minor that is not positive, or 0 on success.
int cholesky(const Matrix& a, Matrix& lower);
Matrix spd_inverse(const Matrix& a);  // throws DomainError if not positive-definite
double determinant(Matrix a);         // Gaussian elimination with partial pivoting

double dot(std::span<const double> a, std::span<const double> b);
// g(a, b) = a^i g_ij b^j
double inner(const Matrix& g, std::span<const double> a, std::span<const double> b);

}  // namespace nshift
