#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "derivkit/expr.hpp"

namespace derivkit {

using Matrix = Eigen::MatrixXd;
using Point = std::vector<double>;

// Dense matrix of expressions, row-major.
class ExprMatrix {
 public:
  ExprMatrix() = default;
  ExprMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), entries_(rows * cols) {}

  static ExprMatrix identity(std::size_t n);
  static ExprMatrix from_values(const Matrix& values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  Expr& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
  const Expr& operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }

  std::vector<Expr> column(std::size_t j) const;

  Matrix evaluate(std::span<const double> at) const;
  ExprMatrix simplified() const;
  bool is_constant() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Expr> entries_;
};

ExprMatrix operator*(const ExprMatrix& a, const ExprMatrix& b);
ExprMatrix operator+(const ExprMatrix& a, const ExprMatrix& b);
ExprMatrix operator-(const ExprMatrix& a, const ExprMatrix& b);
ExprMatrix operator*(const Expr& s, const ExprMatrix& m);

// Laplace expansion; intended for n <= 4.
Expr determinant(const ExprMatrix& m);

// Adjugate over determinant for n <= 4. Larger matrices must be constant and
// are inverted numerically; anything else throws InputError.
ExprMatrix inverse(const ExprMatrix& m);

// Largest absolute entry.
double max_abs(const Matrix& m);

}  // namespace derivkit
