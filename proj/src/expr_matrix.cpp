#include "derivkit/expr_matrix.hpp"

#include <cmath>

#include "derivkit/error.hpp"

namespace derivkit {

ExprMatrix ExprMatrix::identity(std::size_t n) {
  ExprMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = Expr::constant(1.0);
  return m;
}

ExprMatrix ExprMatrix::from_values(const Matrix& values) {
  ExprMatrix m(static_cast<std::size_t>(values.rows()), static_cast<std::size_t>(values.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      m(i, j) = Expr::constant(values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return m;
}

std::vector<Expr> ExprMatrix::column(std::size_t j) const {
  std::vector<Expr> col(rows_);
  for (std::size_t i = 0; i < rows_; ++i) col[i] = (*this)(i, j);
  return col;
}

Matrix ExprMatrix::evaluate(std::span<const double> at) const {
  Matrix m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = derivkit::evaluate((*this)(i, j), at);
    }
  }
  return m;
}

ExprMatrix ExprMatrix::simplified() const {
  ExprMatrix m(rows_, cols_);
  for (std::size_t k = 0; k < entries_.size(); ++k) m.entries_[k] = simplify(entries_[k]);
  return m;
}

bool ExprMatrix::is_constant() const {
  for (const auto& e : entries_) {
    if (!e.constant_value()) return false;
  }
  return true;
}

ExprMatrix operator*(const ExprMatrix& a, const ExprMatrix& b) {
  if (a.cols() != b.rows()) throw InputError("matrix shape mismatch in product");
  ExprMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      Expr sum;
      for (std::size_t k = 0; k < a.cols(); ++k) sum = sum + a(i, k) * b(k, j);
      c(i, j) = sum;
    }
  }
  return c;
}

ExprMatrix operator+(const ExprMatrix& a, const ExprMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("matrix shape mismatch in sum");
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + b(i, j);
  }
  return c;
}

ExprMatrix operator-(const ExprMatrix& a, const ExprMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("matrix shape mismatch in difference");
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
  }
  return c;
}

ExprMatrix operator*(const Expr& s, const ExprMatrix& m) {
  ExprMatrix c(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) c(i, j) = s * m(i, j);
  }
  return c;
}

namespace {

ExprMatrix minor_of(const ExprMatrix& m, std::size_t row, std::size_t col) {
  const std::size_t n = m.rows();
  ExprMatrix sub(n - 1, n - 1);
  for (std::size_t i = 0, si = 0; i < n; ++i) {
    if (i == row) continue;
    for (std::size_t j = 0, sj = 0; j < n; ++j) {
      if (j == col) continue;
      sub(si, sj++) = m(i, j);
    }
    ++si;
  }
  return sub;
}

}  // namespace

Expr determinant(const ExprMatrix& m) {
  if (m.rows() != m.cols()) throw InputError("determinant of a non-square matrix");
  const std::size_t n = m.rows();
  if (n == 0) return Expr::constant(1.0);
  if (n == 1) return m(0, 0);
  if (n == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Expr det;
  for (std::size_t j = 0; j < n; ++j) {
    if (m(0, j).is_zero()) continue;
    Expr term = m(0, j) * determinant(minor_of(m, 0, j));
    det = (j % 2 == 0) ? det + term : det - term;
  }
  return det;
}

ExprMatrix inverse(const ExprMatrix& m) {
  if (m.rows() != m.cols()) throw InputError("inverse of a non-square matrix");
  const std::size_t n = m.rows();
  if (n > 4) {
    if (!m.is_constant()) throw InputError("symbolic inverse is limited to n <= 4; larger frames must be constant");
    Matrix values = m.evaluate({});
    Eigen::FullPivLU<Matrix> lu(values);
    if (!lu.isInvertible()) throw DomainError("singular constant matrix");
    return ExprMatrix::from_values(lu.inverse());
  }
  const Expr det = simplify(determinant(m));
  if (det.is_zero()) throw DomainError("matrix is identically singular");
  ExprMatrix inv(n, n);
  if (n == 1) {
    inv(0, 0) = Expr::constant(1.0) / det;
    return inv;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // inv(i, j) = cofactor(j, i) / det
      Expr cof = determinant(minor_of(m, j, i));
      if ((i + j) % 2 == 1) cof = -cof;
      inv(i, j) = simplify(cof / det);
    }
  }
  return inv;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace derivkit
