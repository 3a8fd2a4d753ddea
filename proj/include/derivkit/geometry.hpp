#pragma once

// Charts, frame fields E_i = B^a_i d/dx^a, vector and tensor fields expressed
// in a frame, and the anholonomy object [E_j, E_k] = C^i_jk E_i.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "derivkit/expr.hpp"
#include "derivkit/expr_matrix.hpp"
#include "derivkit/sampling.hpp"

namespace derivkit {

inline constexpr std::size_t kIdentitySamples = 64;
inline constexpr double kIdentityThreshold = 1e-10;
inline constexpr double kDegenerateDeterminant = 1e-12;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// A boolean decision together with the residual it was decided on.
struct Verdict {
  bool holds = false;
  double residual = 0.0;
  std::string witness;
};

class Chart {
 public:
  Chart(std::vector<std::string> coordinates, std::vector<Interval> domain);

  std::size_t dimension() const { return symbols_.dimension(); }
  const std::vector<std::string>& coordinate_names() const { return symbols_.coordinates(); }
  const std::vector<Interval>& domain() const { return domain_; }
  const SymbolTable& symbols() const { return symbols_; }
  Expr coordinate(std::size_t i) const { return Expr::symbol(symbols_.coordinate(i)); }

  bool contains(std::span<const double> p, double tolerance = 0.0) const;

  // Deterministic pseudo-random points in the domain box.
  std::vector<Point> samples(std::size_t count = kIdentitySamples, std::uint64_t seed = kSampleSeed) const;

 private:
  SymbolTable symbols_;
  std::vector<Interval> domain_;
};

using ChartPtr = std::shared_ptr<const Chart>;

// C^i_jk with i the output index; stored flat as (i * n + j) * n + k.
class AnholonomyObject {
 public:
  AnholonomyObject() = default;
  AnholonomyObject(std::size_t n, std::vector<Expr> coefficients) : n_(n), c_(std::move(coefficients)) {}

  std::size_t dimension() const { return n_; }
  const Expr& operator()(std::size_t i, std::size_t j, std::size_t k) const { return c_[(i * n_ + j) * n_ + k]; }
  const std::vector<Expr>& coefficients() const { return c_; }

 private:
  std::size_t n_ = 0;
  std::vector<Expr> c_;
};

class FrameField;
using FramePtr = std::shared_ptr<const FrameField>;

class FrameField {
 public:
  static FramePtr coordinate(ChartPtr chart);
  // Throws DomainError if |det B| <= 1e-12 at any sample point.
  static FramePtr create(ChartPtr chart, ExprMatrix basis);

  const Chart& chart() const { return *chart_; }
  const ChartPtr& chart_ptr() const { return chart_; }
  std::size_t dimension() const { return chart_->dimension(); }

  // B^a_i: row a is the coordinate index, column i the frame index.
  const ExprMatrix& basis() const { return basis_; }
  // B^i_a.
  const ExprMatrix& inverse() const { return inverse_; }
  bool is_coordinate() const { return coordinate_; }
  const AnholonomyObject& anholonomy() const { return anholonomy_; }

 private:
  FrameField(ChartPtr chart, ExprMatrix basis, ExprMatrix inverse, bool coordinate);

  ChartPtr chart_;
  ExprMatrix basis_;
  ExprMatrix inverse_;
  bool coordinate_;
  AnholonomyObject anholonomy_;
};

// Same coordinate names and domain box.
bool same_chart(const Chart& a, const Chart& b);
// Same chart and structurally equal basis.
bool same_frame(const FramePtr& a, const FramePtr& b);

// E_i(f) = B^a_i df/dx^a.
Expr frame_derivative(const FrameField& frame, std::size_t i, const Expr& f);

AnholonomyObject anholonomy_coefficients(const FrameField& frame);

struct VectorField {
  FramePtr frame;
  std::vector<Expr> components;

  static VectorField zero(FramePtr frame);
  // E_k expressed in its own frame: components delta^i_k.
  static VectorField frame_vector(FramePtr frame, std::size_t k);
  // d/dx^a expressed in `frame`: components B^i_a.
  static VectorField coordinate_vector(FramePtr frame, std::size_t a);

  std::size_t dimension() const { return components.size(); }
  std::vector<double> evaluate(std::span<const double> at) const;
  // B^a_i X^i.
  std::vector<Expr> coordinate_components() const;
};

VectorField operator+(const VectorField& x, const VectorField& y);
VectorField operator-(const VectorField& x, const VectorField& y);
VectorField operator*(const Expr& f, const VectorField& x);

// X(f) = X^k E_k(f).
Expr directional_derivative(const VectorField& x, const Expr& f);

// [X,Y]^i = X(Y^i) - Y(X^i) + C^i_jk X^j Y^k.
VectorField commutator(const VectorField& x, const VectorField& y);

// Components T^{i1..ip}_{j1..jq}, upper indices first, row-major.
struct TensorField {
  FramePtr frame;
  std::size_t upper = 0;
  std::size_t lower = 0;
  std::vector<Expr> components;

  static TensorField scalar(FramePtr frame, Expr f);
  static TensorField from_vector(const VectorField& v);
  static TensorField zero(FramePtr frame, std::size_t upper, std::size_t lower);

  std::size_t rank() const { return upper + lower; }
  std::size_t flat_index(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> multi_index(std::size_t flat) const;
};

// E_i' = A^i_i' E_i. The target frame has basis B A.
struct FrameTransform {
  FramePtr source;
  ExprMatrix matrix;

  FramePtr target() const;
  ExprMatrix inverse() const;
};

// X^i' = (A^-1)^i'_i X^i, returned in the target frame.
VectorField change_vector_frame(const VectorField& x, const FrameTransform& a);

// Max |e| over the chart's sample points.
Verdict vanishes_identically(std::span<const Expr> exprs, const Chart& chart,
                             double threshold = kIdentityThreshold);

}  // namespace derivkit
