#pragma once

// Fixtures and independent numeric oracles shared by the test binaries.

#include <cmath>
#include <algorithm>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "derivkit/curvature.hpp"
#include "derivkit/derivation.hpp"
#include "derivkit/expr.hpp"
#include "derivkit/geometry.hpp"

namespace fixtures {

using namespace derivkit;

inline ChartPtr chart(std::vector<std::string> names, std::vector<Interval> domain) {
  return std::make_shared<const Chart>(std::move(names), std::move(domain));
}

inline Expr parse(const std::string& text, const ChartPtr& c) { return parse_expr(text, c->symbols()); }

inline ExprMatrix parse_matrix(const std::vector<std::vector<std::string>>& rows, const ChartPtr& c,
                               bool vector_symbols = false) {
  const SymbolTable table = vector_symbols ? c->symbols().with_vector_symbols() : c->symbols();
  ExprMatrix m(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = parse_expr(rows[i][j], table);
  }
  return m;
}

// Connection from 1-based (i, j, k) -> text entries.
struct Entry {
  int i, j, k;
  std::string text;
};

inline Derivation connection(const FramePtr& frame, const std::vector<Entry>& entries) {
  const std::size_t n = frame->dimension();
  std::vector<Expr> gamma(n * n * n);
  for (const auto& e : entries) {
    gamma[((e.i - 1) * n + (e.j - 1)) * n + (e.k - 1)] = parse_expr(e.text, frame->chart().symbols());
  }
  return Derivation::connection(frame, std::move(gamma));
}

inline ChartPtr plane_chart() { return chart({"x1", "x2"}, {{-1.0, 1.0}, {-1.0, 1.0}}); }
inline ChartPtr polar_chart() { return chart({"r", "theta"}, {{1.0, 2.0}, {0.0, 1.0}}); }
inline ChartPtr sphere_chart() { return chart({"theta", "phi"}, {{0.5, 1.2}, {0.0, 1.0}}); }

inline Derivation zero_connection() { return connection(FrameField::coordinate(plane_chart()), {}); }

inline Derivation polar_connection(const FramePtr& frame) {
  return connection(frame, {{1, 2, 2, "-r"}, {2, 1, 2, "1/r"}, {2, 2, 1, "1/r"}});
}
inline Derivation polar_connection() { return polar_connection(FrameField::coordinate(polar_chart())); }

inline Derivation sphere_connection() {
  return connection(FrameField::coordinate(sphere_chart()),
                    {{1, 2, 2, "-sin(theta)*cos(theta)"}, {2, 1, 2, "cos(theta)/sin(theta)"},
                     {2, 2, 1, "cos(theta)/sin(theta)"}});
}

inline Derivation torsion_connection() { return connection(FrameField::coordinate(plane_chart()), {{1, 1, 2, "1"}}); }

inline Derivation lie_derivation() { return Derivation::lie(FrameField::coordinate(plane_chart())); }

// Orthonormal polar frame E_1 = d/dr, E_2 = (1/r) d/dtheta.
inline FramePtr orthonormal_polar_frame() {
  const ChartPtr c = polar_chart();
  return FrameField::create(c, parse_matrix({{"1", "0"}, {"0", "1/r"}}, c));
}

inline VectorField field(const FramePtr& frame, const std::vector<std::string>& comps) {
  VectorField v = VectorField::zero(frame);
  for (std::size_t i = 0; i < comps.size(); ++i) v.components[i] = parse_expr(comps[i], frame->chart().symbols());
  return v;
}

// ---------------------------------------------------------------------------
// Independent oracles.

using Fn = std::function<double(const std::vector<double>&)>;

// Central difference of f along coordinate a.
inline double partial(const Fn& f, std::vector<double> p, std::size_t a, double h = 1e-5) {
  const double x = p[a];
  p[a] = x + h;
  const double fp = f(p);
  p[a] = x - h;
  const double fm = f(p);
  return (fp - fm) / (2.0 * h);
}

// Levi-Civita connection of a diagonal metric given as functions, computed by
// finite differences: G^i_jk = 1/2 g^ii (d_j g_ik + d_k g_ij - d_i g_jk).
inline double christoffel_diagonal(const std::vector<Fn>& g, const std::vector<double>& p, std::size_t i,
                                   std::size_t j, std::size_t k) {
  auto gij = [&](std::size_t a, std::size_t b) -> Fn {
    if (a != b) return [](const std::vector<double>&) { return 0.0; };
    return g[a];
  };
  const double value =
      partial(gij(i, k), p, j) + partial(gij(i, j), p, k) - partial(gij(j, k), p, i);
  return 0.5 * value / g[i](p);
}

inline std::vector<double> evaluate_all(const std::vector<Expr>& es, const std::vector<double>& p) {
  std::vector<double> out;
  for (const auto& e : es) out.push_back(evaluate(e, p));
  return out;
}

inline double max_gap(const ExprMatrix& a, const ExprMatrix& b, const std::vector<Point>& points) {
  double worst = 0.0;
  for (const auto& p : points) worst = std::max(worst, max_abs(a.evaluate(p) - b.evaluate(p)));
  return worst;
}

inline double max_gap(const std::vector<Expr>& a, const std::vector<Expr>& b, const std::vector<Point>& points) {
  double worst = 0.0;
  for (const auto& p : points) {
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(evaluate(a[i], p) - evaluate(b[i], p)));
  }
  return worst;
}

inline Point domain_center(const Chart& c) {
  Point p;
  for (const auto& iv : c.domain()) p.push_back(0.5 * (iv.lo + iv.hi));
  return p;
}

// Probe pairs: all frame-vector pairs plus two seeded random polynomial pairs.
inline std::vector<std::pair<VectorField, VectorField>> probe_pairs(const FramePtr& frame, std::uint64_t seed = 42) {
  std::vector<std::pair<VectorField, VectorField>> pairs;
  const std::size_t n = frame->dimension();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      pairs.emplace_back(VectorField::frame_vector(frame, a), VectorField::frame_vector(frame, b));
    }
  }
  Rng rng(seed);
  const Point center = domain_center(frame->chart());
  for (int r = 0; r < 2; ++r) {
    VectorField x = random_polynomial_field(frame, center, rng);
    VectorField y = random_polynomial_field(frame, center, rng);
    pairs.emplace_back(std::move(x), std::move(y));
  }
  return pairs;
}

struct OracleGaps {
  double operator_vs_matrix = 0.0;
  double matrix_vs_tensor = 0.0;
  double operator_vs_tensor = 0.0;
  double worst() const { return std::max({operator_vs_matrix, matrix_vs_tensor, operator_vs_tensor}); }
};

// Curvature three ways: the operator D_X D_Y - D_Y D_X - D_[X,Y] applied to
// each frame vector E_j (column j), the matrix form, and for connections the
// contraction R^i_jkl X^k Y^l.
inline OracleGaps curvature_gaps(const Derivation& d, const std::vector<Point>& points) {
  OracleGaps gaps;
  const std::size_t n = d.dimension();
  const bool tensor = d.is_connection();
  const TensorField r = tensor ? curvature_tensor(d) : TensorField{};
  for (const auto& [x, y] : probe_pairs(d.frame())) {
    const ExprMatrix m = curvature_matrix(d, x, y);
    ExprMatrix op(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      const TensorField col =
          curvature_operator(d, x, y, TensorField::from_vector(VectorField::frame_vector(d.frame(), j)));
      for (std::size_t i = 0; i < n; ++i) op(i, j) = col.components[i];
    }
    gaps.operator_vs_matrix = std::max(gaps.operator_vs_matrix, max_gap(op, m, points));
    if (tensor) {
      const ExprMatrix c = contract_curvature(r, x, y);
      gaps.matrix_vs_tensor = std::max(gaps.matrix_vs_tensor, max_gap(m, c, points));
      gaps.operator_vs_tensor = std::max(gaps.operator_vs_tensor, max_gap(op, c, points));
    }
  }
  return gaps;
}

inline OracleGaps torsion_gaps(const Derivation& d, const std::vector<Point>& points) {
  OracleGaps gaps;
  const bool tensor = d.is_connection();
  const TensorField t = tensor ? torsion_tensor(d) : TensorField{};
  for (const auto& [x, y] : probe_pairs(d.frame())) {
    const auto v = torsion_vector(d, x, y).components;
    const auto op = torsion_operator(d, x, y).components;
    gaps.operator_vs_matrix = std::max(gaps.operator_vs_matrix, max_gap(op, v, points));
    if (tensor) {
      const auto c = contract_torsion(t, x, y).components;
      gaps.matrix_vs_tensor = std::max(gaps.matrix_vs_tensor, max_gap(v, c, points));
      gaps.operator_vs_tensor = std::max(gaps.operator_vs_tensor, max_gap(op, c, points));
    }
  }
  return gaps;
}

// Random expression over the first two coordinates of `table`.
inline Expr random_tree(Rng& rng, int depth, const SymbolTable& table) {
  const auto pick = [&](int n) { return static_cast<int>(rng.next() % static_cast<std::uint64_t>(n)); };
  if (depth == 0 || pick(4) == 0) {
    switch (pick(3)) {
      case 0:
        return Expr::symbol(table.coordinate(0));
      case 1:
        return Expr::symbol(table.coordinate(1));
      default:
        return Expr::constant(std::round(rng.uniform(0.0, 100.0)) / 8.0);
    }
  }
  switch (pick(7)) {
    case 0:
      return Expr::make_unary(Op::negate, random_tree(rng, depth - 1, table));
    case 1:
      return Expr::make_binary(Op::add, random_tree(rng, depth - 1, table), random_tree(rng, depth - 1, table));
    case 2:
      return Expr::make_binary(Op::subtract, random_tree(rng, depth - 1, table), random_tree(rng, depth - 1, table));
    case 3:
      return Expr::make_binary(Op::multiply, random_tree(rng, depth - 1, table), random_tree(rng, depth - 1, table));
    case 4:
      return Expr::make_binary(Op::divide, random_tree(rng, depth - 1, table), random_tree(rng, depth - 1, table));
    case 5:
      return Expr::make_binary(Op::power, random_tree(rng, depth - 1, table), Expr::constant(static_cast<double>(pick(3) + 1)));
    default:
      return Expr::make_function(static_cast<Function>(pick(8)), random_tree(rng, depth - 1, table));
  }
}

}  // namespace fixtures
