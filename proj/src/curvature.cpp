#include "derivkit/curvature.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "derivkit/error.hpp"

namespace derivkit {

namespace {

void require_connection(const Derivation& d) {
  if (!d.is_connection()) throw InputError("operation requires a linear connection");
}

std::vector<Expr> entries(const ExprMatrix& m) {
  std::vector<Expr> out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

std::vector<VectorField> probe_fields(const Derivation& d, std::uint64_t seed) {
  const FramePtr& frame = d.frame();
  std::vector<VectorField> fields;
  for (std::size_t k = 0; k < d.dimension(); ++k) fields.push_back(VectorField::frame_vector(frame, k));
  Point center;
  for (const auto& iv : frame->chart().domain()) center.push_back(0.5 * (iv.lo + iv.hi));
  Rng rng(seed);
  for (std::size_t r = 0; r < kRandomProbeFields; ++r) fields.push_back(random_polynomial_field(frame, center, rng));
  return fields;
}

}  // namespace

ExprMatrix curvature_matrix(const Derivation& d, const VectorField& x, const VectorField& y) {
  const ExprMatrix wx = w_of(d, x);
  const ExprMatrix wy = w_of(d, y);
  const ExprMatrix wxy = w_of(d, commutator(x, y));
  return (directional_derivative(x, wy) - directional_derivative(y, wx) + wx * wy - wy * wx - wxy).simplified();
}

VectorField torsion_vector(const Derivation& d, const VectorField& x, const VectorField& y) {
  const std::size_t n = d.dimension();
  const ExprMatrix wx = w_of(d, x);
  const ExprMatrix wy = w_of(d, y);
  const auto& c = d.frame()->anholonomy();
  VectorField t = VectorField::zero(d.frame());
  for (std::size_t i = 0; i < n; ++i) {
    Expr sum;
    for (std::size_t l = 0; l < n; ++l) sum = sum + wx(i, l) * y.components[l] - wy(i, l) * x.components[l];
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < n; ++l) {
        if (!c(i, k, l).is_zero()) sum = sum - c(i, k, l) * x.components[k] * y.components[l];
      }
    }
    t.components[i] = simplify(sum);
  }
  return t;
}

TensorField curvature_tensor(const Derivation& d) {
  require_connection(d);
  const std::size_t n = d.dimension();
  const FrameField& frame = *d.frame();
  const auto& c = frame.anholonomy();
  TensorField r = TensorField::zero(d.frame(), 1, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
          Expr sum = frame_derivative(frame, k, d.gamma(i, j, l)) - frame_derivative(frame, l, d.gamma(i, j, k));
          for (std::size_t m = 0; m < n; ++m) {
            sum = sum - d.gamma(m, j, k) * d.gamma(i, m, l) + d.gamma(m, j, l) * d.gamma(i, m, k) -
                  d.gamma(i, j, m) * c(m, k, l);
          }
          const std::array<std::size_t, 4> idx{i, j, k, l};
          r.components[r.flat_index(idx)] = simplify(sum);
        }
      }
    }
  }
  return r;
}

TensorField torsion_tensor(const Derivation& d) {
  require_connection(d);
  const std::size_t n = d.dimension();
  const auto& c = d.frame()->anholonomy();
  TensorField t = TensorField::zero(d.frame(), 1, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < n; ++l) {
        const std::array<std::size_t, 3> idx{i, k, l};
        t.components[t.flat_index(idx)] = simplify(-(d.gamma(i, k, l) - d.gamma(i, l, k)) - c(i, k, l));
      }
    }
  }
  return t;
}

ExprMatrix contract_curvature(const TensorField& r, const VectorField& x, const VectorField& y) {
  const std::size_t n = x.dimension();
  ExprMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Expr sum;
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
          const std::array<std::size_t, 4> idx{i, j, k, l};
          const Expr& rijkl = r.components[r.flat_index(idx)];
          if (!rijkl.is_zero()) sum = sum + rijkl * x.components[k] * y.components[l];
        }
      }
      m(i, j) = simplify(sum);
    }
  }
  return m;
}

VectorField contract_torsion(const TensorField& t, const VectorField& x, const VectorField& y) {
  const std::size_t n = x.dimension();
  VectorField v = VectorField::zero(x.frame);
  for (std::size_t i = 0; i < n; ++i) {
    Expr sum;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < n; ++l) {
        const std::array<std::size_t, 3> idx{i, k, l};
        const Expr& tikl = t.components[t.flat_index(idx)];
        if (!tikl.is_zero()) sum = sum + tikl * x.components[k] * y.components[l];
      }
    }
    v.components[i] = simplify(sum);
  }
  return v;
}

TensorField curvature_operator(const Derivation& d, const VectorField& x, const VectorField& y,
                               const TensorField& z) {
  const TensorField xy = apply_derivation(d, x, apply_derivation(d, y, z));
  const TensorField yx = apply_derivation(d, y, apply_derivation(d, x, z));
  const TensorField bracket = apply_derivation(d, commutator(x, y), z);
  TensorField out = TensorField::zero(z.frame, z.upper, z.lower);
  for (std::size_t f = 0; f < out.components.size(); ++f) {
    out.components[f] = simplify(xy.components[f] - yx.components[f] - bracket.components[f]);
  }
  return out;
}

VectorField torsion_operator(const Derivation& d, const VectorField& x, const VectorField& y) {
  const TensorField dxy = apply_derivation(d, x, TensorField::from_vector(y));
  const TensorField dyx = apply_derivation(d, y, TensorField::from_vector(x));
  const VectorField bracket = commutator(x, y);
  VectorField out = VectorField::zero(x.frame);
  for (std::size_t i = 0; i < out.dimension(); ++i) {
    out.components[i] = simplify(dxy.components[i] - dyx.components[i] - bracket.components[i]);
  }
  return out;
}

IntegrabilityReport integrability_residual(const Derivation& d, const VectorField& x, const VectorField& y,
                                           const FrameTransform& a, const std::vector<Point>& points) {
  const VectorField bracket = commutator(x, y);
  const ExprMatrix r = curvature_matrix(d, x, y);
  const ExprMatrix wb = w_of(d, bracket);
  const ExprMatrix residual = (directional_derivative(bracket, a.matrix) + (r + wb) * a.matrix).simplified();
  IntegrabilityReport report;
  for (const auto& p : points) {
    const Matrix av = a.matrix.evaluate(p);
    if (!(std::abs(av.determinant()) > kDegenerateDeterminant)) throw DomainError("frame transform is singular at a sample point");
    report.residual = std::max(report.residual, max_abs(residual.evaluate(p)));
    report.obstruction = std::max(report.obstruction, max_abs(r.evaluate(p)));
  }
  return report;
}

double curvature_obstruction(const Derivation& d, const std::vector<Point>& points) {
  const std::size_t n = d.dimension();
  double worst = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const ExprMatrix r = curvature_matrix(d, VectorField::frame_vector(d.frame(), a),
                                            VectorField::frame_vector(d.frame(), b));
      for (const auto& p : points) worst = std::max(worst, max_abs(r.evaluate(p)));
    }
  }
  return worst;
}

Verdict is_flat(const Derivation& d, std::uint64_t seed) {
  const Chart& chart = d.frame()->chart();
  if (d.is_connection()) return vanishes_identically(curvature_tensor(d).components, chart);
  const auto fields = probe_fields(d, seed);
  std::vector<Expr> all;
  for (std::size_t a = 0; a < fields.size(); ++a) {
    for (std::size_t b = a + 1; b < fields.size(); ++b) {
      const auto e = entries(curvature_matrix(d, fields[a], fields[b]));
      all.insert(all.end(), e.begin(), e.end());
    }
  }
  return vanishes_identically(all, chart);
}

Verdict is_torsion_free(const Derivation& d, std::uint64_t seed) {
  const Chart& chart = d.frame()->chart();
  if (d.is_connection()) return vanishes_identically(torsion_tensor(d).components, chart);
  const auto fields = probe_fields(d, seed);
  std::vector<Expr> all;
  for (std::size_t a = 0; a < fields.size(); ++a) {
    for (std::size_t b = a + 1; b < fields.size(); ++b) {
      const auto t = torsion_vector(d, fields[a], fields[b]);
      all.insert(all.end(), t.components.begin(), t.components.end());
    }
  }
  return vanishes_identically(all, chart);
}

}  // namespace derivkit
