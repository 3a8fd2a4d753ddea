#pragma once

// Curvature and torsion of a derivation, in matrix/component form and as
// brute-force operator evaluations built on apply_derivation.

#include <vector>

#include "derivkit/derivation.hpp"

namespace derivkit {

inline constexpr std::size_t kRandomProbeFields = 4;

// R(X,Y) = X(W_Y) - Y(W_X) + W_X W_Y - W_Y W_X - W_[X,Y].
ExprMatrix curvature_matrix(const Derivation& d, const VectorField& x, const VectorField& y);

// T(X,Y)^i = W_X^i_l Y^l - W_Y^i_l X^l - C^i_kl X^k Y^l.
VectorField torsion_vector(const Derivation& d, const VectorField& x, const VectorField& y);

// R^i_jkl = -E_l(G^i_jk) + E_k(G^i_jl) - G^m_jk G^i_ml + G^m_jl G^i_mk - G^i_jm C^m_kl,
// stored with indices (i, j, k, l). R(X,Y)^i_j = R^i_jkl X^k Y^l.
TensorField curvature_tensor(const Derivation& d);

// T^i_kl = -(G^i_kl - G^i_lk) - C^i_kl, stored (i, k, l).
TensorField torsion_tensor(const Derivation& d);

// R^i_jkl X^k Y^l as a matrix.
ExprMatrix contract_curvature(const TensorField& r, const VectorField& x, const VectorField& y);
VectorField contract_torsion(const TensorField& t, const VectorField& x, const VectorField& y);

// D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z.
TensorField curvature_operator(const Derivation& d, const VectorField& x, const VectorField& y,
                               const TensorField& z);
// D_X Y - D_Y X - [X,Y].
VectorField torsion_operator(const Derivation& d, const VectorField& x, const VectorField& y);

struct IntegrabilityReport {
  // max over sample points of |[X,Y](A) + (R(X,Y) + W_[X,Y]) A|
  double residual = 0.0;
  // max |R(X,Y)| over the same points, independent of A
  double obstruction = 0.0;
};

IntegrabilityReport integrability_residual(const Derivation& d, const VectorField& x, const VectorField& y,
                                           const FrameTransform& a, const std::vector<Point>& points);

// max |R(E_a, E_b)| over frame-vector pairs at the given points.
double curvature_obstruction(const Derivation& d, const std::vector<Point>& points);

// Connections: identity test of the curvature (torsion) tensor. Other
// derivations: identity test of the matrix form over frame-vector pairs and
// pairs drawn from 4 seeded random polynomial fields.
Verdict is_flat(const Derivation& d, std::uint64_t seed = kProbeSeed);
Verdict is_torsion_free(const Derivation& d, std::uint64_t seed = kProbeSeed);

}  // namespace derivkit
