#pragma once

// Derivations D_X = L_X + S_X of the tensor algebra and their components
// (W_X)^i_j = (S_X)^i_j - E_j(X^i) + C^i_kj X^k in a frame.

#include <optional>
#include <string>
#include <vector>

#include "derivkit/geometry.hpp"

namespace derivkit {

inline constexpr double kLinearityTolerance = 1e-9;
inline constexpr std::size_t kLinearityPairs = 8;

class Derivation {
 public:
  enum class Kind { connection, lie, w_template, s_template };

  // gamma[(i * n + j) * n + k] = Gamma^i_jk, k the direction leg.
  static Derivation connection(FramePtr frame, std::vector<Expr> gamma);
  static Derivation lie(FramePtr frame);
  // Templates may reference coordinates, X1..Xn and dX[i,j] = E_j(X^i).
  static Derivation w_template(FramePtr frame, ExprMatrix w);
  static Derivation s_template(FramePtr frame, ExprMatrix s);

  Kind kind() const { return kind_; }
  bool is_connection() const { return kind_ == Kind::connection; }
  const FramePtr& frame() const { return frame_; }
  std::size_t dimension() const { return frame_->dimension(); }

  const std::vector<Expr>& gamma() const;
  const Expr& gamma(std::size_t i, std::size_t j, std::size_t k) const;
  const ExprMatrix& template_matrix() const { return template_; }

  // W_X as a matrix over coordinates, X1..Xn and dX[i,j]. Every variant is
  // reduced to this form.
  const ExprMatrix& component_template() const { return components_; }

 private:
  Derivation(Kind kind, FramePtr frame, std::vector<Expr> gamma, ExprMatrix templ);

  Kind kind_;
  FramePtr frame_;
  std::vector<Expr> gamma_;
  ExprMatrix template_;
  ExprMatrix components_;
};

// Connection coefficients at a point as n matrices, (gammas[k])^i_j = Gamma^i_jk.
using GammaMatrices = std::vector<Matrix>;

// W_X, simplified, over coordinates only.
ExprMatrix w_of(const Derivation& d, const VectorField& x);

// W_X at a point from the values X^k(p) and E_j(X^i)(p) (row-major i * n + j).
Matrix w_at(const Derivation& d, std::span<const double> p, std::span<const double> x_values,
            std::span<const double> dx_values);
Matrix w_at(const Derivation& d, const VectorField& x, std::span<const double> p);

// X(M) entrywise.
ExprMatrix directional_derivative(const VectorField& x, const ExprMatrix& m);

// A^-1 (W_X A + X(A)).
ExprMatrix transform_w(const ExprMatrix& w, const VectorField& x, const FrameTransform& a);

// The connection with components in the target frame of `a`.
Derivation transform_connection(const Derivation& d, const FrameTransform& a);

// W_{E_k'} in the target frame of `a`, for every target frame vector,
// evaluated at p. Works for every variant.
std::vector<Matrix> transformed_components_at(const Derivation& d, const FrameTransform& a,
                                              std::span<const double> p);

// Numeric version: given A(p) and the coordinate partials dA[alpha] =
// dA/dx^alpha at p, returns W'_{E_k'}(p) for every target frame vector.
// Valid for derivations that are linear connections near p.
std::vector<Matrix> transformed_components_numeric(const GammaMatrices& gamma_at_p, const Matrix& basis_at_p,
                                                   const Matrix& a, const std::vector<Matrix>& da);

// Eq. of the action on a (p,q) tensor: X(T) + W^{i_a}_k T(..k..) - W^k_{j_b} T(..k..).
TensorField apply_derivation(const Derivation& d, const VectorField& x, const TensorField& t);

// nabla_X Y - [X,Y] with (nabla_X Y)^i = X(Y^i) + Gamma^i_jk Y^j X^k.
VectorField connection_sigma(const Derivation& d, const VectorField& x, const VectorField& y);

// The S template S^i_j = Gamma^i_jk X^k + dX[i,j] - C^i_kj X^k, i.e. S_X(Y) =
// Sigma_X(Y) read as a function of the formal field X.
Derivation sigma_template(const Derivation& d);

Derivation symmetrize_connection(const Derivation& d);

// Gamma_k numerically at p: W_{E_k}(p).
GammaMatrices gamma_at(const Derivation& d, std::span<const double> p);

struct LinearityVerdict {
  bool linear = false;
  double residual = 0.0;
  std::string witness;
  // Gamma_k(x0), filled when linear.
  GammaMatrices gamma;
};

// Decides whether W_X(x0) = Gamma_k X^k(x0) for all X by probing:
//   (i)   fields vanishing at x0 must give W_X(x0) = 0;
//   (ii)  W_{aX+bY}(x0) = a W_X(x0) + b W_Y(x0) for 8 seeded random pairs;
//   (iii) W_X(x0) = Gamma_k X^k(x0) on the same random fields.
LinearityVerdict linearity_probe(const Derivation& d, std::span<const double> x0,
                                 std::uint64_t seed = kProbeSeed);

// Probe (i) only, at every chart sample point. This is the reading of
// "D_X = 0 whenever X = 0" used by the neighborhood constructions.
Verdict vanishes_on_vanishing_fields(const Derivation& d, std::uint64_t seed = kProbeSeed);

// Seeded random field with polynomial components of degree <= 2 in (x - center).
VectorField random_polynomial_field(const FramePtr& frame, std::span<const double> center, Rng& rng);

}  // namespace derivkit
