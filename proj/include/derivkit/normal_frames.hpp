#pragma once

// Frames in which the components of a derivation vanish: at a point, along an
// integral curve, or on a lattice covering the chart's domain box. Every
// constructor re-checks its output through the transformation law.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "derivkit/curvature.hpp"
#include "derivkit/derivation.hpp"

namespace derivkit {

inline constexpr double kDefaultStep = 1e-3;
inline constexpr double kPointTolerance = 1e-10;
inline constexpr double kGridTolerance = 1e-6;
inline constexpr double kIntegralCurveTolerance = 1e-6;
inline constexpr double kTorsionIdentityTolerance = 1e-8;

// A maximum together with where it occurs: a curve segment or a lattice node.
struct LocatedResidual {
  double value = 0.0;
  std::size_t location = 0;
};

// Integrates dA/dt = -G(t) A from t0 to t1 in `steps` classical RK4 steps.
Matrix integrate_linear(const std::function<Matrix(double)>& g, Matrix a, double t0, double t1, std::size_t steps);

// The connection whose coefficients are G^i_jk = (W_{E_k})^i_j. Agrees with `d`
// wherever `d` is a linear connection.
Derivation as_connection(const Derivation& d);

// ---------------------------------------------------------------------------
// Point constructions.

struct PointFrameSpec {
  Point x0;
  // a^j_j'k stored at (j * n + j') * n + k. Empty: derived from `anchor` so
  // that A(x0) = anchor.
  std::vector<double> seed;
  // Target value A(x0); empty means the identity.
  Matrix anchor;
  // Constant b_ab (n*n matrices, index a * n + b) of the free quadratic term
  // b_ab (x^a - x0^a)(x^b - x0^b). Empty means zero.
  std::vector<Matrix> quadratic;
};

struct PointFrame {
  FrameTransform transform;
  Point x0;
  // max |W'(x0)| recomputed through the transformation law.
  double residual = 0.0;
};

// A = a X(x0) - a W_X(x0) B(x0)(x - x0) + quadratic, making W'_X(x0) = 0.
// X(x0) = 0 with W_X(x0) != 0 throws ExistenceError; X(x0) = 0 with
// W_X(x0) = 0 returns the constant anchor.
PointFrame frame_at_point_general(const Derivation& d, const VectorField& x, const PointFrameSpec& spec);

// Second derivatives E_k'(A^j_j')|x0 indexed [j](k', j'), with the largest
// violation of symmetry in (k', j').
struct Certificate {
  std::vector<Matrix> entries;
  double asymmetry = 0.0;
};

// -(a^k_k'm X^m)(a^l_j'k W^j_l) for an arbitrary seed.
Certificate seed_certificate(const std::vector<double>& seed, std::span<const double> x_at_x0, const Matrix& w_at_x0);

// a^k_k'm = a_k' a^k_m.
std::vector<double> factorized_seed(std::span<const double> a_prime, const Matrix& a);

struct HolonomicPointFrame {
  PointFrame frame;
  Certificate certificate;
  // max |[E_i', E_j'](x0)| in the new frame.
  double anholonomy = 0.0;
};

// A point frame whose first derivatives at x0 are chosen so that the new
// frame vectors commute at x0. Built from an invertible anchor (spec.anchor),
// not from a factorized seed, since a^k_k'm = a_k' a^k_m makes A(x0) rank one.
HolonomicPointFrame frame_at_point_holonomic(const Derivation& d, const VectorField& x, const PointFrameSpec& spec);

// A(y) = B - Gamma_k B B^k_a(x0)(x^a - x0^a) + quadratic; all components of
// d vanish at x0 in the new frame. Requires d to be linear at x0.
PointFrame frame_at_point_connection(const Derivation& d, const PointFrameSpec& spec);

struct ShellGrowth {
  double near = 0.0;
  double far = 0.0;
  double ratio = 0.0;
};

// max |W'| over points at coordinate distance h from x0, for h_far and h_near.
ShellGrowth shell_growth(const Derivation& d, const FrameTransform& a, const Point& x0, double h_far = 1e-2,
                         double h_near = 1e-3);

// ---------------------------------------------------------------------------
// Curves.

struct CurveSpec {
  // Coordinates as expressions in the parameter `s`.
  std::vector<Expr> coordinates;
  Interval interval;
  double s0 = 0.0;
};

// The symbol table curve expressions are parsed against.
const SymbolTable& curve_symbols();

struct CurveFrame {
  std::vector<double> s;
  std::vector<Point> points;
  std::vector<Matrix> matrices;
  std::size_t base = 0;
  double integral_curve_residual = 0.0;
  // max over interior nodes of |(A(s+h) - A(s-h))/2h + W_X A|.
  double directional_residual = 0.0;
};

// Solves dA/ds = -W_X(gamma(s)) A, A(s0) = b0 with fixed-step RK4.
CurveFrame transport_along_curve(const Derivation& d, const VectorField& x, const CurveSpec& curve, const Matrix& b0,
                                 double step = kDefaultStep);

// max over segments of |A_i^-1 (A_{i+1} - Phi_i A_i)| / ds where Phi_i is an
// independent fine-step propagator of the segment.
LocatedResidual curve_component_residual(const Derivation& d, const VectorField& x, const CurveSpec& curve,
                                         const std::vector<double>& s, const std::vector<Matrix>& matrices);

// ---------------------------------------------------------------------------
// Lattices.

struct Lattice {
  std::vector<Interval> box;
  std::vector<std::size_t> counts;

  static Lattice over(const Chart& chart, std::vector<std::size_t> counts);
  std::size_t dimension() const { return counts.size(); }
  std::size_t size() const;
  double spacing(std::size_t axis) const;
  std::size_t flat(std::span<const std::size_t> index) const;
  std::vector<std::size_t> index(std::size_t flat) const;
  Point node(std::span<const std::size_t> index) const;
};

struct GridFrame {
  Lattice lattice;
  std::vector<std::size_t> base;
  // One matrix per node, row-major node order (last axis fastest).
  std::vector<Matrix> matrices;
  double path_discrepancy = 0.0;
  double component_residual = 0.0;

  const Matrix& at(std::span<const std::size_t> index) const { return matrices[lattice.flat(index)]; }
};

struct FlatFrameOptions {
  double step = kDefaultStep;
  std::size_t audit_nodes = 10;
  std::uint64_t seed = kProbeSeed;
  // Lattice index of the basepoint; empty means the lower corner.
  std::vector<std::size_t> base;
};

// Integrates E(A) = -W_E A along axis-ordered polylines from the basepoint.
// Throws ExistenceError if d is not a linear connection on the domain and
// FlatnessError (with the curvature obstruction) if it is not flat.
GridFrame flat_frame_neighborhood(const Derivation& d, const Lattice& lattice, const Matrix& b0,
                                  const FlatFrameOptions& options = {});

// max over lattice edges of the transformed components, estimated from the
// defect between the stored matrices and an independent fine-step propagator
// along the edge.
LocatedResidual grid_component_residual(const Derivation& d, const Lattice& lattice,
                                        const std::vector<Matrix>& matrices, double step = kDefaultStep);

// ---------------------------------------------------------------------------
// Holonomicity and constancy.

struct HolonomicityReport {
  bool holonomic = false;
  double commutator = 0.0;
  double tolerance = 0.0;
  // C'^i_jk of the new frame at the checked locus (the point, or the node
  // with the largest commutator), index (i * n + j) * n + k.
  std::vector<double> anholonomy;
  // |T(E_i', E_j') + [E_i', E_j']| at the locus when a derivation is given.
  std::optional<double> torsion_identity;
};

HolonomicityReport holonomicity_at_point(const FrameTransform& a, const Point& x0, const Derivation* d = nullptr);

// Centered fourth-order differences on the lattice (one-sided at the edges).
// With `node` set, only that node is examined.
HolonomicityReport holonomicity_on_grid(const GridFrame& g, const FrameField& source, const Derivation* d = nullptr,
                                        std::optional<std::vector<std::size_t>> node = std::nullopt);

struct ConstancyReport {
  bool constant = false;
  double deviation = 0.0;
  Matrix relating;
  // Point case: max |A12(x) - A12(x0)| at coordinate distance 1e-2.
  double far_deviation = 0.0;
};

// A12 = A1^-1 A2 across the lattice.
ConstancyReport constancy_on_grid(const Derivation& d, const GridFrame& f1, const GridFrame& f2);

// E_i'(A12)|x0 for the frame vectors of the first frame.
ConstancyReport constancy_at_point(const Derivation& d, const FrameTransform& a1, const FrameTransform& a2,
                                   const Point& x0);

}  // namespace derivkit
