#include <doctest.h>

#include <cmath>
#include <numbers>

#include "derivkit/error.hpp"
#include "derivkit/normal_frames.hpp"
#include "support.hpp"

using namespace derivkit;
using namespace fixtures;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// One-dimensional chart with constant coefficient Gamma^1_11 = -z.
Derivation constant_line(double z) {
  const ChartPtr c = chart({"x"}, {{0.0, 2.0}});
  return Derivation::connection(FrameField::coordinate(c), {Expr::constant(-z)});
}

CurveSpec line_curve(double s0) {
  return CurveSpec{{parse_expr("s", curve_symbols())}, {0.0, 2.0}, s0};
}

// Closed form: Cartesian frame d/dx, d/dy in polar components, equal to the
// identity at (r, theta) = (1, 0).
Matrix cartesian_in_polar(const Point& p) {
  const double r = p[0], t = p[1];
  return mat({{std::cos(t), std::sin(t)}, {-std::sin(t) / r, std::cos(t) / r}});
}

double max_point_residual(const Derivation& d, const FrameTransform& a, const Point& x0) {
  double worst = 0.0;
  for (const auto& w : transformed_components_at(d, a, x0)) worst = std::max(worst, max_abs(w));
  return worst;
}

}  // namespace

TEST_CASE("rk4 integrator matches the exponential") {
  const double z = 0.8;
  const auto g = [&](double) { return mat({{z}}); };
  const Matrix a = integrate_linear(g, mat({{1.0}}), 0.0, 1.0, 100);
  CHECK(std::abs(a(0, 0) - std::exp(-z)) <= 1e-10);
  const Matrix back = integrate_linear(g, a, 1.0, 0.0, 100);
  CHECK(std::abs(back(0, 0) - 1.0) <= 1e-10);
}

TEST_CASE("transport along a line for a constant coefficient is an exponential") {
  const double z = 0.7;
  const Derivation d = constant_line(z);
  const VectorField x = VectorField::frame_vector(d.frame(), 0);
  const CurveSpec curve = line_curve(0.5);
  const CurveFrame f = transport_along_curve(d, x, curve, mat({{1.0}}));
  CHECK(f.s.front() == 0.0);
  CHECK(f.s.back() == 2.0);
  CHECK(f.s[f.base] == 0.5);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.s.size(); ++i) {
    worst = std::max(worst, std::abs(f.matrices[i](0, 0) - std::exp(z * (f.s[i] - 0.5))));
  }
  CHECK(worst <= 1e-10);
  CHECK(f.integral_curve_residual <= 1e-12);
  CHECK(f.directional_residual <= 1e-6);
  CHECK(curve_component_residual(d, x, curve, f.s, f.matrices).value <= 1e-9);

  auto corrupted = f.matrices;
  corrupted[corrupted.size() / 3](0, 0) += 0.1;
  CHECK(curve_component_residual(d, x, curve, f.s, corrupted).value > 1.0);
}

TEST_CASE("transport is fourth order in the step") {
  const double z = 0.7;
  const Derivation d = constant_line(z);
  const VectorField x = VectorField::frame_vector(d.frame(), 0);
  const CurveSpec curve = line_curve(0.0);
  auto error = [&](double h) {
    const CurveFrame f = transport_along_curve(d, x, curve, mat({{1.0}}), h);
    return std::abs(f.matrices.back()(0, 0) - std::exp(z * 2.0));
  };
  const double ratio = error(0.1) / error(0.05);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("transport rejects curves that are not integral curves or leave the domain") {
  const Derivation d = constant_line(0.3);
  const VectorField x = VectorField::frame_vector(d.frame(), 0);
  CurveSpec off{{parse_expr("2*s", curve_symbols())}, {0.0, 0.5}, 0.0};
  CHECK_THROWS_AS(transport_along_curve(d, x, off, mat({{1.0}})), InputError);
  CurveSpec outside{{parse_expr("s + 1.5", curve_symbols())}, {0.0, 1.0}, 0.0};
  CHECK_THROWS_AS(transport_along_curve(d, x, outside, mat({{1.0}})), DomainError);
}

TEST_CASE("flat frame for the polar connection is the Cartesian frame") {
  const Derivation d = polar_connection();
  const Lattice lattice = Lattice::over(d.frame()->chart(), {11, 11});
  const GridFrame g = flat_frame_neighborhood(d, lattice, Matrix::Identity(2, 2));
  double worst = 0.0;
  for (std::size_t f = 0; f < lattice.size(); ++f) {
    const Point p = lattice.node(lattice.index(f));
    worst = std::max(worst, max_abs(Matrix(g.matrices[f] - cartesian_in_polar(p))));
  }
  CHECK(worst <= 1e-9);
  CHECK(g.path_discrepancy <= 1e-6);
  CHECK(g.component_residual <= 1e-6);

  const HolonomicityReport h = holonomicity_on_grid(g, *d.frame());
  CHECK(h.holonomic);
  CHECK(h.commutator <= h.tolerance);
}

TEST_CASE("flat frame with an interior basepoint") {
  const Derivation d = polar_connection();
  const Lattice lattice = Lattice::over(d.frame()->chart(), {9, 9});
  FlatFrameOptions options;
  options.base = {4, 4};
  const Matrix b0 = mat({{2.0, 1.0}, {0.0, 1.0}});
  const GridFrame g = flat_frame_neighborhood(d, lattice, b0, options);
  CHECK(max_abs(Matrix(g.at(options.base) - b0)) == 0.0);
  const Point base = lattice.node(options.base);
  // A(p) = C(p) C(base)^-1 b0 for the Cartesian frame C.
  const Matrix shift = cartesian_in_polar(base).inverse() * b0;
  double worst = 0.0;
  for (std::size_t f = 0; f < lattice.size(); ++f) {
    const Point p = lattice.node(lattice.index(f));
    worst = std::max(worst, max_abs(Matrix(g.matrices[f] - cartesian_in_polar(p) * shift)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("flat frame with torsion is an exponential and is anholonomic") {
  const Derivation d = torsion_connection();
  const Lattice lattice = Lattice::over(d.frame()->chart(), {9, 9});
  const Matrix b0 = mat({{1.0, 0.5}, {0.0, 2.0}});
  const GridFrame g = flat_frame_neighborhood(d, lattice, b0);
  double worst = 0.0;
  for (std::size_t f = 0; f < lattice.size(); ++f) {
    const Point p = lattice.node(lattice.index(f));
    const Matrix expected = mat({{std::exp(-(p[1] + 1.0)), 0.0}, {0.0, 1.0}}) * b0;
    worst = std::max(worst, max_abs(Matrix(g.matrices[f] - expected)));
  }
  CHECK(worst <= 1e-9);
  CHECK(g.component_residual <= 1e-6);

  const HolonomicityReport h = holonomicity_on_grid(g, *d.frame(), &d);
  CHECK_FALSE(h.holonomic);
  CHECK(h.torsion_identity.has_value());
  CHECK(*h.torsion_identity <= h.tolerance);
}

TEST_CASE("torsion equals minus the commutator on a fine local lattice") {
  const Derivation d = torsion_connection();
  Lattice lattice{{{0.1, 0.106}, {0.2, 0.206}}, {7, 7}};
  const GridFrame g = flat_frame_neighborhood(d, lattice, Matrix::Identity(2, 2), FlatFrameOptions{.base = {3, 3}});
  const HolonomicityReport h = holonomicity_on_grid(g, *d.frame(), &d, std::vector<std::size_t>{3, 3});
  CHECK(*h.torsion_identity <= 1e-8);
  // [E_1', E_2'] = E_1' for A = diag(exp(-(x2 - b2)), 1).
  CHECK(std::abs(h.anholonomy[(0 * 2 + 0) * 2 + 1] - 1.0) <= 1e-8);
}

TEST_CASE("grid verifier and coarse-grid guard") {
  const Derivation d = polar_connection();
  const Lattice lattice = Lattice::over(d.frame()->chart(), {6, 6});
  const GridFrame g = flat_frame_neighborhood(d, lattice, Matrix::Identity(2, 2));
  auto corrupted = g.matrices;
  corrupted[7](0, 1) += 0.1;
  const LocatedResidual r = grid_component_residual(d, lattice, corrupted);
  CHECK(r.value > 1e-2);
  // Node 7 or one of its lattice neighbors carries the defect.
  const auto where = lattice.index(r.location);
  CHECK(where[0] <= 2);

  const GridFrame coarse = flat_frame_neighborhood(d, Lattice::over(d.frame()->chart(), {4, 4}), Matrix::Identity(2, 2));
  CHECK_THROWS_AS(holonomicity_on_grid(coarse, *d.frame()), InputError);
}

TEST_CASE("flat frame preconditions") {
  const Derivation sphere = sphere_connection();
  const Lattice ls = Lattice::over(sphere.frame()->chart(), {5, 5});
  try {
    flat_frame_neighborhood(sphere, ls, Matrix::Identity(2, 2));
    FAIL("expected a flatness error");
  } catch (const FlatnessError& e) {
    // R(E_1, E_2)^2_1 = -1 everywhere dominates sin^2(theta) on this domain.
    CHECK(e.obstruction() == doctest::Approx(1.0).epsilon(1e-10));
  }
  const Derivation lie = lie_derivation();
  CHECK_THROWS_AS(flat_frame_neighborhood(lie, Lattice::over(lie.frame()->chart(), {5, 5}), Matrix::Identity(2, 2)),
                  ExistenceError);
}

TEST_CASE("general point frame removes W_X at the point") {
  const Derivation lie = lie_derivation();
  const VectorField x = field(lie.frame(), {"x1 + x2^2", "sin(x1)*x2 + 1"});
  const Point x0{0.3, -0.4};
  PointFrameSpec spec{x0, {}, {}, {}};
  const PointFrame f = frame_at_point_general(lie, x, spec);
  CHECK(f.residual <= 1e-10);
  // Independent check through the symbolic transformation law.
  const ExprMatrix wp = transform_w(w_of(lie, x), x, f.transform);
  CHECK(max_abs(wp.evaluate(x0)) <= 1e-10);
  CHECK(max_abs(Matrix(f.transform.matrix.evaluate(x0) - Matrix::Identity(2, 2))) <= 1e-14);

  spec.quadratic.assign(4, Matrix::Zero(2, 2));
  spec.quadratic[1] = mat({{1.0, 2.0}, {0.5, -1.0}});
  CHECK(frame_at_point_general(lie, x, spec).residual <= 1e-10);

  Rng rng(7);
  std::vector<double> seed(8);
  for (auto& v : seed) v = rng.uniform(-1.0, 1.0);
  spec.seed = seed;
  spec.quadratic.clear();
  CHECK(frame_at_point_general(lie, x, spec).residual <= 1e-10);
}

TEST_CASE("general point frame when the field vanishes at the point") {
  const Derivation lie = lie_derivation();
  const VectorField x = field(lie.frame(), {"x1 - 0.2", "0"});
  PointFrameSpec spec{{0.2, 0.1}, {}, {}, {}};
  CHECK_THROWS_AS(frame_at_point_general(lie, x, spec), ExistenceError);

  const Derivation zero = zero_connection();
  const VectorField y = field(zero.frame(), {"x1 - 0.2", "x2*x1"});
  spec.x0 = {0.2, 0.0};
  const PointFrame f = frame_at_point_general(zero, y, spec);
  CHECK(f.transform.matrix.is_constant());
  CHECK(max_abs(Matrix(f.transform.matrix.evaluate(spec.x0) - Matrix::Identity(2, 2))) == 0.0);
}

TEST_CASE("seed certificates") {
  const Derivation lie = lie_derivation();
  const VectorField x = field(lie.frame(), {"x1", "0"});
  const Point x0{1.0, 0.0};
  const auto xv = x.evaluate(x0);
  const Matrix w = w_at(lie, x, x0);
  const std::vector<double> a_prime{1.0, 1.0};
  const Certificate factored = seed_certificate(factorized_seed(a_prime, Matrix::Identity(2, 2)), xv, w);
  CHECK(factored.asymmetry <= 1e-12);

  Rng rng(3);
  std::vector<double> seed(8);
  for (auto& v : seed) v = rng.uniform(-1.0, 1.0);
  CHECK(seed_certificate(seed, xv, w).asymmetry > 1e-3);

  // The factorized seed gives a rank-one A(x0).
  PointFrameSpec spec{{0.5, 0.0}, factorized_seed(a_prime, Matrix::Identity(2, 2)), {}, {}};
  CHECK_THROWS_AS(frame_at_point_general(lie, x, spec), DomainError);
}

TEST_CASE("holonomic point frames") {
  const Derivation lie = lie_derivation();
  const VectorField x = field(lie.frame(), {"x1 + x2^2", "sin(x1)*x2 + 1"});
  const Point x0{0.3, -0.4};
  const HolonomicPointFrame h = frame_at_point_holonomic(lie, x, PointFrameSpec{x0, {}, {}, {}});
  CHECK(h.frame.residual <= 1e-10);
  CHECK(h.certificate.asymmetry <= 1e-12);
  CHECK(h.anholonomy <= 1e-10);

  // Anholonomic source frame: the new frame vectors still commute at x0.
  const Derivation polar = polar_connection(orthonormal_polar_frame());
  const VectorField y = field(polar.frame(), {"r*theta", "1 + r"});
  const Point p0{1.5, 0.4};
  const HolonomicPointFrame hp = frame_at_point_holonomic(polar, y, PointFrameSpec{p0, {}, mat({{1.0, 0.2}, {0.1, 2.0}}), {}});
  CHECK(hp.frame.residual <= 1e-10);
  CHECK(hp.anholonomy <= 1e-10);
  CHECK(holonomicity_at_point(hp.frame.transform, p0).holonomic);
}

TEST_CASE("connection point frame and shell growth") {
  const Derivation sphere = sphere_connection();
  const Point x0{0.9, 0.5};
  const PointFrame f = frame_at_point_connection(sphere, PointFrameSpec{x0, {}, {}, {}});
  CHECK(f.residual <= 1e-10);
  CHECK(max_point_residual(sphere, f.transform, x0) <= 1e-10);
  const ShellGrowth g = shell_growth(sphere, f.transform, x0);
  CHECK(g.ratio >= 8.0);
  CHECK(g.ratio <= 12.0);

  const PointFrame polar = frame_at_point_connection(polar_connection(orthonormal_polar_frame()),
                                                     PointFrameSpec{{1.4, 0.3}, {}, {}, {}});
  CHECK(polar.residual <= 1e-10);

  CHECK_THROWS_AS(frame_at_point_connection(lie_derivation(), PointFrameSpec{{0.1, 0.1}, {}, {}, {}}), ExistenceError);
}

TEST_CASE("holonomicity at a point and the torsion identity") {
  const Derivation t = torsion_connection();
  const Point x0{0.2, 0.3};
  const PointFrame raw = frame_at_point_connection(t, PointFrameSpec{x0, {}, {}, {}});
  const HolonomicityReport h = holonomicity_at_point(raw.transform, x0, &t);
  CHECK_FALSE(h.holonomic);
  CHECK(*h.torsion_identity <= 1e-8);

  const Derivation sym = symmetrize_connection(t);
  const PointFrame s = frame_at_point_connection(sym, PointFrameSpec{x0, {}, {}, {}});
  CHECK(holonomicity_at_point(s.transform, x0, &sym).holonomic);
}

TEST_CASE("frames with vanishing components differ by a constant") {
  const Derivation d = polar_connection();
  const Lattice lattice = Lattice::over(d.frame()->chart(), {7, 7});
  const Matrix b1 = mat({{1.0, 0.0}, {0.0, 1.0}});
  const Matrix b2 = mat({{2.0, 1.0}, {-1.0, 1.0}});
  const GridFrame f1 = flat_frame_neighborhood(d, lattice, b1);
  const GridFrame f2 = flat_frame_neighborhood(d, lattice, b2);
  const ConstancyReport c = constancy_on_grid(d, f1, f2);
  CHECK(c.constant);
  CHECK(max_abs(Matrix(c.relating - b2)) <= 1e-12);

  GridFrame broken = f2;
  broken.matrices[10](1, 1) += 0.1;
  CHECK_THROWS_AS(constancy_on_grid(d, f1, broken), InputError);

  const Derivation sphere = sphere_connection();
  const Point x0{0.9, 0.5};
  PointFrameSpec s1{x0, {}, {}, {}};
  PointFrameSpec s2{x0, {}, b2, std::vector<Matrix>(4, Matrix::Zero(2, 2))};
  s2.quadratic[0] = mat({{3.0, 0.0}, {1.0, 0.0}});
  const ConstancyReport pc = constancy_at_point(sphere, frame_at_point_connection(sphere, s1).transform,
                                                frame_at_point_connection(sphere, s2).transform, x0);
  CHECK(pc.constant);
  CHECK(pc.far_deviation > 1e-6);
}
