#include "derivkit/normal_frames.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "derivkit/error.hpp"

namespace derivkit {

namespace {

using Index = Eigen::Index;

Index ix(std::size_t i) { return static_cast<Index>(i); }

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(3);
  out << v;
  return out.str();
}

Matrix identity(std::size_t n) { return Matrix::Identity(ix(n), ix(n)); }

void require_invertible(const Matrix& a, const std::string& what) {
  if (!(std::abs(a.determinant()) > kDegenerateDeterminant)) throw DomainError(what + " is singular (|det| <= 1e-12)");
}

void require_point(const Chart& chart, std::span<const double> p) {
  if (p.size() != chart.dimension()) throw InputError("point has the wrong dimension");
  if (!chart.contains(p)) throw DomainError("point lies outside the chart's domain box");
}

ExprMatrix partial(const ExprMatrix& m, std::size_t a) {
  ExprMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = simplify(differentiate(m(i, j), a));
  }
  return out;
}

std::vector<Matrix> partials_at(const ExprMatrix& m, std::size_t n, std::span<const double> p) {
  std::vector<Matrix> out;
  for (std::size_t a = 0; a < n; ++a) out.push_back(partial(m, a).evaluate(p));
  return out;
}

// c + sum_a linear[a] (x^a - x0^a) + sum_ab quadratic[a*n+b] (x^a - x0^a)(x^b - x0^b)
ExprMatrix polynomial_matrix(const Chart& chart, std::span<const double> x0, const Matrix& c,
                             const std::vector<Matrix>& linear, const std::vector<Matrix>& quadratic) {
  const std::size_t n = chart.dimension();
  if (!quadratic.empty() && quadratic.size() != n * n) throw InputError("quadratic term needs n*n matrices");
  std::vector<Expr> offsets(n);
  for (std::size_t a = 0; a < n; ++a) offsets[a] = chart.coordinate(a) - x0[a];
  ExprMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Expr sum = Expr::constant(c(ix(i), ix(j)));
      for (std::size_t a = 0; a < n; ++a) {
        const double v = linear[a](ix(i), ix(j));
        if (v != 0.0) sum = sum + v * offsets[a];
      }
      for (std::size_t a = 0; a < quadratic.size() / std::max<std::size_t>(n, 1); ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          const Matrix& q = quadratic[a * n + b];
          if (q.rows() != ix(n) || q.cols() != ix(n)) throw InputError("quadratic coefficients must be n x n");
          const double v = q(ix(i), ix(j));
          if (v != 0.0) sum = sum + v * (offsets[a] * offsets[b]);
        }
      }
      out(i, j) = simplify(sum);
    }
  }
  return out;
}

Matrix anchor_of(const PointFrameSpec& spec, std::size_t n) {
  if (spec.anchor.size() == 0) return identity(n);
  if (spec.anchor.rows() != ix(n) || spec.anchor.cols() != ix(n)) throw InputError("anchor matrix must be n x n");
  require_invertible(spec.anchor, "anchor matrix");
  return spec.anchor;
}

// A^-1 (W A + X(A)) at x0 for a field with source-frame values x_values.
double point_residual(const Matrix& w, const FrameField& frame, const ExprMatrix& a, std::span<const double> x0,
                      const std::vector<double>& x_values) {
  const std::size_t n = frame.dimension();
  const Matrix a0 = a.evaluate(x0);
  const Matrix b0 = frame.basis().evaluate(x0);
  Eigen::VectorXd xv(ix(n));
  for (std::size_t i = 0; i < n; ++i) xv(ix(i)) = x_values[i];
  const Eigen::VectorXd coords = b0 * xv;
  Matrix xa = Matrix::Zero(ix(n), ix(n));
  const auto da = partials_at(a, n, x0);
  for (std::size_t a_ = 0; a_ < n; ++a_) xa += coords(ix(a_)) * da[a_];
  return max_abs(a0.fullPivLu().solve(w * a0 + xa));
}

double max_component(const std::vector<Matrix>& ms) {
  double worst = 0.0;
  for (const auto& m : ms) worst = std::max(worst, max_abs(m));
  return worst;
}

// C'^i_jk of the frame F from F and its coordinate partials at one point.
std::vector<double> anholonomy_from(const Matrix& f, const std::vector<Matrix>& df) {
  const std::size_t n = static_cast<std::size_t>(f.rows());
  std::vector<double> c(n * n * n, 0.0);
  const Eigen::FullPivLU<Matrix> lu(f);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      Eigen::VectorXd bracket = Eigen::VectorXd::Zero(ix(n));
      for (std::size_t b = 0; b < n; ++b) {
        bracket += f(ix(b), ix(j)) * df[b].col(ix(k)) - f(ix(b), ix(k)) * df[b].col(ix(j));
      }
      const Eigen::VectorXd ci = lu.solve(bracket);
      for (std::size_t i = 0; i < n; ++i) c[(i * n + j) * n + k] = ci(ix(i));
    }
  }
  return c;
}

double max_entry(const std::vector<double>& v) {
  double worst = 0.0;
  for (double x : v) worst = std::max(worst, std::abs(x));
  return worst;
}

// T'^i'_j'k' = (A^-1)^i'_i T^i_kl A^k_j' A^l_k' from the tensor values at a point.
std::vector<double> primed_torsion(const std::vector<double>& t, const Matrix& a) {
  const std::size_t n = static_cast<std::size_t>(a.rows());
  const Matrix inv = a.inverse();
  std::vector<double> out(n * n * n, 0.0);
  for (std::size_t ip = 0; ip < n; ++ip) {
    for (std::size_t jp = 0; jp < n; ++jp) {
      for (std::size_t kp = 0; kp < n; ++kp) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t l = 0; l < n; ++l) {
              sum += inv(ix(ip), ix(i)) * t[(i * n + k) * n + l] * a(ix(k), ix(jp)) * a(ix(l), ix(kp));
            }
          }
        }
        out[(ip * n + jp) * n + kp] = sum;
      }
    }
  }
  return out;
}

std::vector<double> values_at(const std::vector<Expr>& es, std::span<const double> p) {
  std::vector<double> out;
  for (const auto& e : es) out.push_back(e.is_zero() ? 0.0 : evaluate(e, p));
  return out;
}

double identity_gap(const std::vector<double>& torsion, const std::vector<double>& anholonomy) {
  double worst = 0.0;
  for (std::size_t i = 0; i < torsion.size(); ++i) worst = std::max(worst, std::abs(torsion[i] + anholonomy[i]));
  return worst;
}

std::size_t steps_for(double length, double step) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::abs(length) / step - 1e-9)));
}

// W_{d/dx^a} for every coordinate direction.
std::vector<ExprMatrix> axis_components(const Derivation& d) {
  std::vector<ExprMatrix> out;
  for (std::size_t a = 0; a < d.dimension(); ++a) out.push_back(w_of(d, VectorField::coordinate_vector(d.frame(), a)));
  return out;
}

// Propagates A from p along axis a by `delta`.
Matrix propagate_axis(const std::vector<ExprMatrix>& g, const Matrix& a, Point p, std::size_t axis, double delta,
                      double step) {
  const double start = p[axis];
  auto field = [&](double t) {
    p[axis] = start + t;
    return g[axis].evaluate(p);
  };
  return integrate_linear(field, a, 0.0, delta, steps_for(delta, step));
}

void require_lattice_in_chart(const Lattice& lattice, const Chart& chart) {
  if (lattice.dimension() != chart.dimension()) throw InputError("lattice dimension does not match the chart");
  for (std::size_t a = 0; a < lattice.dimension(); ++a) {
    if (lattice.counts[a] < 2) throw InputError("lattice needs at least 2 nodes per axis");
    const Interval& iv = lattice.box[a];
    const Interval& dom = chart.domain()[a];
    if (!(iv.hi > iv.lo) || iv.lo < dom.lo || iv.hi > dom.hi) {
      throw DomainError("lattice box must lie inside the chart's domain box");
    }
  }
}

}  // namespace

Matrix integrate_linear(const std::function<Matrix(double)>& g, Matrix a, double t0, double t1, std::size_t steps) {
  const double h = (t1 - t0) / static_cast<double>(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = t0 + h * static_cast<double>(s);
    const Matrix gm = g(t + 0.5 * h);
    const Matrix k1 = -g(t) * a;
    const Matrix k2 = -gm * (a + 0.5 * h * k1);
    const Matrix k3 = -gm * (a + 0.5 * h * k2);
    const Matrix k4 = -g(t + h) * (a + h * k3);
    a += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return a;
}

Derivation as_connection(const Derivation& d) {
  if (d.is_connection()) return d;
  const std::size_t n = d.dimension();
  std::vector<Expr> gamma(n * n * n);
  for (std::size_t k = 0; k < n; ++k) {
    const ExprMatrix w = w_of(d, VectorField::frame_vector(d.frame(), k));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) gamma[(i * n + j) * n + k] = w(i, j);
    }
  }
  return Derivation::connection(d.frame(), std::move(gamma));
}

// ---------------------------------------------------------------------------

PointFrame frame_at_point_general(const Derivation& d, const VectorField& x, const PointFrameSpec& spec) {
  if (!same_frame(d.frame(), x.frame)) throw InputError("vector field is not expressed in the derivation's frame");
  const FrameField& frame = *d.frame();
  const std::size_t n = d.dimension();
  require_point(frame.chart(), spec.x0);
  const Matrix m = anchor_of(spec, n);
  const std::vector<double> x0v = x.evaluate(spec.x0);
  const Matrix w = w_at(d, x, spec.x0);
  double norm2 = 0.0;
  for (double v : x0v) norm2 += v * v;

  std::vector<Matrix> linear(n, Matrix::Zero(ix(n), ix(n)));
  if (norm2 == 0.0) {
    if (max_abs(w) > kPointTolerance) {
      throw ExistenceError("the field vanishes at the point but W_X does not (max |W_X| = " +
                           format_number(max_abs(w)) + "), so no frame change can remove it");
    }
    ExprMatrix a = polynomial_matrix(frame.chart(), spec.x0, m, linear, spec.quadratic);
    return PointFrame{FrameTransform{d.frame(), a}, spec.x0, 0.0};
  }

  std::vector<double> seed = spec.seed;
  if (seed.empty()) {
    seed.assign(n * n * n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t jp = 0; jp < n; ++jp) {
        for (std::size_t k = 0; k < n; ++k) seed[(l * n + jp) * n + k] = m(ix(l), ix(jp)) * x0v[k] / norm2;
      }
    }
  }
  if (seed.size() != n * n * n) throw InputError("seed must have n^3 entries");

  Matrix a0 = Matrix::Zero(ix(n), ix(n));
  const Matrix binv = frame.inverse().evaluate(spec.x0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t jp = 0; jp < n; ++jp) {
      for (std::size_t k = 0; k < n; ++k) a0(ix(j), ix(jp)) += seed[(j * n + jp) * n + k] * x0v[k];
    }
  }
  require_invertible(a0, "A(x0) produced by the seed");
  for (std::size_t alpha = 0; alpha < n; ++alpha) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t jp = 0; jp < n; ++jp) {
        double sum = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
          for (std::size_t k = 0; k < n; ++k) {
            sum += seed[(l * n + jp) * n + k] * w(ix(j), ix(l)) * binv(ix(k), ix(alpha));
          }
        }
        linear[alpha](ix(j), ix(jp)) = -sum;
      }
    }
  }
  ExprMatrix a = polynomial_matrix(frame.chart(), spec.x0, a0, linear, spec.quadratic);
  const double residual = point_residual(w, frame, a, spec.x0, x0v);
  return PointFrame{FrameTransform{d.frame(), std::move(a)}, spec.x0, residual};
}

Certificate seed_certificate(const std::vector<double>& seed, std::span<const double> x_at_x0, const Matrix& w_at_x0) {
  const std::size_t n = x_at_x0.size();
  if (seed.size() != n * n * n) throw InputError("seed must have n^3 entries");
  auto a = [&](std::size_t j, std::size_t jp, std::size_t k) { return seed[(j * n + jp) * n + k]; };
  Certificate cert;
  for (std::size_t j = 0; j < n; ++j) {
    Matrix kj = Matrix::Zero(ix(n), ix(n));
    for (std::size_t kp = 0; kp < n; ++kp) {
      for (std::size_t jp = 0; jp < n; ++jp) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          double ax = 0.0;
          for (std::size_t m = 0; m < n; ++m) ax += a(k, kp, m) * x_at_x0[m];
          double aw = 0.0;
          for (std::size_t l = 0; l < n; ++l) aw += a(l, jp, k) * w_at_x0(ix(j), ix(l));
          sum += ax * aw;
        }
        kj(ix(kp), ix(jp)) = -sum;
      }
    }
    cert.asymmetry = std::max(cert.asymmetry, max_abs(Matrix(kj - kj.transpose())));
    cert.entries.push_back(std::move(kj));
  }
  return cert;
}

std::vector<double> factorized_seed(std::span<const double> a_prime, const Matrix& a) {
  const std::size_t n = a_prime.size();
  if (a.rows() != ix(n) || a.cols() != ix(n)) throw InputError("factor matrix must be n x n");
  std::vector<double> seed(n * n * n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t kp = 0; kp < n; ++kp) {
      for (std::size_t m = 0; m < n; ++m) seed[(k * n + kp) * n + m] = a_prime[kp] * a(ix(k), ix(m));
    }
  }
  return seed;
}

HolonomicPointFrame frame_at_point_holonomic(const Derivation& d, const VectorField& x, const PointFrameSpec& spec) {
  if (!same_frame(d.frame(), x.frame)) throw InputError("vector field is not expressed in the derivation's frame");
  const FrameField& frame = *d.frame();
  const std::size_t n = d.dimension();
  require_point(frame.chart(), spec.x0);
  const Matrix m = anchor_of(spec, n);
  const std::vector<double> x0v = x.evaluate(spec.x0);
  const Matrix w = w_at(d, x, spec.x0);

  HolonomicPointFrame out;
  Eigen::VectorXd xv(ix(n));
  for (std::size_t i = 0; i < n; ++i) xv(ix(i)) = x0v[i];
  if (xv.squaredNorm() == 0.0) {
    out.frame = frame_at_point_general(d, x, spec);
  } else {
    const Matrix minv = m.inverse();
    const Eigen::VectorXd xi = minv * xv;
    const double xi2 = xi.squaredNorm();
    const Matrix r = -w * m;
    // Anholonomy of the source frame seen through the anchor; the symmetric
    // part S_j is solved for so that K_j = S_j - C_j / 2 makes the new frame
    // vectors commute at x0.
    std::vector<Matrix> c_hat(n, Matrix::Zero(ix(n), ix(n)));
    const auto& c = frame.anholonomy();
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
          if (c(j, k, l).is_zero()) continue;
          const double v = evaluate(c(j, k, l), spec.x0);
          for (std::size_t kp = 0; kp < n; ++kp) {
            for (std::size_t jp = 0; jp < n; ++jp) c_hat[j](ix(kp), ix(jp)) += v * m(ix(k), ix(kp)) * m(ix(l), ix(jp));
          }
        }
      }
    }
    std::vector<Matrix> d_k(n, Matrix::Zero(ix(n), ix(n)));
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::VectorXd rj = r.row(ix(j)).transpose() + 0.5 * c_hat[j].transpose() * xi;
      const Matrix s = (rj * xi.transpose() + xi * rj.transpose()) / xi2 -
                       (rj.dot(xi) / (xi2 * xi2)) * (xi * xi.transpose());
      const Matrix kj = s - 0.5 * c_hat[j];
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t jp = 0; jp < n; ++jp) {
          double sum = 0.0;
          for (std::size_t kp = 0; kp < n; ++kp) sum += minv(ix(kp), ix(k)) * kj(ix(kp), ix(jp));
          d_k[k](ix(j), ix(jp)) = sum;
        }
      }
    }
    const Matrix binv = frame.inverse().evaluate(spec.x0);
    std::vector<Matrix> linear(n, Matrix::Zero(ix(n), ix(n)));
    for (std::size_t alpha = 0; alpha < n; ++alpha) {
      for (std::size_t k = 0; k < n; ++k) linear[alpha] += binv(ix(k), ix(alpha)) * d_k[k];
    }
    ExprMatrix a = polynomial_matrix(frame.chart(), spec.x0, m, linear, spec.quadratic);
    const double residual = point_residual(w, frame, a, spec.x0, x0v);
    out.frame = PointFrame{FrameTransform{d.frame(), std::move(a)}, spec.x0, residual};
  }

  // The certificate is read back from the constructed matrix.
  const ExprMatrix& a = out.frame.transform.matrix;
  const Matrix a0 = a.evaluate(spec.x0);
  const Matrix b0 = frame.basis().evaluate(spec.x0);
  const auto da = partials_at(a, n, spec.x0);
  for (std::size_t j = 0; j < n; ++j) {
    Matrix kj = Matrix::Zero(ix(n), ix(n));
    for (std::size_t kp = 0; kp < n; ++kp) {
      for (std::size_t jp = 0; jp < n; ++jp) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          for (std::size_t alpha = 0; alpha < n; ++alpha) {
            sum += a0(ix(k), ix(kp)) * b0(ix(alpha), ix(k)) * da[alpha](ix(j), ix(jp));
          }
        }
        kj(ix(kp), ix(jp)) = sum;
      }
    }
    out.certificate.asymmetry = std::max(out.certificate.asymmetry, max_abs(Matrix(kj - kj.transpose())));
    out.certificate.entries.push_back(std::move(kj));
  }
  out.anholonomy = holonomicity_at_point(out.frame.transform, spec.x0).commutator;
  return out;
}

PointFrame frame_at_point_connection(const Derivation& d, const PointFrameSpec& spec) {
  const FrameField& frame = *d.frame();
  const std::size_t n = d.dimension();
  require_point(frame.chart(), spec.x0);
  const LinearityVerdict probe = linearity_probe(d, spec.x0);
  if (!probe.linear) {
    throw ExistenceError("the derivation is not linear in X at the point (" + probe.witness +
                         "), so no frame makes all of its components vanish there");
  }
  const Matrix b = anchor_of(spec, n);
  const Matrix binv = frame.inverse().evaluate(spec.x0);
  std::vector<Matrix> linear(n, Matrix::Zero(ix(n), ix(n)));
  for (std::size_t alpha = 0; alpha < n; ++alpha) {
    for (std::size_t k = 0; k < n; ++k) linear[alpha] -= binv(ix(k), ix(alpha)) * (probe.gamma[k] * b);
  }
  ExprMatrix a = polynomial_matrix(frame.chart(), spec.x0, b, linear, spec.quadratic);
  FrameTransform t{d.frame(), std::move(a)};
  const double residual = max_component(transformed_components_at(d, t, spec.x0));
  return PointFrame{std::move(t), spec.x0, residual};
}

ShellGrowth shell_growth(const Derivation& d, const FrameTransform& a, const Point& x0, double h_far, double h_near) {
  const Chart& chart = d.frame()->chart();
  const std::size_t n = d.dimension();
  std::vector<std::vector<double>> directions;
  for (std::size_t axis = 0; axis < n; ++axis) {
    for (double sign : {1.0, -1.0}) {
      std::vector<double> u(n, 0.0);
      u[axis] = sign;
      directions.push_back(std::move(u));
    }
  }
  if (n >= 2 && n <= 4) {
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      std::vector<double> u(n);
      for (std::size_t a_ = 0; a_ < n; ++a_) u[a_] = ((mask >> a_) & 1U ? -1.0 : 1.0) / std::sqrt(double(n));
      directions.push_back(std::move(u));
    }
  }
  auto shell = [&](double h) {
    double worst = 0.0;
    for (const auto& u : directions) {
      Point p = x0;
      for (std::size_t a_ = 0; a_ < n; ++a_) p[a_] += h * u[a_];
      if (!chart.contains(p)) continue;
      worst = std::max(worst, max_component(transformed_components_at(d, a, p)));
    }
    return worst;
  };
  ShellGrowth g;
  g.far = shell(h_far);
  g.near = shell(h_near);
  g.ratio = g.near > 0.0 ? g.far / g.near : 0.0;
  return g;
}

// ---------------------------------------------------------------------------

const SymbolTable& curve_symbols() {
  static const SymbolTable table({"s"});
  return table;
}

namespace {

struct CurveGeometry {
  std::vector<Expr> coords;
  std::vector<Expr> velocity;

  Point at(double s) const {
    Point p(coords.size());
    const double v[1] = {s};
    for (std::size_t a = 0; a < p.size(); ++a) p[a] = evaluate(coords[a], std::span<const double>(v, 1));
    return p;
  }
};

CurveGeometry curve_geometry(const CurveSpec& curve, std::size_t n) {
  if (curve.coordinates.size() != n) throw InputError("curve must give one expression per coordinate");
  if (!(curve.interval.hi >= curve.interval.lo)) throw InputError("curve interval is empty");
  if (curve.s0 < curve.interval.lo || curve.s0 > curve.interval.hi) throw InputError("s0 lies outside the curve interval");
  CurveGeometry g;
  for (const auto& e : curve.coordinates) {
    g.coords.push_back(simplify(e));
    g.velocity.push_back(simplify(differentiate(e, 0)));
  }
  return g;
}

std::vector<double> curve_nodes(const CurveSpec& curve, double step) {
  if (!(step > 0.0)) throw InputError("step must be positive");
  std::vector<double> s;
  const double back = curve.s0 - curve.interval.lo;
  if (back > 0.0) {
    const auto count = static_cast<std::size_t>(std::max(1.0, std::round(back / step)));
    const double h = back / static_cast<double>(count);
    for (std::size_t i = count; i > 0; --i) s.push_back(curve.s0 - h * static_cast<double>(i));
    s.front() = curve.interval.lo;
  }
  s.push_back(curve.s0);
  const double ahead = curve.interval.hi - curve.s0;
  if (ahead > 0.0) {
    const auto count = static_cast<std::size_t>(std::max(1.0, std::round(ahead / step)));
    const double h = ahead / static_cast<double>(count);
    for (std::size_t i = 1; i <= count; ++i) s.push_back(curve.s0 + h * static_cast<double>(i));
    s.back() = curve.interval.hi;
  }
  return s;
}

}  // namespace

CurveFrame transport_along_curve(const Derivation& d, const VectorField& x, const CurveSpec& curve, const Matrix& b0,
                                 double step) {
  if (!same_frame(d.frame(), x.frame)) throw InputError("vector field is not expressed in the derivation's frame");
  const std::size_t n = d.dimension();
  const Chart& chart = d.frame()->chart();
  if (b0.rows() != ix(n) || b0.cols() != ix(n)) throw InputError("initial matrix must be n x n");
  require_invertible(b0, "initial matrix");
  const CurveGeometry geo = curve_geometry(curve, n);

  CurveFrame out;
  out.s = curve_nodes(curve, step);
  const std::vector<Expr> x_coords = x.coordinate_components();
  for (double s : out.s) {
    Point p = geo.at(s);
    if (!chart.contains(p, 1e-12)) {
      throw DomainError("curve leaves the chart's domain box at s = " + format_number(s));
    }
    const double v[1] = {s};
    for (std::size_t a = 0; a < n; ++a) {
      const double gap = std::abs(evaluate(geo.velocity[a], std::span<const double>(v, 1)) - evaluate(x_coords[a], p));
      out.integral_curve_residual = std::max(out.integral_curve_residual, gap);
    }
    out.points.push_back(std::move(p));
  }
  if (out.integral_curve_residual > kIntegralCurveTolerance) {
    throw InputError("curve is not an integral curve of the field (max |gamma' - X| = " +
                     format_number(out.integral_curve_residual) + ")");
  }

  const ExprMatrix w = w_of(d, x);
  auto g = [&](double s) { return w.evaluate(geo.at(s)); };
  out.base = static_cast<std::size_t>(std::find(out.s.begin(), out.s.end(), curve.s0) - out.s.begin());
  out.matrices.assign(out.s.size(), Matrix());
  out.matrices[out.base] = b0;
  for (std::size_t i = out.base + 1; i < out.s.size(); ++i) {
    out.matrices[i] = integrate_linear(g, out.matrices[i - 1], out.s[i - 1], out.s[i], 1);
    require_invertible(out.matrices[i], "transported frame matrix");
  }
  for (std::size_t i = out.base; i-- > 0;) {
    out.matrices[i] = integrate_linear(g, out.matrices[i + 1], out.s[i + 1], out.s[i], 1);
    require_invertible(out.matrices[i], "transported frame matrix");
  }

  for (std::size_t i = 1; i + 1 < out.s.size(); ++i) {
    const double left = out.s[i] - out.s[i - 1];
    const double right = out.s[i + 1] - out.s[i];
    if (std::abs(left - right) > 1e-9 * right) continue;
    const Matrix derivative = (out.matrices[i + 1] - out.matrices[i - 1]) / (left + right);
    out.directional_residual =
        std::max(out.directional_residual, max_abs(Matrix(derivative + w.evaluate(out.points[i]) * out.matrices[i])));
  }
  return out;
}

LocatedResidual curve_component_residual(const Derivation& d, const VectorField& x, const CurveSpec& curve,
                                         const std::vector<double>& s, const std::vector<Matrix>& matrices) {
  const std::size_t n = d.dimension();
  if (s.size() != matrices.size() || s.size() < 2) throw InputError("curve frame needs at least two nodes");
  const CurveGeometry geo = curve_geometry(curve, n);
  const ExprMatrix w = w_of(d, x);
  auto g = [&](double t) { return w.evaluate(geo.at(t)); };
  LocatedResidual worst;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (matrices[i].rows() != ix(n) || matrices[i].cols() != ix(n)) throw InputError("frame matrices must be n x n");
    const double ds = s[i + 1] - s[i];
    if (!(ds > 0.0)) throw InputError("curve parameters must increase");
    require_invertible(matrices[i], "frame matrix");
    const Matrix phi_a = integrate_linear(g, matrices[i], s[i], s[i + 1], 4);
    const double r = max_abs(Matrix(matrices[i].fullPivLu().solve(matrices[i + 1] - phi_a) / ds));
    if (r > worst.value) worst = {r, i};
  }
  return worst;
}

// ---------------------------------------------------------------------------

Lattice Lattice::over(const Chart& chart, std::vector<std::size_t> counts) {
  if (counts.size() != chart.dimension()) throw InputError("lattice needs one node count per coordinate");
  return Lattice{chart.domain(), std::move(counts)};
}

std::size_t Lattice::size() const {
  std::size_t total = 1;
  for (std::size_t c : counts) total *= c;
  return total;
}

double Lattice::spacing(std::size_t axis) const {
  return (box[axis].hi - box[axis].lo) / static_cast<double>(counts[axis] - 1);
}

std::size_t Lattice::flat(std::span<const std::size_t> index) const {
  std::size_t f = 0;
  for (std::size_t a = 0; a < counts.size(); ++a) f = f * counts[a] + index[a];
  return f;
}

std::vector<std::size_t> Lattice::index(std::size_t flat) const {
  std::vector<std::size_t> idx(counts.size());
  for (std::size_t a = counts.size(); a-- > 0;) {
    idx[a] = flat % counts[a];
    flat /= counts[a];
  }
  return idx;
}

Point Lattice::node(std::span<const std::size_t> index) const {
  Point p(counts.size());
  for (std::size_t a = 0; a < counts.size(); ++a) {
    p[a] = index[a] + 1 == counts[a] ? box[a].hi : box[a].lo + spacing(a) * static_cast<double>(index[a]);
  }
  return p;
}

GridFrame flat_frame_neighborhood(const Derivation& d, const Lattice& lattice, const Matrix& b0,
                                  const FlatFrameOptions& options) {
  const std::size_t n = d.dimension();
  const Chart& chart = d.frame()->chart();
  require_lattice_in_chart(lattice, chart);
  if (b0.rows() != ix(n) || b0.cols() != ix(n)) throw InputError("initial matrix must be n x n");
  require_invertible(b0, "initial matrix");
  std::vector<std::size_t> base = options.base.empty() ? std::vector<std::size_t>(n, 0) : options.base;
  if (base.size() != n) throw InputError("basepoint index has the wrong dimension");
  for (std::size_t a = 0; a < n; ++a) {
    if (base[a] >= lattice.counts[a]) throw InputError("basepoint index lies outside the lattice");
  }
  const Point p_base = lattice.node(base);

  const LinearityVerdict probe = linearity_probe(d, p_base, options.seed);
  if (!probe.linear) {
    throw ExistenceError("the derivation is not linear in X at the basepoint (" + probe.witness +
                         "), so no frame makes all of its components vanish on a neighborhood");
  }
  const Verdict vanishing = vanishes_on_vanishing_fields(d, options.seed);
  if (!vanishing.holds) {
    throw ExistenceError("W_X does not vanish wherever X vanishes (residual " + format_number(vanishing.residual) +
                         "), so no frame makes all of its components vanish on a neighborhood");
  }
  const Verdict flat = is_flat(d, options.seed);
  if (!flat.holds) {
    std::vector<Point> points = chart.samples();
    points.push_back(p_base);
    const double obstruction = curvature_obstruction(d, points);
    throw FlatnessError("the curvature is not identically zero (max |R(E_a,E_b)| = " + format_number(obstruction) +
                            "), so no frame makes the components vanish on an open set",
                        obstruction);
  }

  const std::vector<ExprMatrix> g = axis_components(d);
  GridFrame out;
  out.lattice = lattice;
  out.base = base;
  out.matrices.assign(lattice.size(), Matrix());
  out.matrices[lattice.flat(base)] = b0;
  for (std::size_t axis = 0; axis < n; ++axis) {
    for (std::size_t f = 0; f < lattice.size(); ++f) {
      std::vector<std::size_t> idx = lattice.index(f);
      bool seed_node = true;
      for (std::size_t b = axis; b < n; ++b) seed_node = seed_node && idx[b] == base[b];
      if (!seed_node) continue;
      for (int dir : {1, -1}) {
        std::vector<std::size_t> cur = idx;
        while (true) {
          if (dir > 0 && cur[axis] + 1 >= lattice.counts[axis]) break;
          if (dir < 0 && cur[axis] == 0) break;
          std::vector<std::size_t> next = cur;
          next[axis] = dir > 0 ? cur[axis] + 1 : cur[axis] - 1;
          const Point p = lattice.node(cur);
          const double delta = lattice.node(next)[axis] - p[axis];
          Matrix a = propagate_axis(g, out.matrices[lattice.flat(cur)], p, axis, delta, options.step);
          require_invertible(a, "integrated frame matrix");
          out.matrices[lattice.flat(next)] = std::move(a);
          cur = std::move(next);
        }
      }
    }
  }

  // Reverse-order audit: last axis first, one segment per axis.
  Rng rng(options.seed);
  for (std::size_t r = 0; r < options.audit_nodes; ++r) {
    const auto target = lattice.index(static_cast<std::size_t>(rng.uniform() * static_cast<double>(lattice.size())));
    std::vector<std::size_t> cur = base;
    Matrix a = b0;
    for (std::size_t axis = n; axis-- > 0;) {
      if (cur[axis] == target[axis]) continue;
      const Point p = lattice.node(cur);
      cur[axis] = target[axis];
      a = propagate_axis(g, a, p, axis, lattice.node(cur)[axis] - p[axis], options.step);
    }
    out.path_discrepancy = std::max(out.path_discrepancy, max_abs(Matrix(a - out.at(target))));
  }
  out.component_residual = grid_component_residual(d, lattice, out.matrices, options.step).value;
  return out;
}

LocatedResidual grid_component_residual(const Derivation& d, const Lattice& lattice,
                                        const std::vector<Matrix>& matrices, double step) {
  const std::size_t n = d.dimension();
  const FrameField& frame = *d.frame();
  require_lattice_in_chart(lattice, frame.chart());
  if (matrices.size() != lattice.size()) throw InputError("frame has the wrong number of lattice matrices");
  for (const auto& m : matrices) {
    if (m.rows() != ix(n) || m.cols() != ix(n)) throw InputError("frame matrices must be n x n");
    require_invertible(m, "frame matrix");
  }
  const std::vector<ExprMatrix> g = axis_components(d);
  const double fine = 0.5 * step;
  LocatedResidual worst;
  for (std::size_t f = 0; f < lattice.size(); ++f) {
    const std::vector<std::size_t> idx = lattice.index(f);
    const Point p = lattice.node(idx);
    std::vector<Matrix> along(n);
    for (std::size_t axis = 0; axis < n; ++axis) {
      std::vector<std::size_t> from = idx;
      std::vector<std::size_t> to = idx;
      if (idx[axis] + 1 < lattice.counts[axis]) {
        ++to[axis];
      } else {
        --from[axis];
      }
      const Point q = lattice.node(from);
      const double delta = lattice.node(to)[axis] - q[axis];
      const Matrix& a_from = matrices[lattice.flat(from)];
      const Matrix phi_a = propagate_axis(g, a_from, q, axis, delta, fine);
      along[axis] = a_from.fullPivLu().solve(matrices[lattice.flat(to)] - phi_a) / delta;
    }
    const Matrix f_at = frame.basis().evaluate(p) * matrices[f];
    for (std::size_t kp = 0; kp < n; ++kp) {
      Matrix w = Matrix::Zero(ix(n), ix(n));
      for (std::size_t axis = 0; axis < n; ++axis) w += f_at(ix(axis), ix(kp)) * along[axis];
      if (max_abs(w) > worst.value) worst = {max_abs(w), f};
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

HolonomicityReport holonomicity_at_point(const FrameTransform& a, const Point& x0, const Derivation* d) {
  const FrameField& frame = *a.source;
  const std::size_t n = frame.dimension();
  require_point(frame.chart(), x0);
  const ExprMatrix f = (frame.basis() * a.matrix).simplified();
  const Matrix f0 = f.evaluate(x0);
  require_invertible(f0, "frame at the point");
  HolonomicityReport out;
  out.anholonomy = anholonomy_from(f0, partials_at(f, n, x0));
  out.commutator = max_entry(out.anholonomy);
  out.tolerance = kPointTolerance;
  out.holonomic = out.commutator <= out.tolerance;
  if (d) {
    if (!same_frame(d->frame(), a.source)) throw InputError("transform does not start from the derivation's frame");
    const Matrix a0 = a.matrix.evaluate(x0);
    std::vector<double> t(n * n * n, 0.0);
    for (std::size_t jp = 0; jp < n; ++jp) {
      for (std::size_t kp = 0; kp < n; ++kp) {
        VectorField ej = VectorField::zero(a.source);
        VectorField ek = VectorField::zero(a.source);
        for (std::size_t i = 0; i < n; ++i) {
          ej.components[i] = a.matrix(i, jp);
          ek.components[i] = a.matrix(i, kp);
        }
        const Eigen::VectorXd tv =
            Eigen::Map<const Eigen::VectorXd>(torsion_vector(*d, ej, ek).evaluate(x0).data(), ix(n));
        const Eigen::VectorXd primed = a0.fullPivLu().solve(tv);
        for (std::size_t i = 0; i < n; ++i) t[(i * n + jp) * n + kp] = primed(ix(i));
      }
    }
    out.torsion_identity = identity_gap(t, out.anholonomy);
  }
  return out;
}

namespace {

// Fourth-order first derivative along an axis from values at consecutive nodes.
Matrix fourth_order_derivative(const std::function<Matrix(std::size_t)>& f, std::size_t i, std::size_t count,
                               double h) {
  const double s = 1.0 / (12.0 * h);
  if (i >= 2 && i + 2 < count) return s * (f(i - 2) - 8.0 * f(i - 1) + 8.0 * f(i + 1) - f(i + 2));
  if (i == 0) return s * (-25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4));
  if (i == 1) return s * (-3.0 * f(0) - 10.0 * f(1) + 18.0 * f(2) - 6.0 * f(3) + f(4));
  const std::size_t e = count - 1;
  if (i == e) return s * (25.0 * f(e) - 48.0 * f(e - 1) + 36.0 * f(e - 2) - 16.0 * f(e - 3) + 3.0 * f(e - 4));
  return s * (3.0 * f(e) + 10.0 * f(e - 1) - 18.0 * f(e - 2) + 6.0 * f(e - 3) - f(e - 4));
}

}  // namespace

HolonomicityReport holonomicity_on_grid(const GridFrame& g, const FrameField& source, const Derivation* d,
                                        std::optional<std::vector<std::size_t>> node) {
  const Lattice& lattice = g.lattice;
  const std::size_t n = source.dimension();
  require_lattice_in_chart(lattice, source.chart());
  if (g.matrices.size() != lattice.size()) throw InputError("frame has the wrong number of lattice matrices");
  double max_spacing = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (lattice.counts[a] < 5) throw InputError("grid too coarse: fourth-order differences need at least 5 nodes per axis");
    max_spacing = std::max(max_spacing, lattice.spacing(a));
  }
  std::vector<Matrix> frames(lattice.size());
  for (std::size_t f = 0; f < lattice.size(); ++f) {
    frames[f] = source.basis().evaluate(lattice.node(lattice.index(f))) * g.matrices[f];
  }
  std::optional<TensorField> torsion;
  if (d) torsion = torsion_tensor(as_connection(*d));

  std::vector<std::size_t> nodes;
  if (node) {
    if (node->size() != n) throw InputError("node index has the wrong dimension");
    for (std::size_t a = 0; a < n; ++a) {
      if ((*node)[a] >= lattice.counts[a]) throw InputError("node index lies outside the lattice");
    }
    nodes.push_back(lattice.flat(*node));
  } else {
    for (std::size_t f = 0; f < lattice.size(); ++f) nodes.push_back(f);
  }

  HolonomicityReport out;
  out.tolerance = 10.0 * max_spacing * max_spacing;
  double identity = 0.0;
  for (std::size_t f : nodes) {
    const std::vector<std::size_t> idx = lattice.index(f);
    std::vector<Matrix> df;
    for (std::size_t axis = 0; axis < n; ++axis) {
      auto along = [&](std::size_t i) {
        std::vector<std::size_t> k = idx;
        k[axis] = i;
        return frames[lattice.flat(k)];
      };
      df.push_back(fourth_order_derivative(along, idx[axis], lattice.counts[axis], lattice.spacing(axis)));
    }
    const std::vector<double> c = anholonomy_from(frames[f], df);
    const double size = max_entry(c);
    if (out.anholonomy.empty() || size > out.commutator) {
      out.commutator = size;
      out.anholonomy = c;
    }
    if (torsion) {
      const std::vector<double> t = values_at(torsion->components, lattice.node(idx));
      identity = std::max(identity, identity_gap(primed_torsion(t, g.matrices[f]), c));
    }
  }
  out.holonomic = out.commutator <= out.tolerance;
  if (torsion) out.torsion_identity = identity;
  return out;
}

ConstancyReport constancy_on_grid(const Derivation& d, const GridFrame& f1, const GridFrame& f2) {
  if (f1.lattice.counts != f2.lattice.counts || f1.matrices.size() != f2.matrices.size()) {
    throw InputError("frames are sampled on different lattices");
  }
  for (std::size_t a = 0; a < f1.lattice.dimension(); ++a) {
    if (f1.lattice.box[a].lo != f2.lattice.box[a].lo || f1.lattice.box[a].hi != f2.lattice.box[a].hi) {
      throw InputError("frames are sampled on different lattices");
    }
  }
  const double r1 = grid_component_residual(d, f1.lattice, f1.matrices).value;
  if (r1 > kGridTolerance) {
    throw InputError("first frame does not make the components vanish (residual " + format_number(r1) + ")");
  }
  const double r2 = grid_component_residual(d, f2.lattice, f2.matrices).value;
  if (r2 > kGridTolerance) {
    throw InputError("second frame does not make the components vanish (residual " + format_number(r2) + ")");
  }
  ConstancyReport out;
  const std::size_t b = f1.lattice.flat(f1.base);
  out.relating = f1.matrices[b].fullPivLu().solve(f2.matrices[b]);
  for (std::size_t f = 0; f < f1.matrices.size(); ++f) {
    const Matrix a12 = f1.matrices[f].fullPivLu().solve(f2.matrices[f]);
    out.deviation = std::max(out.deviation, max_abs(Matrix(a12 - out.relating)));
  }
  out.constant = out.deviation <= kGridTolerance;
  return out;
}

ConstancyReport constancy_at_point(const Derivation& d, const FrameTransform& a1, const FrameTransform& a2,
                                   const Point& x0) {
  const std::size_t n = d.dimension();
  const FrameField& frame = *d.frame();
  require_point(frame.chart(), x0);
  const double r1 = max_component(transformed_components_at(d, a1, x0));
  if (r1 > kPointTolerance) {
    throw InputError("first frame does not make the components vanish at the point (residual " + format_number(r1) +
                     ")");
  }
  const double r2 = max_component(transformed_components_at(d, a2, x0));
  if (r2 > kPointTolerance) {
    throw InputError("second frame does not make the components vanish at the point (residual " +
                     format_number(r2) + ")");
  }
  const Matrix m1 = a1.matrix.evaluate(x0);
  const Matrix m2 = a2.matrix.evaluate(x0);
  const Eigen::FullPivLU<Matrix> lu(m1);
  ConstancyReport out;
  out.relating = lu.solve(m2);
  const auto d1 = partials_at(a1.matrix, n, x0);
  const auto d2 = partials_at(a2.matrix, n, x0);
  std::vector<Matrix> d12;
  for (std::size_t a = 0; a < n; ++a) d12.push_back(lu.solve(d2[a] - d1[a] * out.relating));
  const Matrix f1 = frame.basis().evaluate(x0) * m1;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix e = Matrix::Zero(ix(n), ix(n));
    for (std::size_t a = 0; a < n; ++a) e += f1(ix(a), ix(i)) * d12[a];
    out.deviation = std::max(out.deviation, max_abs(e));
  }
  out.constant = out.deviation <= kTorsionIdentityTolerance;
  for (std::size_t a = 0; a < n; ++a) {
    for (double sign : {1.0, -1.0}) {
      Point p = x0;
      p[a] += sign * 1e-2;
      if (!frame.chart().contains(p)) continue;
      const Matrix a12 = a1.matrix.evaluate(p).fullPivLu().solve(a2.matrix.evaluate(p));
      out.far_deviation = std::max(out.far_deviation, max_abs(Matrix(a12 - out.relating)));
    }
  }
  return out;
}

}  // namespace derivkit
