#include "derivkit/derivation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "derivkit/error.hpp"

namespace derivkit {

namespace {

void require_declared(const ExprMatrix& m, const SymbolTable& table, const char* what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      for (const auto& s : symbols_of(m(i, j))) {
        if (!table.declares(s)) throw InputError(std::string(what) + " references undeclared symbol '" + s.name + "'");
      }
    }
  }
}

// -dX[i,j] + C^i_kj X^k, the part of W_X every S-derivation shares.
ExprMatrix lie_part(const FrameField& frame, const SymbolTable& table) {
  const std::size_t n = frame.dimension();
  const auto& c = frame.anholonomy();
  ExprMatrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Expr sum = -Expr::symbol(table.frame_derivative(i, j));
      for (std::size_t k = 0; k < n; ++k) {
        if (!c(i, k, j).is_zero()) sum = sum + c(i, k, j) * Expr::symbol(table.component(k));
      }
      w(i, j) = simplify(sum);
    }
  }
  return w;
}

void require_frame(const Derivation& d, const VectorField& x) {
  if (!same_frame(d.frame(), x.frame)) throw InputError("vector field is not expressed in the derivation's frame");
}

void require_connection(const Derivation& d) {
  if (!d.is_connection()) throw InputError("operation requires a linear connection");
}

}  // namespace

Derivation::Derivation(Kind kind, FramePtr frame, std::vector<Expr> gamma, ExprMatrix templ)
    : kind_(kind), frame_(std::move(frame)), gamma_(std::move(gamma)), template_(std::move(templ)) {
  const std::size_t n = frame_->dimension();
  const SymbolTable table = frame_->chart().symbols().with_vector_symbols();
  switch (kind_) {
    case Kind::connection: {
      if (gamma_.size() != n * n * n) throw InputError("connection needs n^3 coefficients");
      for (auto& g : gamma_) {
        for (const auto& s : symbols_of(g)) {
          if (!frame_->chart().symbols().declares(s)) {
            throw InputError("connection coefficient references undeclared symbol '" + s.name + "'");
          }
        }
        g = simplify(g);
      }
      components_ = ExprMatrix(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          Expr sum;
          for (std::size_t k = 0; k < n; ++k) sum = sum + gamma_[(i * n + j) * n + k] * Expr::symbol(table.component(k));
          components_(i, j) = sum;
        }
      }
      break;
    }
    case Kind::lie:
      components_ = lie_part(*frame_, table);
      break;
    case Kind::w_template:
    case Kind::s_template:
      if (template_.rows() != n || template_.cols() != n) throw InputError("template must be n x n");
      require_declared(template_, table, "template");
      template_ = template_.simplified();
      components_ = kind_ == Kind::w_template ? template_ : (template_ + lie_part(*frame_, table)).simplified();
      break;
  }
}

Derivation Derivation::connection(FramePtr frame, std::vector<Expr> gamma) {
  return Derivation(Kind::connection, std::move(frame), std::move(gamma), {});
}

Derivation Derivation::lie(FramePtr frame) { return Derivation(Kind::lie, std::move(frame), {}, {}); }

Derivation Derivation::w_template(FramePtr frame, ExprMatrix w) {
  return Derivation(Kind::w_template, std::move(frame), {}, std::move(w));
}

Derivation Derivation::s_template(FramePtr frame, ExprMatrix s) {
  return Derivation(Kind::s_template, std::move(frame), {}, std::move(s));
}

const std::vector<Expr>& Derivation::gamma() const {
  if (kind_ != Kind::connection) throw InputError("derivation is not a linear connection");
  return gamma_;
}

const Expr& Derivation::gamma(std::size_t i, std::size_t j, std::size_t k) const {
  const std::size_t n = dimension();
  return gamma()[(i * n + j) * n + k];
}

// ---------------------------------------------------------------------------

ExprMatrix w_of(const Derivation& d, const VectorField& x) {
  require_frame(d, x);
  const FrameField& frame = *d.frame();
  const std::size_t n = d.dimension();
  std::vector<Expr> derivatives(n * n);
  std::vector<bool> known(n * n, false);
  auto binding = [&](const Symbol& s) -> std::optional<Expr> {
    const auto i = static_cast<std::size_t>(s.index);
    switch (s.kind) {
      case SymbolKind::coordinate:
        return std::nullopt;
      case SymbolKind::vector_component:
        return x.components[i];
      case SymbolKind::frame_derivative: {
        const auto j = static_cast<std::size_t>(s.second);
        if (!known[i * n + j]) {
          derivatives[i * n + j] = frame_derivative(frame, j, x.components[i]);
          known[i * n + j] = true;
        }
        return derivatives[i * n + j];
      }
    }
    return std::nullopt;
  };
  const ExprMatrix& t = d.component_template();
  ExprMatrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w(i, j) = simplify(substitute(t(i, j), binding));
  }
  return w;
}

Matrix w_at(const Derivation& d, std::span<const double> p, std::span<const double> x_values,
            std::span<const double> dx_values) {
  const std::size_t n = d.dimension();
  const Valuation at{p, x_values, dx_values};
  const ExprMatrix& t = d.component_template();
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = evaluate(t(i, j), at);
    }
  }
  return w;
}

Matrix w_at(const Derivation& d, const VectorField& x, std::span<const double> p) {
  require_frame(d, x);
  const std::size_t n = d.dimension();
  std::vector<double> values(n);
  std::vector<double> derivatives(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = evaluate(x.components[i], p);
    for (std::size_t j = 0; j < n; ++j) {
      derivatives[i * n + j] = evaluate(frame_derivative(*d.frame(), j, x.components[i]), p);
    }
  }
  return w_at(d, p, values, derivatives);
}

ExprMatrix directional_derivative(const VectorField& x, const ExprMatrix& m) {
  ExprMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = directional_derivative(x, m(i, j));
  }
  return out;
}

ExprMatrix transform_w(const ExprMatrix& w, const VectorField& x, const FrameTransform& a) {
  if (!same_frame(x.frame, a.source)) throw InputError("vector field is not in the transform's source frame");
  return (a.inverse() * (w * a.matrix + directional_derivative(x, a.matrix))).simplified();
}

Derivation transform_connection(const Derivation& d, const FrameTransform& a) {
  require_connection(d);
  if (!same_frame(d.frame(), a.source)) throw InputError("transform does not start from the connection's frame");
  const std::size_t n = d.dimension();
  const FramePtr target = a.target();
  std::vector<Expr> gamma(n * n * n);
  for (std::size_t kp = 0; kp < n; ++kp) {
    VectorField e = VectorField::zero(d.frame());
    for (std::size_t k = 0; k < n; ++k) e.components[k] = a.matrix(k, kp);
    const ExprMatrix w = transform_w(w_of(d, e), e, a);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) gamma[(i * n + j) * n + kp] = w(i, j);
    }
  }
  return Derivation::connection(target, std::move(gamma));
}

std::vector<Matrix> transformed_components_at(const Derivation& d, const FrameTransform& a,
                                              std::span<const double> p) {
  if (!same_frame(d.frame(), a.source)) throw InputError("transform does not start from the derivation's frame");
  const std::size_t n = d.dimension();
  const Matrix a_at = a.matrix.evaluate(p);
  if (!(std::abs(a_at.determinant()) > kDegenerateDeterminant)) throw DomainError("frame transform is singular at the point");
  const Eigen::FullPivLU<Matrix> lu(a_at);
  std::vector<Matrix> out;
  for (std::size_t kp = 0; kp < n; ++kp) {
    VectorField e = VectorField::zero(d.frame());
    for (std::size_t k = 0; k < n; ++k) e.components[k] = a.matrix(k, kp);
    const Matrix w = w_at(d, e, p);
    const Matrix xa = directional_derivative(e, a.matrix).evaluate(p);
    out.push_back(lu.solve(w * a_at + xa));
  }
  return out;
}

std::vector<Matrix> transformed_components_numeric(const GammaMatrices& gamma_at_p, const Matrix& basis_at_p,
                                                   const Matrix& a, const std::vector<Matrix>& da) {
  const auto n = a.rows();
  const Matrix f = basis_at_p * a;
  const Eigen::FullPivLU<Matrix> lu(a);
  std::vector<Matrix> out;
  for (Eigen::Index kp = 0; kp < n; ++kp) {
    Matrix w = Matrix::Zero(n, n);
    Matrix xa = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      w += a(k, kp) * gamma_at_p[static_cast<std::size_t>(k)];
      xa += f(k, kp) * da[static_cast<std::size_t>(k)];
    }
    out.push_back(lu.solve(w * a + xa));
  }
  return out;
}

TensorField apply_derivation(const Derivation& d, const VectorField& x, const TensorField& t) {
  require_frame(d, x);
  if (!same_frame(d.frame(), t.frame)) throw InputError("tensor field is not expressed in the derivation's frame");
  const std::size_t n = d.dimension();
  const ExprMatrix w = t.rank() == 0 ? ExprMatrix() : w_of(d, x);
  TensorField out = TensorField::zero(t.frame, t.upper, t.lower);
  for (std::size_t flat = 0; flat < t.components.size(); ++flat) {
    Expr sum = directional_derivative(x, t.components[flat]);
    std::vector<std::size_t> idx = t.multi_index(flat);
    for (std::size_t slot = 0; slot < t.rank(); ++slot) {
      const std::size_t original = idx[slot];
      const bool upper = slot < t.upper;
      for (std::size_t k = 0; k < n; ++k) {
        idx[slot] = k;
        const Expr& tk = t.components[t.flat_index(idx)];
        if (tk.is_zero()) continue;
        // Upper slots gain W^i_k T^..k..; lower slots lose W^k_j T_..k..
        if (upper) {
          sum = sum + w(original, k) * tk;
        } else {
          sum = sum - w(k, original) * tk;
        }
      }
      idx[slot] = original;
    }
    out.components[flat] = simplify(sum);
  }
  return out;
}

VectorField connection_sigma(const Derivation& d, const VectorField& x, const VectorField& y) {
  require_connection(d);
  require_frame(d, x);
  require_frame(d, y);
  const std::size_t n = d.dimension();
  VectorField nabla = VectorField::zero(d.frame());
  for (std::size_t i = 0; i < n; ++i) {
    Expr sum = directional_derivative(x, y.components[i]);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (d.gamma(i, j, k).is_zero()) continue;
        sum = sum + d.gamma(i, j, k) * y.components[j] * x.components[k];
      }
    }
    nabla.components[i] = simplify(sum);
  }
  VectorField out = nabla - commutator(x, y);
  for (auto& c : out.components) c = simplify(c);
  return out;
}

Derivation sigma_template(const Derivation& d) {
  require_connection(d);
  const std::size_t n = d.dimension();
  const SymbolTable table = d.frame()->chart().symbols().with_vector_symbols();
  const auto& c = d.frame()->anholonomy();
  ExprMatrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Expr sum = Expr::symbol(table.frame_derivative(i, j));
      for (std::size_t k = 0; k < n; ++k) {
        const Expr xk = Expr::symbol(table.component(k));
        sum = sum + d.gamma(i, j, k) * xk - c(i, k, j) * xk;
      }
      s(i, j) = simplify(sum);
    }
  }
  return Derivation::s_template(d.frame(), std::move(s));
}

Derivation symmetrize_connection(const Derivation& d) {
  require_connection(d);
  const std::size_t n = d.dimension();
  std::vector<Expr> gamma(n * n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        gamma[(i * n + j) * n + k] = simplify(0.5 * (d.gamma(i, j, k) + d.gamma(i, k, j)));
      }
    }
  }
  return Derivation::connection(d.frame(), std::move(gamma));
}

GammaMatrices gamma_at(const Derivation& d, std::span<const double> p) {
  const std::size_t n = d.dimension();
  GammaMatrices out;
  std::vector<double> values(n, 0.0);
  const std::vector<double> derivatives(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    values.assign(n, 0.0);
    values[k] = 1.0;
    out.push_back(w_at(d, p, values, derivatives));
  }
  return out;
}

// ---------------------------------------------------------------------------

VectorField random_polynomial_field(const FramePtr& frame, std::span<const double> center, Rng& rng) {
  const std::size_t n = frame->dimension();
  const Chart& chart = frame->chart();
  std::vector<Expr> offsets(n);
  for (std::size_t a = 0; a < n; ++a) offsets[a] = chart.coordinate(a) - center[a];
  VectorField v = VectorField::zero(frame);
  for (std::size_t i = 0; i < n; ++i) {
    Expr sum = Expr::constant(rng.uniform(-1.0, 1.0));
    for (std::size_t a = 0; a < n; ++a) sum = sum + rng.uniform(-1.0, 1.0) * offsets[a];
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a; b < n; ++b) sum = sum + rng.uniform(-1.0, 1.0) * (offsets[a] * offsets[b]);
    }
    v.components[i] = sum;
  }
  return v;
}

namespace {

std::string describe(const VectorField& x) {
  std::string out = "(";
  for (std::size_t i = 0; i < x.components.size(); ++i) {
    if (i) out += ", ";
    out += to_string(x.components[i]);
  }
  return out + ")";
}

std::string format_number(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

struct ProbeState {
  double residual = 0.0;
  std::string witness;

  void record(double value, const std::string& what) {
    if (value > residual) {
      residual = value;
      witness = what;
    }
  }
};

// Normalized so that large component values do not trip an absolute bound.
double relative_gap(const Matrix& a, const Matrix& b) {
  return max_abs(a - b) / (1.0 + std::max(max_abs(a), max_abs(b)));
}

}  // namespace

LinearityVerdict linearity_probe(const Derivation& d, std::span<const double> x0, std::uint64_t seed) {
  const std::size_t n = d.dimension();
  const FramePtr& frame = d.frame();
  const Chart& chart = frame->chart();
  if (x0.size() != n) throw InputError("point has the wrong dimension");
  Rng rng(seed);
  ProbeState state;
  const Matrix zero = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));

  // (i) fields vanishing at x0
  std::vector<VectorField> vanishing;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      vanishing.push_back((chart.coordinate(a) - x0[a]) * VectorField::frame_vector(frame, b));
    }
  }
  for (int r = 0; r < 4; ++r) {
    VectorField v = random_polynomial_field(frame, x0, rng);
    for (auto& c : v.components) c = c - evaluate(c, x0);
    vanishing.push_back(v);
  }
  for (const auto& v : vanishing) {
    const double gap = relative_gap(w_at(d, v, x0), zero);
    state.record(gap, "field X = " + describe(v) + " vanishes at x0 but max |W_X(x0)| = " +
                          format_number(max_abs(w_at(d, v, x0))));
  }

  // (ii) superposition and (iii) the Gamma_k X^k(x0) form
  const GammaMatrices gamma = gamma_at(d, x0);
  for (std::size_t pair = 0; pair < kLinearityPairs; ++pair) {
    const VectorField x = random_polynomial_field(frame, x0, rng);
    const VectorField y = random_polynomial_field(frame, x0, rng);
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    const Matrix wx = w_at(d, x, x0);
    const Matrix wy = w_at(d, y, x0);
    const VectorField z = Expr::constant(a) * x + Expr::constant(b) * y;
    state.record(relative_gap(w_at(d, z, x0), a * wx + b * wy),
                 "superposition fails for a = " + format_number(a) + ", b = " + format_number(b) + ", X = " +
                     describe(x) + ", Y = " + describe(y));
    for (const auto* f : {&x, &y}) {
      const Matrix wf = (f == &x) ? wx : wy;
      Matrix expected = zero;
      const auto values = f->evaluate(x0);
      for (std::size_t k = 0; k < n; ++k) expected += values[k] * gamma[k];
      state.record(relative_gap(wf, expected), "W_X(x0) differs from Gamma_k X^k(x0) for X = " + describe(*f));
    }
  }

  LinearityVerdict v;
  v.residual = state.residual;
  v.linear = state.residual <= kLinearityTolerance;
  if (v.linear) {
    v.gamma = gamma;
  } else {
    v.witness = state.witness;
  }
  return v;
}

Verdict vanishes_on_vanishing_fields(const Derivation& d, std::uint64_t seed) {
  const std::size_t n = d.dimension();
  const Chart& chart = d.frame()->chart();
  Rng rng(seed);
  const std::vector<double> values(n, 0.0);
  std::vector<double> jet(n * n, 0.0);
  ProbeState state;
  // A field vanishing at p is, to first order, any choice of E_j(X^i)(p).
  for (const auto& p : chart.samples()) {
    auto probe = [&](const std::string& what) {
      const Matrix w = w_at(d, p, values, jet);
      state.record(max_abs(w) / (1.0 + max_abs(Eigen::Map<const Matrix>(jet.data(), static_cast<Eigen::Index>(n),
                                                                       static_cast<Eigen::Index>(n)))),
                   what);
    };
    std::string where = "(";
    for (std::size_t a = 0; a < n; ++a) where += (a ? ", " : "") + format_number(p[a]);
    where += ")";
    for (std::size_t idx = 0; idx < n * n; ++idx) {
      jet.assign(n * n, 0.0);
      jet[idx] = 1.0;
      probe("a field vanishing at " + where + " with E_" + std::to_string(idx % n + 1) + "(X^" +
            std::to_string(idx / n + 1) + ") = 1 has W_X != 0 there");
    }
    for (auto& v : jet) v = rng.uniform(-1.0, 1.0);
    probe("a field vanishing at " + where + " with random first derivatives has W_X != 0 there");
  }
  Verdict v;
  v.residual = state.residual;
  v.holds = state.residual <= kLinearityTolerance;
  if (!v.holds) v.witness = state.witness;
  return v;
}

}  // namespace derivkit
