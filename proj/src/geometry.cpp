#include "derivkit/geometry.hpp"

#include <cmath>

#include "derivkit/error.hpp"

namespace derivkit {

Chart::Chart(std::vector<std::string> coordinates, std::vector<Interval> domain)
    : symbols_(std::move(coordinates)), domain_(std::move(domain)) {
  if (symbols_.dimension() == 0) throw InputError("chart dimension must be at least 1");
  if (domain_.size() != symbols_.dimension()) throw InputError("domain box must have one interval per coordinate");
  for (const auto& iv : domain_) {
    if (!(iv.hi > iv.lo) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi)) {
      throw InputError("domain intervals must have positive finite length");
    }
  }
}

bool Chart::contains(std::span<const double> p, double tolerance) const {
  if (p.size() != dimension()) return false;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] < domain_[a].lo - tolerance || p[a] > domain_[a].hi + tolerance) return false;
  }
  return true;
}

std::vector<Point> Chart::samples(std::size_t count, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<Point> points(count, Point(dimension()));
  for (auto& p : points) {
    for (std::size_t a = 0; a < dimension(); ++a) p[a] = rng.uniform(domain_[a].lo, domain_[a].hi);
  }
  return points;
}

// ---------------------------------------------------------------------------

FrameField::FrameField(ChartPtr chart, ExprMatrix basis, ExprMatrix inverse, bool coordinate)
    : chart_(std::move(chart)), basis_(std::move(basis)), inverse_(std::move(inverse)), coordinate_(coordinate) {
  anholonomy_ = anholonomy_coefficients(*this);
}

FramePtr FrameField::coordinate(ChartPtr chart) {
  const std::size_t n = chart->dimension();
  return FramePtr(new FrameField(std::move(chart), ExprMatrix::identity(n), ExprMatrix::identity(n), true));
}

FramePtr FrameField::create(ChartPtr chart, ExprMatrix basis) {
  const std::size_t n = chart->dimension();
  if (basis.rows() != n || basis.cols() != n) throw InputError("frame matrix must be n x n");
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& name : symbol_names(basis(a, i))) {
        auto s = chart->symbols().lookup(name);
        if (!s || s->kind != SymbolKind::coordinate) {
          throw InputError("frame entry references undeclared symbol '" + name + "'");
        }
      }
    }
  }
  basis = basis.simplified();
  for (const auto& p : chart->samples()) {
    const double det = basis.evaluate(p).determinant();
    if (!(std::abs(det) > kDegenerateDeterminant)) {
      throw DomainError("frame is degenerate at a sample point (|det B| <= 1e-12)");
    }
  }
  bool identity = true;
  for (std::size_t a = 0; a < n && identity; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      auto c = basis(a, i).constant_value();
      if (!c || *c != (a == i ? 1.0 : 0.0)) {
        identity = false;
        break;
      }
    }
  }
  ExprMatrix inv = identity ? ExprMatrix::identity(n) : derivkit::inverse(basis);
  return FramePtr(new FrameField(std::move(chart), std::move(basis), std::move(inv), identity));
}

bool same_chart(const Chart& a, const Chart& b) {
  if (&a == &b) return true;
  if (a.coordinate_names() != b.coordinate_names()) return false;
  for (std::size_t i = 0; i < a.dimension(); ++i) {
    if (a.domain()[i].lo != b.domain()[i].lo || a.domain()[i].hi != b.domain()[i].hi) return false;
  }
  return true;
}

bool same_frame(const FramePtr& a, const FramePtr& b) {
  if (a == b) return true;
  if (!a || !b || !same_chart(a->chart(), b->chart())) return false;
  const std::size_t n = a->dimension();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!structurally_equal(a->basis()(i, j), b->basis()(i, j))) return false;
    }
  }
  return true;
}

Expr frame_derivative(const FrameField& frame, std::size_t i, const Expr& f) {
  Expr sum;
  for (std::size_t a = 0; a < frame.dimension(); ++a) {
    const Expr& b = frame.basis()(a, i);
    if (b.is_zero()) continue;
    sum = sum + b * differentiate(f, frame.chart().symbols().coordinate(a));
  }
  return simplify(sum);
}

AnholonomyObject anholonomy_coefficients(const FrameField& frame) {
  const std::size_t n = frame.dimension();
  std::vector<Expr> c(n * n * n);
  if (frame.is_coordinate() || frame.basis().is_constant()) return AnholonomyObject(n, std::move(c));
  // K^a_jk = E_j(B^a_k) - E_k(B^a_j); only j < k is computed, the rest follows
  // from antisymmetry.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = j + 1; k < n; ++k) {
      std::vector<Expr> bracket(n);
      for (std::size_t a = 0; a < n; ++a) {
        bracket[a] = frame_derivative(frame, j, frame.basis()(a, k)) - frame_derivative(frame, k, frame.basis()(a, j));
      }
      for (std::size_t i = 0; i < n; ++i) {
        Expr sum;
        for (std::size_t a = 0; a < n; ++a) sum = sum + frame.inverse()(i, a) * bracket[a];
        const Expr cijk = simplify(sum);
        c[(i * n + j) * n + k] = cijk;
        c[(i * n + k) * n + j] = -cijk;
      }
    }
  }
  return AnholonomyObject(n, std::move(c));
}

// ---------------------------------------------------------------------------

VectorField VectorField::zero(FramePtr frame) {
  const std::size_t n = frame->dimension();
  return VectorField{std::move(frame), std::vector<Expr>(n)};
}

VectorField VectorField::frame_vector(FramePtr frame, std::size_t k) {
  VectorField v = zero(std::move(frame));
  v.components.at(k) = Expr::constant(1.0);
  return v;
}

VectorField VectorField::coordinate_vector(FramePtr frame, std::size_t a) {
  VectorField v = zero(frame);
  for (std::size_t i = 0; i < v.dimension(); ++i) v.components[i] = frame->inverse()(i, a);
  return v;
}

std::vector<double> VectorField::evaluate(std::span<const double> at) const {
  std::vector<double> out(components.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = derivkit::evaluate(components[i], at);
  return out;
}

std::vector<Expr> VectorField::coordinate_components() const {
  const std::size_t n = components.size();
  std::vector<Expr> out(n);
  for (std::size_t a = 0; a < n; ++a) {
    Expr sum;
    for (std::size_t i = 0; i < n; ++i) sum = sum + frame->basis()(a, i) * components[i];
    out[a] = simplify(sum);
  }
  return out;
}

namespace {

void require_same_frame(const VectorField& x, const VectorField& y) {
  if (!same_frame(x.frame, y.frame)) throw InputError("vector fields are expressed in different frames");
}

}  // namespace

VectorField operator+(const VectorField& x, const VectorField& y) {
  require_same_frame(x, y);
  VectorField z = VectorField::zero(x.frame);
  for (std::size_t i = 0; i < z.dimension(); ++i) z.components[i] = x.components[i] + y.components[i];
  return z;
}

VectorField operator-(const VectorField& x, const VectorField& y) {
  require_same_frame(x, y);
  VectorField z = VectorField::zero(x.frame);
  for (std::size_t i = 0; i < z.dimension(); ++i) z.components[i] = x.components[i] - y.components[i];
  return z;
}

VectorField operator*(const Expr& f, const VectorField& x) {
  VectorField z = VectorField::zero(x.frame);
  for (std::size_t i = 0; i < z.dimension(); ++i) z.components[i] = f * x.components[i];
  return z;
}

Expr directional_derivative(const VectorField& x, const Expr& f) {
  Expr sum;
  for (std::size_t k = 0; k < x.dimension(); ++k) {
    if (x.components[k].is_zero()) continue;
    sum = sum + x.components[k] * frame_derivative(*x.frame, k, f);
  }
  return simplify(sum);
}

VectorField commutator(const VectorField& x, const VectorField& y) {
  require_same_frame(x, y);
  const std::size_t n = x.dimension();
  const auto& c = x.frame->anholonomy();
  VectorField z = VectorField::zero(x.frame);
  for (std::size_t i = 0; i < n; ++i) {
    Expr sum = directional_derivative(x, y.components[i]) - directional_derivative(y, x.components[i]);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (c(i, j, k).is_zero()) continue;
        sum = sum + c(i, j, k) * x.components[j] * y.components[k];
      }
    }
    z.components[i] = simplify(sum);
  }
  return z;
}

// ---------------------------------------------------------------------------

TensorField TensorField::scalar(FramePtr frame, Expr f) { return TensorField{std::move(frame), 0, 0, {std::move(f)}}; }

TensorField TensorField::from_vector(const VectorField& v) { return TensorField{v.frame, 1, 0, v.components}; }

TensorField TensorField::zero(FramePtr frame, std::size_t upper, std::size_t lower) {
  std::size_t size = 1;
  for (std::size_t r = 0; r < upper + lower; ++r) size *= frame->dimension();
  return TensorField{std::move(frame), upper, lower, std::vector<Expr>(size)};
}

std::size_t TensorField::flat_index(std::span<const std::size_t> indices) const {
  const std::size_t n = frame->dimension();
  std::size_t flat = 0;
  for (std::size_t idx : indices) flat = flat * n + idx;
  return flat;
}

std::vector<std::size_t> TensorField::multi_index(std::size_t flat) const {
  const std::size_t n = frame->dimension();
  std::vector<std::size_t> idx(rank());
  for (std::size_t r = rank(); r-- > 0;) {
    idx[r] = flat % n;
    flat /= n;
  }
  return idx;
}

// ---------------------------------------------------------------------------

FramePtr FrameTransform::target() const { return FrameField::create(source->chart_ptr(), source->basis() * matrix); }

ExprMatrix FrameTransform::inverse() const { return derivkit::inverse(matrix); }

VectorField change_vector_frame(const VectorField& x, const FrameTransform& a) {
  if (!same_frame(x.frame, a.source)) throw InputError("vector field is not in the transform's source frame");
  const std::size_t n = x.dimension();
  for (const auto& p : x.frame->chart().samples()) {
    if (!(std::abs(a.matrix.evaluate(p).determinant()) > kDegenerateDeterminant)) {
      throw DomainError("frame transform is singular at a sample point");
    }
  }
  const ExprMatrix inv = a.inverse();
  VectorField out = VectorField::zero(a.target());
  for (std::size_t i = 0; i < n; ++i) {
    Expr sum;
    for (std::size_t k = 0; k < n; ++k) sum = sum + inv(i, k) * x.components[k];
    out.components[i] = simplify(sum);
  }
  return out;
}

Verdict vanishes_identically(std::span<const Expr> exprs, const Chart& chart, double threshold) {
  Verdict v;
  for (const auto& p : chart.samples()) {
    for (const auto& e : exprs) {
      if (e.is_zero()) continue;
      const double value = std::abs(evaluate(e, p));
      if (value > v.residual) {
        v.residual = value;
        v.witness = to_string(e);
      }
    }
  }
  v.holds = v.residual <= threshold;
  if (v.holds) v.witness.clear();
  return v;
}

}  // namespace derivkit
