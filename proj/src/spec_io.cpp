#include "derivkit/spec_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "derivkit/error.hpp"

namespace derivkit {

namespace {

using Index = Eigen::Index;

Index ix(std::size_t i) { return static_cast<Index>(i); }

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw InputError(where + ": " + what); }

const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(where, std::string("missing key '") + key + "'");
  return j.at(key);
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

Expr expression(const Json& j, const SymbolTable& symbols, const std::string& where) {
  if (j.is_number()) return Expr::constant(j.get<double>());
  const std::string source = text(j, where);
  try {
    return parse_expr(source, symbols);
  } catch (const ParseError& e) {
    fail(where, std::string(e.what()) + " in \"" + source + "\"");
  }
}

Interval interval(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) fail(where, "expected [lo, hi]");
  return Interval{number(j[0], where), number(j[1], where)};
}

ExprMatrix expr_matrix(const Json& j, std::size_t n, const SymbolTable& symbols, const std::string& where) {
  if (!j.is_array() || j.size() != n) fail(where, "expected an n x n array");
  ExprMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_array() || j[i].size() != n) fail(where, "expected an n x n array");
    for (std::size_t k = 0; k < n; ++k) {
      m(i, k) = expression(j[i][k], symbols, where + "[" + std::to_string(i) + "][" + std::to_string(k) + "]");
    }
  }
  return m;
}

std::size_t index_1based(const std::string& token, std::size_t n, const std::string& where) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(token, &used);
  } catch (const std::exception&) {
    fail(where, "index '" + token + "' is not an integer");
  }
  if (used != token.size() || v < 1 || static_cast<std::size_t>(v) > n) {
    fail(where, "index '" + token + "' must be an integer in 1.." + std::to_string(n));
  }
  return static_cast<std::size_t>(v - 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& token, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw InputError(what + ": '" + token + "' is not a number");
  }
  if (used != token.size()) throw InputError(what + ": '" + token + "' is not a number");
  return v;
}

Derivation derivation_from(const Json& j, const FramePtr& frame) {
  const std::string where = "derivation";
  if (!j.is_object() || j.size() != 1) fail(where, "must contain exactly one of connection, lie, w_template, s_template");
  const std::size_t n = frame->dimension();
  const SymbolTable& coords = frame->chart().symbols();
  const auto& [key, body] = *j.items().begin();
  if (key == "connection") {
    if (!body.is_object()) fail(where + ".connection", "expected an object of \"i,j,k\": expression");
    std::vector<Expr> gamma(n * n * n);
    for (const auto& [idx, value] : body.items()) {
      const std::string at = where + ".connection[\"" + idx + "\"]";
      const auto parts = split(idx, ',');
      if (parts.size() != 3) fail(at, "key must have the form \"i,j,k\"");
      const std::size_t i = index_1based(parts[0], n, at);
      const std::size_t jj = index_1based(parts[1], n, at);
      const std::size_t k = index_1based(parts[2], n, at);
      gamma[(i * n + jj) * n + k] = expression(value, coords, at);
    }
    return Derivation::connection(frame, std::move(gamma));
  }
  if (key == "lie") return Derivation::lie(frame);
  const SymbolTable extended = coords.with_vector_symbols();
  if (key == "w_template") return Derivation::w_template(frame, expr_matrix(body, n, extended, where + ".w_template"));
  if (key == "s_template") return Derivation::s_template(frame, expr_matrix(body, n, extended, where + ".s_template"));
  fail(where, "unknown variant '" + key + "'");
}

Json located(const Point& p) { return point_json(p); }

}  // namespace

const VectorField& ManifoldSpec::field(const std::string& name) const {
  auto it = fields.find(name);
  if (it == fields.end()) throw InputError("spec declares no field named '" + name + "'");
  return it->second;
}

const CurveSpec& ManifoldSpec::curve(const std::string& name) const {
  auto it = curves.find(name);
  if (it == curves.end()) throw InputError("spec declares no curve named '" + name + "'");
  return it->second;
}

std::string fnv1a_digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ManifoldSpec parse_spec(const std::string& source) {
  Json j;
  try {
    j = Json::parse(source);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("spec is not valid JSON: ") + e.what());
  }
  ManifoldSpec spec;
  spec.digest = fnv1a_digest(source);
  const Json& dim = require(j, "dimension", "spec");
  if (!dim.is_number_integer() || dim.get<long long>() < 1) fail("dimension", "must be a positive integer");
  const auto n = static_cast<std::size_t>(dim.get<long long>());

  const Json& names = require(j, "coordinates", "spec");
  if (!names.is_array() || names.size() != n) fail("coordinates", "expected one name per dimension");
  std::vector<std::string> coords;
  for (const auto& c : names) coords.push_back(text(c, "coordinates"));
  const Json& box = require(j, "domain", "spec");
  if (!box.is_array() || box.size() != n) fail("domain", "expected one [lo, hi] per dimension");
  std::vector<Interval> domain;
  for (std::size_t a = 0; a < n; ++a) domain.push_back(interval(box[a], "domain[" + std::to_string(a) + "]"));
  spec.chart = std::make_shared<const Chart>(std::move(coords), std::move(domain));

  if (j.contains("frame") && !j.at("frame").is_null()) {
    spec.frame = FrameField::create(spec.chart, expr_matrix(j.at("frame"), n, spec.chart->symbols(), "frame"));
  } else {
    spec.frame = FrameField::coordinate(spec.chart);
  }
  spec.derivation = derivation_from(require(j, "derivation", "spec"), spec.frame);

  if (j.contains("fields")) {
    for (const auto& [name, comps] : j.at("fields").items()) {
      const std::string at = "fields." + name;
      if (!comps.is_array() || comps.size() != n) fail(at, "expected one expression per dimension");
      VectorField v = VectorField::zero(spec.frame);
      for (std::size_t i = 0; i < n; ++i) v.components[i] = expression(comps[i], spec.chart->symbols(), at);
      spec.fields.emplace(name, std::move(v));
    }
  }
  if (j.contains("curves")) {
    for (const auto& [name, body] : j.at("curves").items()) {
      const std::string at = "curves." + name;
      const Json& exprs = require(body, "exprs", at);
      if (!exprs.is_array() || exprs.size() != n) fail(at + ".exprs", "expected one expression per dimension");
      CurveSpec c;
      for (const auto& e : exprs) c.coordinates.push_back(expression(e, curve_symbols(), at + ".exprs"));
      c.interval = interval(require(body, "interval", at), at + ".interval");
      c.s0 = body.contains("s0") ? number(body.at("s0"), at + ".s0") : c.interval.lo;
      spec.curves.emplace(name, std::move(c));
    }
  }
  return spec;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << contents;
}

ManifoldSpec load_spec(const std::string& path) { return parse_spec(read_file(path)); }

Point parse_point(const std::string& source, const Chart& chart) {
  const std::size_t n = chart.dimension();
  const auto parts = split(source, ',');
  if (parts.size() != n) throw InputError("point must give " + std::to_string(n) + " coordinates");
  Point p(n);
  std::vector<bool> seen(n, false);
  const bool named = source.find('=') != std::string::npos;
  for (std::size_t i = 0; i < n; ++i) {
    if (!named) {
      p[i] = parse_number(parts[i], "point");
      continue;
    }
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) throw InputError("point: expected name=value, got '" + parts[i] + "'");
    const std::string name = parts[i].substr(0, eq);
    const auto& names = chart.coordinate_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InputError("point: unknown coordinate '" + name + "'");
    const auto a = static_cast<std::size_t>(it - names.begin());
    if (seen[a]) throw InputError("point: coordinate '" + name + "' given twice");
    seen[a] = true;
    p[a] = parse_number(parts[i].substr(eq + 1), "point");
  }
  return p;
}

Matrix parse_matrix(const std::string& source, std::size_t n) {
  const auto rows = split(source, ';');
  if (rows.size() != n) throw InputError("matrix must have " + std::to_string(n) + " rows");
  Matrix m(ix(n), ix(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto cols = split(rows[i], ',');
    if (cols.size() != n) throw InputError("matrix must have " + std::to_string(n) + " columns");
    for (std::size_t k = 0; k < n; ++k) m(ix(i), ix(k)) = parse_number(cols[k], "matrix");
  }
  return m;
}

std::vector<std::size_t> parse_counts(const std::string& source) {
  std::vector<std::size_t> out;
  for (const auto& part : split(source, ',')) {
    const double v = parse_number(part, "node counts");
    if (v < 1 || v != std::floor(v)) throw InputError("node counts must be positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k) + 0.0);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, std::size_t n) {
  if (!j.is_array() || j.size() != n) throw InputError("frame matrix must be n x n (dimension mismatch)");
  Matrix m(ix(n), ix(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_array() || j[i].size() != n) throw InputError("frame matrix must be n x n (dimension mismatch)");
    for (std::size_t k = 0; k < n; ++k) m(ix(i), ix(k)) = number(j[i][k], "frame matrix");
  }
  return m;
}

Json point_json(const Point& p) {
  Json out = Json::array();
  for (double v : p) out.push_back(v);
  return out;
}

// ---------------------------------------------------------------------------

Json frame_json(const SymbolicFrame& f) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < f.matrix.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t k = 0; k < f.matrix.cols(); ++k) row.push_back(to_string(f.matrix(i, k)));
    rows.push_back(std::move(row));
  }
  Json locus{{"point", located(f.x0)}};
  locus["field"] = f.field ? Json(*f.field) : Json(nullptr);
  return Json{{"kind", "symbolic"}, {"data", {{"matrix", std::move(rows)}}}, {"locus", std::move(locus)}};
}

Json frame_json(const CurveFrameData& f) {
  Json ms = Json::array();
  for (const auto& m : f.matrices) ms.push_back(matrix_json(m));
  return Json{{"kind", "curve"},
              {"data", {{"s", f.s}, {"matrices", std::move(ms)}}},
              {"locus", {{"curve", f.curve}, {"field", f.field}}}};
}

Json frame_json(const GridFrameData& f) {
  Json box = Json::array();
  for (const auto& iv : f.lattice.box) box.push_back(Json::array({iv.lo, iv.hi}));
  Json ms = Json::array();
  for (const auto& m : f.matrices) ms.push_back(matrix_json(m));
  return Json{{"kind", "grid"},
              {"data", {{"matrices", std::move(ms)}}},
              {"locus", {{"box", std::move(box)}, {"counts", f.lattice.counts}, {"base", f.base}}}};
}

FrameData parse_frame(const std::string& source, const ManifoldSpec& spec) {
  Json j;
  try {
    j = Json::parse(source);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("frame file is not valid JSON: ") + e.what());
  }
  const std::size_t n = spec.chart->dimension();
  const std::string kind = text(require(j, "kind", "frame file"), "kind");
  const Json& data = require(j, "data", "frame file");
  const Json& locus = require(j, "locus", "frame file");
  try {
    if (kind == "symbolic") {
      SymbolicFrame f;
      f.matrix = expr_matrix(require(data, "matrix", "data"), n, spec.chart->symbols(), "data.matrix");
      const Json& point = require(locus, "point", "locus");
      if (!point.is_array() || point.size() != n) fail("locus.point", "dimension mismatch");
      for (const auto& v : point) f.x0.push_back(number(v, "locus.point"));
      if (locus.contains("field") && !locus.at("field").is_null()) f.field = text(locus.at("field"), "locus.field");
      return f;
    }
    if (kind == "curve") {
      CurveFrameData f;
      f.curve = text(require(locus, "curve", "locus"), "locus.curve");
      f.field = text(require(locus, "field", "locus"), "locus.field");
      for (const auto& v : require(data, "s", "data")) f.s.push_back(number(v, "data.s"));
      for (const auto& m : require(data, "matrices", "data")) f.matrices.push_back(matrix_from_json(m, n));
      if (f.s.size() != f.matrices.size()) fail("data", "s and matrices differ in length");
      return f;
    }
    if (kind == "grid") {
      GridFrameData f;
      const Json& box = require(locus, "box", "locus");
      if (!box.is_array() || box.size() != n) fail("locus.box", "dimension mismatch");
      for (const auto& iv : box) f.lattice.box.push_back(interval(iv, "locus.box"));
      const Json& counts = require(locus, "counts", "locus");
      if (!counts.is_array() || counts.size() != n) fail("locus.counts", "dimension mismatch");
      for (const auto& c : counts) {
        if (!c.is_number_unsigned()) fail("locus.counts", "expected non-negative integers");
        f.lattice.counts.push_back(c.get<std::size_t>());
      }
      if (locus.contains("base")) {
        for (const auto& b : locus.at("base")) f.base.push_back(b.get<std::size_t>());
      }
      for (const auto& m : require(data, "matrices", "data")) f.matrices.push_back(matrix_from_json(m, n));
      return f;
    }
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed frame file: ") + e.what());
  }
  throw InputError("frame file: unknown kind '" + kind + "'");
}

}  // namespace derivkit
