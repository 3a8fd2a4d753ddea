#include "derivkit/cli.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "derivkit/curvature.hpp"
#include "derivkit/error.hpp"
#include "derivkit/normal_frames.hpp"
#include "derivkit/spec_io.hpp"

namespace derivkit {

namespace {

using Index = Eigen::Index;

Index ix(std::size_t i) { return static_cast<Index>(i); }

struct Options {
  std::string spec;
  std::string frame;
  std::string at;
  std::string out;
  std::string field;
  std::string curve;
  std::string seed_matrix;
  std::string nodes;
  std::string base;
  bool holonomic = false;
  double step = kDefaultStep;
  double tol = kGridTolerance;
  std::uint64_t probe_seed = kProbeSeed;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

Json verdict_json(bool holds, double residual) { return Json{{"holds", holds}, {"residual", residual}}; }

Json named_point(const Point& p, const Chart& chart) {
  Json out = Json::object();
  for (std::size_t a = 0; a < p.size(); ++a) out[chart.coordinate_names()[a]] = p[a];
  return out;
}

std::string describe_point(const Point& p, const Chart& chart) {
  std::string s;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (a) s += ", ";
    s += chart.coordinate_names()[a] + "=" + fmt(p[a]);
  }
  return s;
}

Point point_in_domain(const std::string& at, const Chart& chart) {
  if (at.empty()) throw InputError("--at is required");
  Point p = parse_point(at, chart);
  if (!chart.contains(p)) throw DomainError("point " + describe_point(p, chart) + " lies outside the domain box");
  return p;
}

Matrix initial_matrix(const Options& o, std::size_t n) {
  if (o.seed_matrix.empty()) return Matrix::Identity(ix(n), ix(n));
  return parse_matrix(o.seed_matrix, n);
}

std::string emit(const Json& j, const Options& o, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
  } else {
    write_file(o.out, text);
  }
  return text;
}

Json header(const ManifoldSpec& spec) { return Json{{"tool", kToolVersion}, {"input_digest", spec.digest}}; }

// ---------------------------------------------------------------------------

int cmd_analyze(const Options& o, std::ostream& out) {
  const ManifoldSpec spec = load_spec(o.spec);
  const Derivation& d = spec.d();
  const Chart& chart = *spec.chart;
  const std::size_t n = chart.dimension();
  const Point p = point_in_domain(o.at, chart);

  Json report = header(spec);
  report["probe_seed"] = o.probe_seed;
  report["point"] = named_point(p, chart);

  Json anholonomy = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    Json rows = Json::array();
    for (std::size_t j = 0; j < n; ++j) {
      Json row = Json::array();
      for (std::size_t k = 0; k < n; ++k) row.push_back(evaluate(spec.frame->anholonomy()(i, j, k), p));
      rows.push_back(std::move(row));
    }
    anholonomy.push_back(std::move(rows));
  }
  report["anholonomy"] = std::move(anholonomy);

  Json components = Json::array();
  for (const auto& w : gamma_at(d, p)) components.push_back(matrix_json(w));
  report["frame_vector_components"] = std::move(components);

  Json curvature = Json::array();
  Json torsion = Json::array();
  double obstruction = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const VectorField ea = VectorField::frame_vector(spec.frame, a);
      const VectorField eb = VectorField::frame_vector(spec.frame, b);
      const Matrix r = curvature_matrix(d, ea, eb).evaluate(p);
      obstruction = std::max(obstruction, max_abs(r));
      curvature.push_back(Json{{"pair", {a + 1, b + 1}}, {"matrix", matrix_json(r)}});
      torsion.push_back(Json{{"pair", {a + 1, b + 1}}, {"vector", torsion_vector(d, ea, eb).evaluate(p)}});
    }
  }
  report["curvature"] = std::move(curvature);
  report["torsion"] = std::move(torsion);
  report["curvature_at_point"] = obstruction;

  if (d.is_connection()) {
    const TensorField r = curvature_tensor(d);
    const TensorField t = torsion_tensor(d);
    Json rv = Json::array();
    for (const auto& e : r.components) rv.push_back(evaluate(e, p));
    Json tv = Json::array();
    for (const auto& e : t.components) tv.push_back(evaluate(e, p));
    report["curvature_tensor"] = Json{{"indices", "i,j,k,l row-major"}, {"values", std::move(rv)}};
    report["torsion_tensor"] = Json{{"indices", "i,k,l row-major"}, {"values", std::move(tv)}};
  }

  const Verdict flat = is_flat(d, o.probe_seed);
  const Verdict torsion_free = is_torsion_free(d, o.probe_seed);
  const LinearityVerdict linear = linearity_probe(d, p, o.probe_seed);
  Json verdicts;
  verdicts["flat"] = verdict_json(flat.holds, flat.residual);
  verdicts["torsion_free"] = verdict_json(torsion_free.holds, torsion_free.residual);
  verdicts["linear_at_point"] = verdict_json(linear.linear, linear.residual);
  if (!linear.linear) verdicts["linear_at_point"]["witness"] = linear.witness;
  report["verdicts"] = std::move(verdicts);
  emit(report, o, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int finish_frame(Json frame, const Json& verifier, bool passed, const Options& o, std::ostream& out,
                 std::ostream& err) {
  Json doc = frame;
  doc["verifier"] = verifier;
  emit(doc, o, out);
  if (!o.out.empty()) out << "wrote " << o.out << " (" << doc["kind"].get<std::string>() << " frame)\n";
  if (!passed) {
    err << "constructed frame failed its own verifier: " << verifier.dump() << "\n";
    return kExitVerifyFailed;
  }
  return kExitOk;
}

Json with_header(Json frame, const ManifoldSpec& spec) {
  Json doc = header(spec);
  for (auto& [k, v] : frame.items()) doc[k] = v;
  return doc;
}

int cmd_frame_point(const Options& o, std::ostream& out, std::ostream& err) {
  const ManifoldSpec spec = load_spec(o.spec);
  const Derivation& d = spec.d();
  const std::size_t n = spec.chart->dimension();
  PointFrameSpec ps;
  ps.x0 = point_in_domain(o.at, *spec.chart);
  if (!o.seed_matrix.empty()) ps.anchor = parse_matrix(o.seed_matrix, n);

  Json verifier;
  SymbolicFrame data;
  data.x0 = ps.x0;
  double residual = 0.0;
  if (!o.field.empty()) {
    const VectorField& x = spec.field(o.field);
    data.field = o.field;
    if (o.holonomic) {
      const HolonomicPointFrame h = frame_at_point_holonomic(d, x, ps);
      data.matrix = h.frame.transform.matrix;
      residual = h.frame.residual;
      verifier["certificate_asymmetry"] = h.certificate.asymmetry;
      verifier["commutator_at_point"] = h.anholonomy;
    } else {
      const PointFrame f = frame_at_point_general(d, x, ps);
      data.matrix = f.transform.matrix;
      residual = f.residual;
    }
    verifier["quantity"] = "max |W'_X(x0)|";
  } else {
    if (o.holonomic) throw InputError("--holonomic requires --field");
    const PointFrame f = frame_at_point_connection(d, ps);
    data.matrix = f.transform.matrix;
    residual = f.residual;
    const ShellGrowth g = shell_growth(d, f.transform, ps.x0);
    verifier["quantity"] = "max |W'_{E_k'}(x0)| over all k'";
    verifier["shell_growth"] = Json{{"far", g.far}, {"near", g.near}, {"ratio", g.ratio}};
    verifier["commutator_at_point"] = holonomicity_at_point(f.transform, ps.x0).commutator;
  }
  verifier["residual"] = residual;
  verifier["tolerance"] = kPointTolerance;
  return finish_frame(with_header(frame_json(data), spec), verifier, residual <= kPointTolerance, o, out, err);
}

int cmd_frame_curve(const Options& o, std::ostream& out, std::ostream& err) {
  const ManifoldSpec spec = load_spec(o.spec);
  const Derivation& d = spec.d();
  if (o.curve.empty() || o.field.empty()) throw InputError("frame curve requires --curve and --field");
  const VectorField& x = spec.field(o.field);
  const CurveSpec& curve = spec.curve(o.curve);
  const CurveFrame f = transport_along_curve(d, x, curve, initial_matrix(o, d.dimension()), o.step);
  const LocatedResidual r = curve_component_residual(d, x, curve, f.s, f.matrices);
  CurveFrameData data{o.curve, o.field, f.s, f.matrices};
  Json verifier{{"integral_curve_residual", f.integral_curve_residual},
                {"directional_residual", f.directional_residual},
                {"component_residual", r.value},
                {"tolerance", kGridTolerance}};
  return finish_frame(with_header(frame_json(data), spec), verifier, r.value <= kGridTolerance, o, out, err);
}

int cmd_frame_flat(const Options& o, std::ostream& out, std::ostream& err) {
  const ManifoldSpec spec = load_spec(o.spec);
  const Derivation& d = spec.d();
  const std::size_t n = d.dimension();
  const std::vector<std::size_t> counts = o.nodes.empty() ? std::vector<std::size_t>(n, 21) : parse_counts(o.nodes);
  const Lattice lattice = Lattice::over(*spec.chart, counts);
  FlatFrameOptions options;
  options.step = o.step;
  options.seed = o.probe_seed;
  if (!o.base.empty()) options.base = parse_counts(o.base);
  const GridFrame g = flat_frame_neighborhood(d, lattice, initial_matrix(o, n), options);
  GridFrameData data{g.lattice, g.base, g.matrices};
  Json verifier{{"component_residual", g.component_residual},
                {"path_discrepancy", g.path_discrepancy},
                {"tolerance", kGridTolerance}};
  if (std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c >= 5; })) {
    const HolonomicityReport h = holonomicity_on_grid(g, *spec.frame);
    verifier["commutator"] = h.commutator;
    verifier["commutator_tolerance"] = h.tolerance;
    verifier["holonomic"] = h.holonomic;
  }
  const bool passed = g.component_residual <= kGridTolerance && g.path_discrepancy <= kGridTolerance;
  return finish_frame(with_header(frame_json(data), spec), verifier, passed, o, out, err);
}

// ---------------------------------------------------------------------------

int cmd_verify(const Options& o, std::ostream& out) {
  const ManifoldSpec spec = load_spec(o.spec);
  const Derivation& d = spec.d();
  const Chart& chart = *spec.chart;
  const std::size_t n = chart.dimension();
  const FrameData frame = parse_frame(read_file(o.frame), spec);

  double worst = 0.0;
  std::string where;
  if (const auto* f = std::get_if<SymbolicFrame>(&frame)) {
    if (!chart.contains(f->x0)) throw DomainError("frame locus lies outside the domain box");
    const FrameTransform t{spec.frame, f->matrix};
    out << "kind: symbolic at " << describe_point(f->x0, chart) << "\n";
    if (f->field) {
      const VectorField& x = spec.field(*f->field);
      const Matrix a0 = f->matrix.evaluate(f->x0);
      if (!(std::abs(a0.determinant()) > kDegenerateDeterminant)) throw DomainError("frame matrix is singular at x0");
      const Matrix w = transform_w(w_of(d, x), x, t).evaluate(f->x0);
      worst = max_abs(w);
      out << "  W'_" << *f->field << "(x0): max " << fmt(worst) << "\n";
      where = "field " + *f->field;
    } else {
      const auto ws = transformed_components_at(d, t, f->x0);
      for (std::size_t k = 0; k < ws.size(); ++k) {
        const double r = max_abs(ws[k]);
        out << "  W'_{E" << k + 1 << "'}(x0): max " << fmt(r) << "\n";
        if (r > worst || where.empty()) {
          worst = std::max(worst, r);
          where = "frame vector E" + std::to_string(k + 1) + "'";
        }
      }
    }
  } else if (const auto* c = std::get_if<CurveFrameData>(&frame)) {
    const VectorField& x = spec.field(c->field);
    const CurveSpec& curve = spec.curve(c->curve);
    const LocatedResidual r = curve_component_residual(d, x, curve, c->s, c->matrices);
    worst = r.value;
    out << "kind: curve " << c->curve << " along " << c->field << " (" << c->s.size() << " nodes)\n";
    where = "segment s in [" + fmt(c->s[r.location]) + ", " + fmt(c->s[r.location + 1]) + "]";
  } else {
    const auto& g = std::get<GridFrameData>(frame);
    if (g.lattice.dimension() != n) throw InputError("frame lattice dimension does not match the spec");
    const LocatedResidual r = grid_component_residual(d, g.lattice, g.matrices);
    worst = r.value;
    const auto idx = g.lattice.index(r.location);
    std::string node;
    for (std::size_t a = 0; a < idx.size(); ++a) node += (a ? "," : "") + std::to_string(idx[a]);
    out << "kind: grid (" << g.matrices.size() << " nodes)\n";
    where = "node [" + node + "] at " + describe_point(g.lattice.node(idx), chart);
  }
  const bool pass = worst <= o.tol;
  out << "max residual: " << fmt(worst) << " (" << where << ")\n";
  out << "tolerance: " << fmt(o.tol) << "\n";
  out << "result: " << (pass ? "pass" : "fail") << "\n";
  return pass ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Components, curvature, torsion and vanishing-component frames of derivations"};
  app.name("derivkit");
  app.require_subcommand(1);
  Options o;

  auto* analyze = app.add_subcommand("analyze", "Report anholonomy, curvature, torsion and verdicts at a point");
  analyze->add_option("spec", o.spec, "Manifold spec (JSON)")->required();
  analyze->add_option("--at", o.at, "Point, e.g. r=1,theta=0.5")->required();
  analyze->add_option("--probe-seed", o.probe_seed, "Seed for probe fields");
  analyze->add_option("--out", o.out, "Write the report here instead of stdout");

  auto* frame = app.add_subcommand("frame", "Construct a frame in which the components vanish");
  frame->add_option("spec", o.spec, "Manifold spec (JSON)")->required();
  frame->require_subcommand(1);
  auto* point = frame->add_subcommand("point", "At a point (all components, or along --field)");
  auto* curve = frame->add_subcommand("curve", "Along an integral curve of --field");
  auto* flat = frame->add_subcommand("flat", "On a lattice over the domain box");
  for (auto* sub : {point, curve, flat}) {
    sub->add_option("--out", o.out, "Frame file to write (stdout if omitted)");
    sub->add_option("--seed-matrix", o.seed_matrix, "Value of A at the base locus, rows separated by ';'");
  }
  point->add_option("--at", o.at, "Point x0")->required();
  point->add_option("--field", o.field, "Named field X: only W_X is made to vanish");
  point->add_flag("--holonomic", o.holonomic, "Choose first derivatives so the new frame commutes at x0");
  curve->add_option("--curve", o.curve, "Named curve")->required();
  curve->add_option("--field", o.field, "Named field the curve integrates")->required();
  curve->add_option("--step", o.step, "Integration step");
  flat->add_option("--nodes", o.nodes, "Lattice nodes per axis, e.g. 21,21");
  flat->add_option("--base", o.base, "Basepoint lattice index, e.g. 0,0");
  flat->add_option("--step", o.step, "Integration step");
  flat->add_option("--probe-seed", o.probe_seed, "Seed for the precondition probes and audit");

  auto* verify = app.add_subcommand("verify", "Recompute transformed components from a frame file");
  verify->add_option("spec", o.spec, "Manifold spec (JSON)")->required();
  verify->add_option("frame", o.frame, "Frame file (JSON)")->required();
  verify->add_option("--tol", o.tol, "Pass threshold for the max residual");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*analyze) return cmd_analyze(o, out);
    if (*verify) return cmd_verify(o, out);
    if (*point) return cmd_frame_point(o, out, err);
    if (*curve) return cmd_frame_curve(o, out, err);
    return cmd_frame_flat(o, out, err);
  } catch (const FlatnessError& e) {
    err << "error (not flat): " << e.what() << "\nobstruction: " << e.obstruction() << "\n";
    return kExitFlatness;
  } catch (const ExistenceError& e) {
    err << "error (no such frame): " << e.what() << "\n";
    return kExitExistence;
  } catch (const DomainError& e) {
    err << "error (domain): " << e.what() << "\n";
    return kExitDomain;
  } catch (const InputError& e) {
    err << "error (input): " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace derivkit
