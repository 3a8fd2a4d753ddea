#include <doctest.h>

#include <cmath>
#include <numbers>

#include "derivkit/error.hpp"
#include "derivkit/expr.hpp"
#include "derivkit/sampling.hpp"
#include "support.hpp"

using namespace derivkit;

namespace {

const SymbolTable polar({"r", "theta"});

Expr p(const std::string& s) { return parse_expr(s, polar); }

double at(const Expr& e, double r, double theta) {
  const double v[] = {r, theta};
  return evaluate(e, v);
}

}  // namespace

TEST_CASE("parse: single symbol and precedence of unary minus below power") {
  const Expr r = p("r");
  CHECK(r.op() == Op::symbol);
  CHECK(r.symbol().name == "r");

  const Expr e = p("-(r^2)*sin(theta)");
  REQUIRE(e.op() == Op::multiply);
  CHECK(e.lhs().op() == Op::negate);
  CHECK(e.lhs().operand().op() == Op::power);
  CHECK(e.rhs().op() == Op::function);

  const Expr m = p("-r^2");
  REQUIRE(m.op() == Op::negate);
  CHECK(m.operand().op() == Op::power);
  CHECK(at(m, 3.0, 0.0) == -9.0);
  CHECK(at(p("2^3^2"), 1, 1) == 512.0);
  CHECK(at(p("8/2/2"), 1, 1) == 2.0);
  CHECK(at(p("1.5e1 + .5"), 1, 1) == 15.5);
}

TEST_CASE("parse errors carry positions") {
  try {
    p("1/r + q");
    FAIL("expected a parse error");
  } catch (const ParseError& err) {
    CHECK(err.position() == 6);
    CHECK(std::string(err.what()).find("q") != std::string::npos);
  }
  CHECK_THROWS_AS(p("r +"), ParseError);
  CHECK_THROWS_AS(p("sin(r, theta)"), ParseError);
  CHECK_THROWS_AS(p("r(theta)"), ParseError);
  CHECK_THROWS_AS(p("dX[1,1]"), ParseError);
  CHECK_THROWS_AS(p("X1"), ParseError);
  CHECK_THROWS_AS(p("(r"), ParseError);
  CHECK_THROWS_AS(p("r theta"), ParseError);
  const SymbolTable with_x = polar.with_vector_symbols();
  CHECK_NOTHROW(parse_expr("dX[1,2]*X2", with_x));
  CHECK_THROWS_AS(parse_expr("dX[3,1]", with_x), ParseError);
  CHECK_THROWS_AS(parse_expr("X3", with_x), ParseError);
}

TEST_CASE("differentiate: product, power and independent symbols") {
  const Expr d = differentiate(p("r^2*sin(theta)"), polar.coordinate(0));
  for (double r : {0.5, 1.0, 2.0}) {
    for (double t : {0.1, 0.7}) CHECK(at(d, r, t) == doctest::Approx(2 * r * std::sin(t)).epsilon(1e-15));
  }
  CHECK(differentiate(p("r"), polar.coordinate(1)).is_zero());
}

TEST_CASE("differentiate agrees with central differences") {
  const char* functions[] = {"log(r)",          "r^2*sin(theta)",    "sqrt(r)*cos(theta)", "tan(theta)/r",
                             "exp(r*theta)",    "sinh(r)-cosh(theta)", "r^theta",           "sin(theta)^2/r^3",
                             "-r^2*cos(theta)", "(r+theta)^(-1.5)"};
  const double h = 1e-5;
  for (const char* f : functions) {
    const Expr e = p(f);
    for (std::size_t a = 0; a < 2; ++a) {
      const Expr d = differentiate(e, polar.coordinate(a));
      for (double r : {1.3, 2.0}) {
        for (double t : {0.4, 0.9}) {
          double plus[] = {r, t};
          double minus[] = {r, t};
          plus[a] += h;
          minus[a] -= h;
          const double fd = (evaluate(e, plus) - evaluate(e, minus)) / (2 * h);
          const double exact = at(d, r, t);
          CAPTURE(f);
          CHECK(std::abs(fd - exact) <= 1e-6 * std::max(1.0, std::abs(exact)));
        }
      }
    }
  }
  // The stated log(r) case at r = 2: relative error of the h = 1e-5 difference.
  const Expr d = differentiate(p("log(r)"), polar.coordinate(0));
  const double fd = (std::log(2.0 + h) - std::log(2.0 - h)) / (2 * h);
  CHECK(std::abs(fd - at(d, 2.0, 0.0)) / 0.5 <= 1e-9);
}

TEST_CASE("evaluate: values and domain errors") {
  CHECK(at(p("sin(theta)"), 1.0, 0.0) == 0.0);
  CHECK(at(p("r^2*sin(theta)"), 2.0, std::numbers::pi / 6) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(at(p("1/r"), 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(at(p("log(r)"), 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(at(p("log(r)"), -1.0, 0.0), DomainError);
  CHECK_THROWS_AS(at(p("sqrt(r)"), -1.0, 0.0), DomainError);
  CHECK_THROWS_AS(at(p("r^(-1)"), 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(at(p("exp(r)"), 1000.0, 0.0), DomainError);
  CHECK_THROWS_AS(evaluate(p("r"), std::map<std::string, double>{{"theta", 1.0}}), InputError);
  CHECK(evaluate(p("r*theta"), std::map<std::string, double>{{"r", 2.0}, {"theta", 3.0}}) == 6.0);
}

TEST_CASE("simplify: identity rules and constant folding") {
  CHECK(structurally_equal(simplify(p("0*sin(theta)+r*1")), p("r")));
  CHECK(simplify(p("2+3")).value() == 5.0);
  const Expr trig = p("sin(theta)^2+cos(theta)^2");
  CHECK(structurally_equal(simplify(trig), trig));
  CHECK(structurally_equal(simplify(p("--r")), p("r")));
  CHECK(structurally_equal(simplify(p("r^1")), p("r")));
  CHECK(simplify(p("0/r")).is_zero());
}

TEST_CASE("simplify preserves values") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Expr e = fixtures::random_tree(rng, 4, polar);
    const Expr s = simplify(e);
    for (int k = 0; k < 5; ++k) {
      const double r = rng.uniform(0.5, 2.0);
      const double t = rng.uniform(0.1, 1.4);
      double v = 0.0;
      try {
        v = at(e, r, t);
      } catch (const DomainError&) {
        continue;
      }
      double w = 0.0;
      try {
        w = at(s, r, t);
      } catch (const DomainError&) {
        // Folding may cancel a subexpression whose evaluation failed, never the reverse.
        FAIL("simplified expression failed where the original did not: " << to_string(e));
      }
      CHECK(std::abs(v - w) <= 1e-12 * (1 + std::abs(v)));
    }
  }
}

TEST_CASE("substitute binds vector symbols") {
  const SymbolTable table = polar.with_vector_symbols();
  const Expr e = parse_expr("X1 + r", table);
  const Expr s = substitute(e, {{"X1", p("r")}}, polar);
  CHECK(at(s, 1.5, 0.0) == 3.0);
  CHECK_FALSE(references_vector_symbols(s));

  const Expr d = parse_expr("dX[1,2]*sin(theta)", table);
  CHECK(simplify(substitute(d, {{"dX[1,2]", Expr::constant(0.0)}}, polar)).is_zero());

  const SymbolTable other({"q"});
  CHECK_THROWS_AS(substitute(e, {{"X1", parse_expr("q", other)}}, polar), InputError);
}

TEST_CASE("substitute reproduces one column of a contraction template") {
  // Polar coefficients G^i_jk (k the direction): G^1_22 = -r, G^2_12 = G^2_21 = 1/r.
  const SymbolTable table = polar.with_vector_symbols();
  const char* gamma[2][2][2] = {{{"0", "0"}, {"0", "-r"}}, {{"0", "1/r"}, {"1/r", "0"}}};
  const std::map<std::string, Expr> first{{"X1", Expr::constant(1.0)}, {"X2", Expr::constant(0.0)}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const std::string w = std::string("(") + gamma[i][j][0] + ")*X1 + (" + gamma[i][j][1] + ")*X2";
      const Expr column = simplify(substitute(parse_expr(w, table), first, polar));
      CHECK_FALSE(references_vector_symbols(column));
      CHECK(at(column, 1.7, 0.3) == at(p(gamma[i][j][0]), 1.7, 0.3));
    }
  }
}

TEST_CASE("printer round trip is exact on seeded random trees") {
  Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const Expr e = fixtures::random_tree(rng, 5, polar);
    const std::string text = to_string(e);
    const Expr back = p(text);
    CAPTURE(text);
    REQUIRE(structurally_equal(e, back));
    CHECK(to_string(back) == text);
    for (int k = 0; k < 3; ++k) {
      const double r = rng.uniform(0.5, 2.0);
      const double t = rng.uniform(0.1, 1.4);
      bool failed_e = false;
      bool failed_b = false;
      double v = 0.0;
      double w = 0.0;
      try {
        v = at(e, r, t);
      } catch (const DomainError&) {
        failed_e = true;
      }
      try {
        w = at(back, r, t);
      } catch (const DomainError&) {
        failed_b = true;
      }
      CHECK(failed_e == failed_b);
      if (!failed_e) CHECK(v == w);
    }
  }
}

TEST_CASE("printer keeps negative constants and nested signs reparsable") {
  const Expr e = Expr::make_binary(Op::subtract, Expr::symbol(polar.coordinate(0)),
                                   Expr::make_unary(Op::negate, Expr::constant(2.0)));
  CHECK(structurally_equal(p(to_string(e)), e));
  const Expr q = Expr::make_binary(Op::power, Expr::make_unary(Op::negate, Expr::symbol(polar.coordinate(0))),
                                   Expr::constant(2.0));
  CHECK(structurally_equal(p(to_string(q)), q));
  CHECK(at(q, 3.0, 0.0) == 9.0);
  const Expr tiny = Expr::constant(1.0 / 3.0);
  CHECK(p(to_string(tiny)).value() == 1.0 / 3.0);
}
