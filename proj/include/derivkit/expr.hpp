#pragma once

// Symbolic scalar expressions over chart coordinates.
//
// An Expr is an immutable tree (shared subtrees are allowed, so in practice a
// DAG) built from double constants, symbols, the four arithmetic operators,
// exponentiation and a fixed set of eight elementary functions. Three symbol
// kinds exist:
//
//   coordinate        a chart coordinate such as `r` or `theta`
//   vector_component  `X1 .. Xn`, the frame components of a formal vector field
//   frame_derivative  `dX[i,j]`, meaning E_j(X^i) for that formal field
//
// The last two only appear in derivation templates and are substituted away
// before evaluation at a point.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace derivkit {

enum class SymbolKind : std::uint8_t { coordinate, vector_component, frame_derivative };

struct Symbol {
  SymbolKind kind = SymbolKind::coordinate;
  // Zero-based. For frame_derivative `index` is the component i and `second`
  // the frame leg j of dX[i,j].
  int index = 0;
  int second = 0;
  std::string name;

  friend bool operator==(const Symbol&, const Symbol&) = default;
};

enum class Function : std::uint8_t { sin, cos, tan, exp, log, sqrt, sinh, cosh };

std::string_view function_name(Function f);
std::optional<Function> function_from_name(std::string_view name);

enum class Op : std::uint8_t {
  constant,
  symbol,
  negate,
  add,
  subtract,
  multiply,
  divide,
  power,
  function,
};

struct ExprNode;

class Expr {
 public:
  // The constant zero.
  Expr();

  // Negative values are stored as negate(constant(|c|)) so that every tree
  // prints to text that reparses to the same tree. Non-finite values throw.
  static Expr constant(double value);
  static Expr symbol(Symbol s);

  // Node constructors that never fold; used by the parser and by tests that
  // need an exact tree shape.
  static Expr make_unary(Op op, Expr operand);
  static Expr make_binary(Op op, Expr lhs, Expr rhs);
  static Expr make_function(Function f, Expr argument);

  Op op() const;
  double value() const;
  const Symbol& symbol() const;
  Function function() const;
  // Single child of negate/function nodes.
  Expr operand() const;
  Expr lhs() const;
  Expr rhs() const;

  bool is_constant() const { return op() == Op::constant; }
  // True for constant nodes and for negated constants.
  std::optional<double> constant_value() const;
  bool is_zero() const;
  bool is_one() const;

  const ExprNode* id() const { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}
  std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
  Op op = Op::constant;
  double value = 0.0;
  Symbol symbol;
  Function function = Function::sin;
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
};

// Arithmetic that folds constants and applies the identity rules of
// simplify() at the node being built. Children are not revisited.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);
Expr apply(Function f, const Expr& argument);

inline Expr operator*(double c, const Expr& e) { return Expr::constant(c) * e; }
inline Expr operator+(const Expr& e, double c) { return e + Expr::constant(c); }
inline Expr operator-(const Expr& e, double c) { return e - Expr::constant(c); }

// The declared symbols an expression may reference.
class SymbolTable {
 public:
  // Coordinate names must be distinct identifiers that do not collide with
  // function names, `dX`, or the `X<k>` component names.
  explicit SymbolTable(std::vector<std::string> coordinates, bool allow_vector_symbols = false);

  std::size_t dimension() const { return coordinates_.size(); }
  const std::vector<std::string>& coordinates() const { return coordinates_; }
  bool allows_vector_symbols() const { return allow_vector_symbols_; }
  SymbolTable with_vector_symbols() const;

  Symbol coordinate(std::size_t index) const;
  Symbol component(std::size_t index) const;
  Symbol frame_derivative(std::size_t i, std::size_t j) const;

  // Resolves an identifier to a coordinate or an `X<k>` symbol.
  std::optional<Symbol> lookup(std::string_view name) const;
  bool declares(const Symbol& s) const;

 private:
  std::vector<std::string> coordinates_;
  bool allow_vector_symbols_;
};

// Parses `source` under the DSL grammar:
//
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := "-" factor | base
//   base   := atom ("^" factor)?
//   atom   := NUMBER | IDENT | IDENT "(" expr ")" | IDENT "[" INT "," INT "]"
//           | "(" expr ")"
//
// Throws ParseError for syntax errors, unknown identifiers and arity
// mismatches.
Expr parse_expr(std::string_view source, const SymbolTable& symbols);

// Prints `e` so that parse_expr reproduces the identical tree.
std::string to_string(const Expr& e);

// Partial derivative with respect to a coordinate symbol; other symbols are
// treated as independent of it.
Expr differentiate(const Expr& e, const Symbol& s);
Expr differentiate(const Expr& e, std::size_t coordinate_index);

struct Valuation {
  std::span<const double> coordinates;
  std::span<const double> components;
  // dX[i,j] stored row-major, i * n + j.
  std::span<const double> frame_derivatives;
};

// Throws DomainError for poles, logs and roots of negative arguments, 0 raised
// to a negative power, and any non-finite intermediate. Throws InputError when
// a symbol has no value.
double evaluate(const Expr& e, const Valuation& at);
double evaluate(const Expr& e, std::span<const double> coordinates);
double evaluate(const Expr& e, const std::map<std::string, double>& assignment);

// Constant folding plus the identities x+0, x*1, x*0, x^1, 0/x and double
// negation, iterated to a fixed point. No trigonometric or canonical rewriting.
Expr simplify(const Expr& e);

// Replaces bound symbols (keyed by printed name, e.g. "X1" or "dX[1,2]").
// Throws InputError if a replacement references a symbol `symbols` does not
// declare as a coordinate.
Expr substitute(const Expr& e, const std::map<std::string, Expr>& bindings, const SymbolTable& symbols);
Expr substitute(const Expr& e, const std::function<std::optional<Expr>(const Symbol&)>& binding);

bool structurally_equal(const Expr& a, const Expr& b);
std::set<std::string> symbol_names(const Expr& e);
// Distinct symbols in first-visit order.
std::vector<Symbol> symbols_of(const Expr& e);
bool references_vector_symbols(const Expr& e);
// Number of distinct nodes in the expression DAG.
std::size_t node_count(const Expr& e);

}  // namespace derivkit
