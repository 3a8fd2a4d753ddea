#include "derivkit/expr.hpp"

#include <charconv>
#include <cmath>
#include <unordered_map>
#include <utility>

#include "derivkit/error.hpp"

namespace derivkit {

namespace {

constexpr std::pair<Function, std::string_view> kFunctions[] = {
    {Function::sin, "sin"},   {Function::cos, "cos"},   {Function::tan, "tan"},
    {Function::exp, "exp"},   {Function::log, "log"},   {Function::sqrt, "sqrt"},
    {Function::sinh, "sinh"}, {Function::cosh, "cosh"},
};

std::shared_ptr<const ExprNode> make_node(ExprNode node) {
  return std::make_shared<const ExprNode>(std::move(node));
}

const std::shared_ptr<const ExprNode>& zero_node() {
  static const auto zero = make_node(ExprNode{});
  return zero;
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(s[0])) return false;
  for (char c : s) {
    if (!alpha(c) && !digit(c)) return false;
  }
  return true;
}

// Parses "X<k>" with k >= 1; returns k - 1.
std::optional<int> component_index(std::string_view name) {
  if (name.size() < 2 || name[0] != 'X') return std::nullopt;
  int k = 0;
  auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
  if (ec != std::errc{} || ptr != name.data() + name.size() || k < 1 || name[1] == '0') {
    return std::nullopt;
  }
  return k - 1;
}

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string("non-finite result in ") + what);
  return v;
}

double apply_function(Function f, double x) {
  switch (f) {
    case Function::sin: return std::sin(x);
    case Function::cos: return std::cos(x);
    case Function::tan: return checked(std::tan(x), "tan");
    case Function::exp: return checked(std::exp(x), "exp");
    case Function::log:
      if (!(x > 0.0)) throw DomainError("log of non-positive argument");
      return std::log(x);
    case Function::sqrt:
      if (x < 0.0) throw DomainError("sqrt of negative argument");
      return std::sqrt(x);
    case Function::sinh: return checked(std::sinh(x), "sinh");
    case Function::cosh: return checked(std::cosh(x), "cosh");
  }
  return 0.0;
}

double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::add: return checked(a + b, "addition");
    case Op::subtract: return checked(a - b, "subtraction");
    case Op::multiply: return checked(a * b, "multiplication");
    case Op::divide:
      if (b == 0.0) throw DomainError("division by zero");
      return checked(a / b, "division");
    case Op::power:
      if (a == 0.0 && b < 0.0) throw DomainError("zero raised to a negative power");
      if (a < 0.0 && b != std::trunc(b)) throw DomainError("negative base with non-integer exponent");
      return checked(std::pow(a, b), "power");
    default: break;
  }
  return 0.0;
}

}  // namespace

std::string_view function_name(Function f) {
  for (const auto& [fn, name] : kFunctions) {
    if (fn == f) return name;
  }
  return "?";
}

std::optional<Function> function_from_name(std::string_view name) {
  for (const auto& [fn, fname] : kFunctions) {
    if (fname == name) return fn;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Expr

Expr::Expr() : node_(zero_node()) {}

Expr Expr::constant(double value) {
  if (!std::isfinite(value)) throw DomainError("non-finite constant");
  if (value == 0.0) return Expr();
  if (value < 0.0) return make_unary(Op::negate, constant(-value));
  ExprNode n;
  n.value = value;
  return Expr(make_node(std::move(n)));
}

Expr Expr::symbol(Symbol s) {
  ExprNode n;
  n.op = Op::symbol;
  n.symbol = std::move(s);
  return Expr(make_node(std::move(n)));
}

Expr Expr::make_unary(Op op, Expr operand) {
  ExprNode n;
  n.op = op;
  n.lhs = operand.node_;
  return Expr(make_node(std::move(n)));
}

Expr Expr::make_binary(Op op, Expr lhs, Expr rhs) {
  ExprNode n;
  n.op = op;
  n.lhs = lhs.node_;
  n.rhs = rhs.node_;
  return Expr(make_node(std::move(n)));
}

Expr Expr::make_function(Function f, Expr argument) {
  ExprNode n;
  n.op = Op::function;
  n.function = f;
  n.lhs = argument.node_;
  return Expr(make_node(std::move(n)));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
const Symbol& Expr::symbol() const { return node_->symbol; }
Function Expr::function() const { return node_->function; }
Expr Expr::operand() const { return Expr(node_->lhs); }
Expr Expr::lhs() const { return Expr(node_->lhs); }
Expr Expr::rhs() const { return Expr(node_->rhs); }

std::optional<double> Expr::constant_value() const {
  if (op() == Op::constant) return value();
  if (op() == Op::negate && node_->lhs->op == Op::constant) return -node_->lhs->value;
  return std::nullopt;
}

bool Expr::is_zero() const { return op() == Op::constant && value() == 0.0; }
bool Expr::is_one() const { return op() == Op::constant && value() == 1.0; }

// ---------------------------------------------------------------------------
// Folding constructors

Expr operator-(const Expr& a) {
  if (a.is_zero()) return a;
  if (a.op() == Op::negate) return a.operand();
  return Expr::make_unary(Op::negate, a);
}

Expr operator+(const Expr& a, const Expr& b) {
  auto ca = a.constant_value();
  auto cb = b.constant_value();
  if (ca && cb) return Expr::constant(*ca + *cb);
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (b.op() == Op::negate) {
    if (structurally_equal(a, b.operand())) return Expr();
    return Expr::make_binary(Op::subtract, a, b.operand());
  }
  if (a.op() == Op::negate && structurally_equal(a.operand(), b)) return Expr();
  return Expr::make_binary(Op::add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  auto ca = a.constant_value();
  auto cb = b.constant_value();
  if (ca && cb) return Expr::constant(*ca - *cb);
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  if (structurally_equal(a, b)) return Expr();
  if (b.op() == Op::negate) return a + b.operand();
  return Expr::make_binary(Op::subtract, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  auto ca = a.constant_value();
  auto cb = b.constant_value();
  if (ca && cb) return Expr::constant(*ca * *cb);
  if (a.is_zero() || b.is_zero()) return Expr();
  if (a.is_one()) return b;
  if (b.is_one()) return a;
  if (a.op() == Op::negate) return -(a.operand() * b);
  if (b.op() == Op::negate) return -(a * b.operand());
  // c1 * (c2 * x) -> (c1 c2) * x
  if (ca && b.op() == Op::multiply && b.lhs().is_constant()) {
    return Expr::constant(*ca * b.lhs().value()) * b.rhs();
  }
  // Constants go on the left.
  if (cb && !ca) return b * a;
  return Expr::make_binary(Op::multiply, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  auto ca = a.constant_value();
  auto cb = b.constant_value();
  if (cb && *cb == 0.0) return Expr::make_binary(Op::divide, a, b);
  if (ca && cb) return Expr::constant(*ca / *cb);
  if (a.is_zero()) return Expr();
  if (b.is_one()) return a;
  if (a.op() == Op::negate) return -(a.operand() / b);
  if (b.op() == Op::negate) return -(a / b.operand());
  return Expr::make_binary(Op::divide, a, b);
}

Expr pow(const Expr& base, const Expr& exponent) {
  auto cb = base.constant_value();
  auto ce = exponent.constant_value();
  if (ce && *ce == 1.0) return base;
  if (ce && *ce == 0.0) return Expr::constant(1.0);
  if (cb && ce) {
    try {
      return Expr::constant(apply_binary(Op::power, *cb, *ce));
    } catch (const DomainError&) {
    }
  }
  return Expr::make_binary(Op::power, base, exponent);
}

Expr apply(Function f, const Expr& argument) {
  if (auto c = argument.constant_value()) {
    try {
      return Expr::constant(apply_function(f, *c));
    } catch (const DomainError&) {
    }
  }
  return Expr::make_function(f, argument);
}

// ---------------------------------------------------------------------------
// SymbolTable

SymbolTable::SymbolTable(std::vector<std::string> coordinates, bool allow_vector_symbols)
    : coordinates_(std::move(coordinates)), allow_vector_symbols_(allow_vector_symbols) {
  for (std::size_t i = 0; i < coordinates_.size(); ++i) {
    const auto& name = coordinates_[i];
    if (!is_identifier(name)) throw InputError("invalid coordinate name '" + name + "'");
    if (function_from_name(name) || name == "dX" || component_index(name)) {
      throw InputError("coordinate name '" + name + "' is reserved");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (coordinates_[j] == name) throw InputError("duplicate coordinate name '" + name + "'");
    }
  }
}

SymbolTable SymbolTable::with_vector_symbols() const { return SymbolTable(coordinates_, true); }

Symbol SymbolTable::coordinate(std::size_t index) const {
  return Symbol{SymbolKind::coordinate, static_cast<int>(index), 0, coordinates_.at(index)};
}

Symbol SymbolTable::component(std::size_t index) const {
  return Symbol{SymbolKind::vector_component, static_cast<int>(index), 0, "X" + std::to_string(index + 1)};
}

Symbol SymbolTable::frame_derivative(std::size_t i, std::size_t j) const {
  return Symbol{SymbolKind::frame_derivative, static_cast<int>(i), static_cast<int>(j),
                "dX[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]"};
}

std::optional<Symbol> SymbolTable::lookup(std::string_view name) const {
  for (std::size_t i = 0; i < coordinates_.size(); ++i) {
    if (coordinates_[i] == name) return coordinate(i);
  }
  if (allow_vector_symbols_) {
    if (auto k = component_index(name); k && static_cast<std::size_t>(*k) < dimension()) {
      return component(static_cast<std::size_t>(*k));
    }
  }
  return std::nullopt;
}

bool SymbolTable::declares(const Symbol& s) const {
  const auto n = static_cast<int>(dimension());
  switch (s.kind) {
    case SymbolKind::coordinate:
      return s.index >= 0 && s.index < n && coordinates_[static_cast<std::size_t>(s.index)] == s.name;
    case SymbolKind::vector_component:
      return allow_vector_symbols_ && s.index >= 0 && s.index < n;
    case SymbolKind::frame_derivative:
      return allow_vector_symbols_ && s.index >= 0 && s.index < n && s.second >= 0 && s.second < n;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
 public:
  Parser(std::string_view src, const SymbolTable& symbols) : src_(src), symbols_(symbols) {}

  Expr parse() {
    Expr e = expr();
    skip_space();
    if (pos_ != src_.size()) fail("unexpected character", "one of '+', '-', '*', '/', '^' or end of input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what, const std::string& expected) const {
    throw ParseError(what + "; expected " + expected, pos_);
  }

  void skip_space() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail("syntax error", std::string("'") + c + "'");
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::make_binary(Op::add, lhs, term());
      } else if (accept('-')) {
        lhs = Expr::make_binary(Op::subtract, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::make_binary(Op::multiply, lhs, factor());
      } else if (accept('/')) {
        lhs = Expr::make_binary(Op::divide, lhs, factor());
      } else {
        return lhs;
      }
    }
  }

  Expr factor() {
    if (accept('-')) return Expr::make_unary(Op::negate, factor());
    return base();
  }

  Expr base() {
    Expr a = atom();
    if (accept('^')) return Expr::make_binary(Op::power, a, factor());
    return a;
  }

  Expr atom() {
    skip_space();
    if (pos_ >= src_.size()) fail("unexpected end of input", "number, identifier or '('");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return number();
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_') return identifier();
    fail(std::string("unexpected character '") + c + "'", "number, identifier or '('");
  }

  Expr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t count = 0;
      while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') {
        ++pos_;
        ++count;
      }
      return count;
    };
    std::size_t mantissa = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) {
      pos_ = start;
      fail("malformed number", "digit");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) fail("malformed exponent", "digit");
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (ec != std::errc{} || ptr != src_.data() + pos_ || !std::isfinite(value)) {
      pos_ = start;
      fail("number out of range", "finite number");
    }
    return value == 0.0 ? Expr() : Expr::constant(value);
  }

  std::size_t integer() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_;
    if (start == pos_) fail("syntax error", "integer index");
    std::size_t v = 0;
    std::from_chars(src_.data() + start, src_.data() + pos_, v);
    return v;
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_') {
        ++pos_;
      } else {
        break;
      }
    }
    const std::string_view name = src_.substr(start, pos_ - start);
    skip_space();
    const bool call = pos_ < src_.size() && src_[pos_] == '(';
    const bool index = pos_ < src_.size() && src_[pos_] == '[';

    if (auto f = function_from_name(name)) {
      if (!call) fail("function '" + std::string(name) + "' requires an argument", "'('");
      ++pos_;
      Expr arg = expr();
      if (accept(',')) {
        pos_ = start;
        fail("arity mismatch: '" + std::string(name) + "' takes one argument", "')'");
      }
      expect(')');
      return Expr::make_function(*f, arg);
    }
    if (index) {
      if (name != "dX") {
        pos_ = start;
        fail("indexing is only defined for dX", "operator or end of input");
      }
      if (!symbols_.allows_vector_symbols()) {
        pos_ = start;
        fail("unknown identifier 'dX'", "declared symbol");
      }
      ++pos_;
      const std::size_t i = integer();
      expect(',');
      const std::size_t j = integer();
      expect(']');
      const std::size_t n = symbols_.dimension();
      if (i < 1 || i > n || j < 1 || j > n) {
        pos_ = start;
        fail("dX index out of range", "indices in 1.." + std::to_string(n));
      }
      return Expr::symbol(symbols_.frame_derivative(i - 1, j - 1));
    }
    auto sym = symbols_.lookup(name);
    if (!sym) {
      pos_ = start;
      fail("unknown identifier '" + std::string(name) + "'", "declared symbol");
    }
    if (call) {
      pos_ = start;
      fail("arity mismatch: '" + std::string(name) + "' is not a function", "operator or end of input");
    }
    return Expr::symbol(*sym);
  }

  std::string_view src_;
  const SymbolTable& symbols_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view source, const SymbolTable& symbols) {
  return Parser(source, symbols).parse();
}

// ---------------------------------------------------------------------------
// Printer

namespace {

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string print_expr(const Expr& e);
std::string print_factor(const Expr& e, bool leading);

std::string print_atom(const Expr& e) {
  switch (e.op()) {
    case Op::constant: return format_number(e.value());
    case Op::symbol: return e.symbol().name;
    case Op::function:
      return std::string(function_name(e.function())) + "(" + print_expr(e.operand()) + ")";
    default: return "(" + print_expr(e) + ")";
  }
}

std::string print_base(const Expr& e) {
  if (e.op() == Op::power) return print_atom(e.lhs()) + "^" + print_factor(e.rhs(), false);
  return print_atom(e);
}

// Negations that do not start a term are wrapped in parentheses; the parser
// drops parentheses, so the tree is unchanged.
std::string print_factor(const Expr& e, bool leading) {
  if (e.op() == Op::negate) {
    std::string s = "-" + print_factor(e.operand(), false);
    return leading ? s : "(" + s + ")";
  }
  return print_base(e);
}

std::string print_term(const Expr& e, bool leading) {
  if (e.op() == Op::multiply || e.op() == Op::divide) {
    return print_term(e.lhs(), leading) + (e.op() == Op::multiply ? "*" : "/") + print_factor(e.rhs(), false);
  }
  return print_factor(e, leading);
}

std::string print_expr(const Expr& e) {
  if (e.op() == Op::add || e.op() == Op::subtract) {
    return print_expr(e.lhs()) + (e.op() == Op::add ? " + " : " - ") + print_term(e.rhs(), false);
  }
  return print_term(e, true);
}

}  // namespace

std::string to_string(const Expr& e) { return print_expr(e); }

// ---------------------------------------------------------------------------
// Differentiation

namespace {

class Differentiator {
 public:
  explicit Differentiator(const Symbol& s) : s_(s) {}

  Expr operator()(const Expr& e) {
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Expr d = rule(e);
    memo_.emplace(e.id(), d);
    return d;
  }

 private:
  Expr rule(const Expr& e) {
    switch (e.op()) {
      case Op::constant: return Expr();
      case Op::symbol: return e.symbol() == s_ ? Expr::constant(1.0) : Expr();
      case Op::negate: return -(*this)(e.operand());
      case Op::add: return (*this)(e.lhs()) + (*this)(e.rhs());
      case Op::subtract: return (*this)(e.lhs()) - (*this)(e.rhs());
      case Op::multiply: {
        const Expr a = e.lhs(), b = e.rhs();
        return (*this)(a) * b + a * (*this)(b);
      }
      case Op::divide: {
        const Expr a = e.lhs(), b = e.rhs();
        const Expr da = (*this)(a), db = (*this)(b);
        if (db.is_zero()) return da / b;
        return (da * b - a * db) / pow(b, Expr::constant(2.0));
      }
      case Op::power: {
        const Expr a = e.lhs(), b = e.rhs();
        const Expr da = (*this)(a), db = (*this)(b);
        if (db.is_zero()) {
          auto c = b.constant_value();
          const Expr lowered = c ? Expr::constant(*c - 1.0) : b - Expr::constant(1.0);
          return b * pow(a, lowered) * da;
        }
        if (da.is_zero()) return pow(a, b) * apply(Function::log, a) * db;
        return pow(a, b) * (db * apply(Function::log, a) + b * da / a);
      }
      case Op::function: {
        const Expr a = e.operand();
        const Expr da = (*this)(a);
        if (da.is_zero()) return Expr();
        switch (e.function()) {
          case Function::sin: return apply(Function::cos, a) * da;
          case Function::cos: return -(apply(Function::sin, a) * da);
          case Function::tan: return da / pow(apply(Function::cos, a), Expr::constant(2.0));
          case Function::exp: return e * da;
          case Function::log: return da / a;
          case Function::sqrt: return da / (Expr::constant(2.0) * e);
          case Function::sinh: return apply(Function::cosh, a) * da;
          case Function::cosh: return apply(Function::sinh, a) * da;
        }
      }
    }
    return Expr();
  }

  const Symbol& s_;
  std::unordered_map<const ExprNode*, Expr> memo_;
};

}  // namespace

Expr differentiate(const Expr& e, const Symbol& s) {
  if (s.kind != SymbolKind::coordinate) throw InputError("can only differentiate with respect to a coordinate");
  return Differentiator(s)(e);
}

Expr differentiate(const Expr& e, std::size_t coordinate_index) {
  // Symbols compare by name too, so look the coordinate up from the tree.
  std::optional<Symbol> target;
  std::function<void(const Expr&)> find = [&](const Expr& x) {
    if (target) return;
    switch (x.op()) {
      case Op::constant: return;
      case Op::symbol:
        if (x.symbol().kind == SymbolKind::coordinate && x.symbol().index == static_cast<int>(coordinate_index)) {
          target = x.symbol();
        }
        return;
      case Op::negate:
      case Op::function: find(x.operand()); return;
      default:
        find(x.lhs());
        find(x.rhs());
    }
  };
  find(e);
  if (!target) return Expr();
  return Differentiator(*target)(e);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

template <typename Lookup>
double eval(const ExprNode* n, const Lookup& lookup) {
  switch (n->op) {
    case Op::constant: return n->value;
    case Op::symbol: return lookup(n->symbol);
    case Op::negate: return -eval(n->lhs.get(), lookup);
    case Op::function: return apply_function(n->function, eval(n->lhs.get(), lookup));
    default: return apply_binary(n->op, eval(n->lhs.get(), lookup), eval(n->rhs.get(), lookup));
  }
}

}  // namespace

double evaluate(const Expr& e, const Valuation& at) {
  auto lookup = [&](const Symbol& s) -> double {
    const auto i = static_cast<std::size_t>(s.index);
    switch (s.kind) {
      case SymbolKind::coordinate:
        if (i < at.coordinates.size()) return at.coordinates[i];
        break;
      case SymbolKind::vector_component:
        if (i < at.components.size()) return at.components[i];
        break;
      case SymbolKind::frame_derivative: {
        const std::size_t n = at.components.size();
        const std::size_t k = i * n + static_cast<std::size_t>(s.second);
        if (n > 0 && k < at.frame_derivatives.size()) return at.frame_derivatives[k];
        break;
      }
    }
    throw InputError("no value for symbol '" + s.name + "'");
  };
  return eval(e.id(), lookup);
}

double evaluate(const Expr& e, std::span<const double> coordinates) {
  return evaluate(e, Valuation{coordinates, {}, {}});
}

double evaluate(const Expr& e, const std::map<std::string, double>& assignment) {
  auto lookup = [&](const Symbol& s) -> double {
    auto it = assignment.find(s.name);
    if (it == assignment.end()) throw InputError("no value for symbol '" + s.name + "'");
    return it->second;
  };
  return eval(e.id(), lookup);
}

// ---------------------------------------------------------------------------
// Simplification and substitution

namespace {

class Rebuilder {
 public:
  explicit Rebuilder(std::function<std::optional<Expr>(const Symbol&)> leaf) : leaf_(std::move(leaf)) {}

  Expr operator()(const Expr& e) {
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Expr r = rebuild(e);
    memo_.emplace(e.id(), r);
    return r;
  }

 private:
  Expr rebuild(const Expr& e) {
    switch (e.op()) {
      case Op::constant: return e;
      case Op::symbol: {
        if (leaf_) {
          if (auto r = leaf_(e.symbol())) return *r;
        }
        return e;
      }
      case Op::negate: return -(*this)(e.operand());
      case Op::function: return apply(e.function(), (*this)(e.operand()));
      case Op::add: return (*this)(e.lhs()) + (*this)(e.rhs());
      case Op::subtract: return (*this)(e.lhs()) - (*this)(e.rhs());
      case Op::multiply: return (*this)(e.lhs()) * (*this)(e.rhs());
      case Op::divide: return (*this)(e.lhs()) / (*this)(e.rhs());
      case Op::power: return pow((*this)(e.lhs()), (*this)(e.rhs()));
    }
    return e;
  }

  std::function<std::optional<Expr>(const Symbol&)> leaf_;
  std::unordered_map<const ExprNode*, Expr> memo_;
};

}  // namespace

Expr simplify(const Expr& e) {
  Expr current = e;
  for (int pass = 0; pass < 64; ++pass) {
    Expr next = Rebuilder(nullptr)(current);
    if (structurally_equal(next, current)) return next;
    current = std::move(next);
  }
  return current;
}

Expr substitute(const Expr& e, const std::function<std::optional<Expr>(const Symbol&)>& binding) {
  return Rebuilder(binding)(e);
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& bindings, const SymbolTable& symbols) {
  for (const auto& [name, replacement] : bindings) {
    for (const auto& used : symbol_names(replacement)) {
      auto sym = symbols.lookup(used);
      if (!sym || sym->kind != SymbolKind::coordinate) {
        throw InputError("binding for '" + name + "' references undeclared symbol '" + used + "'");
      }
    }
  }
  return substitute(e, [&](const Symbol& s) -> std::optional<Expr> {
    auto it = bindings.find(s.name);
    if (it == bindings.end()) return std::nullopt;
    return it->second;
  });
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.id() == b.id()) return true;
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::constant: return a.value() == b.value();
    case Op::symbol: return a.symbol() == b.symbol();
    case Op::negate: return structurally_equal(a.operand(), b.operand());
    case Op::function: return a.function() == b.function() && structurally_equal(a.operand(), b.operand());
    default: return structurally_equal(a.lhs(), b.lhs()) && structurally_equal(a.rhs(), b.rhs());
  }
}

namespace {

// Visits every distinct node once.
template <typename Visit>
void walk_unique(const Expr& e, std::unordered_map<const ExprNode*, bool>& seen, const Visit& visit) {
  if (!seen.emplace(e.id(), true).second) return;
  visit(e);
  switch (e.op()) {
    case Op::constant:
    case Op::symbol: return;
    case Op::negate:
    case Op::function: walk_unique(e.operand(), seen, visit); return;
    default:
      walk_unique(e.lhs(), seen, visit);
      walk_unique(e.rhs(), seen, visit);
  }
}

template <typename Visit>
void walk(const Expr& e, const Visit& visit) {
  std::unordered_map<const ExprNode*, bool> seen;
  walk_unique(e, seen, visit);
}

}  // namespace

std::set<std::string> symbol_names(const Expr& e) {
  std::set<std::string> names;
  walk(e, [&](const Expr& x) {
    if (x.op() == Op::symbol) names.insert(x.symbol().name);
  });
  return names;
}

std::vector<Symbol> symbols_of(const Expr& e) {
  std::vector<Symbol> out;
  walk(e, [&](const Expr& x) {
    if (x.op() != Op::symbol) return;
    for (const auto& s : out) {
      if (s == x.symbol()) return;
    }
    out.push_back(x.symbol());
  });
  return out;
}

bool references_vector_symbols(const Expr& e) {
  bool found = false;
  walk(e, [&](const Expr& x) {
    if (x.op() == Op::symbol && x.symbol().kind != SymbolKind::coordinate) found = true;
  });
  return found;
}

std::size_t node_count(const Expr& e) {
  std::size_t count = 0;
  walk(e, [&](const Expr&) { ++count; });
  return count;
}

}  // namespace derivkit
