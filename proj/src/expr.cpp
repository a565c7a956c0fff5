#include "nshift/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

namespace nshift::expr {

namespace {

struct FuncInfo {
  const char* name;
  Func func;
  int arity;
};

constexpr FuncInfo kFunctions[] = {
    {"exp", Func::Exp, 1},   {"log", Func::Log, 1},   {"sin", Func::Sin, 1},
    {"cos", Func::Cos, 1},   {"tan", Func::Tan, 1},   {"tanh", Func::Tanh, 1},
    {"sqrt", Func::Sqrt, 1}, {"abs", Func::Abs, 1},   {"pow", Func::Pow, 2},
};

const FuncInfo* find_function(std::string_view name) {
  for (const auto& f : kFunctions) {
    if (name == f.name) return &f;
  }
  return nullptr;
}

const char* function_name(Func f) {
  for (const auto& info : kFunctions) {
    if (info.func == f) return info.name;
  }
  return "?";
}

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lexer and recursive-descent parser.

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End, Invalid };

struct Token {
  Tok kind = Tok::End;
  std::size_t offset = 0;
  double number = 0.0;
  std::string text;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    Token t;
    t.offset = pos_;
    if (pos_ >= src_.size()) {
      t.kind = Tok::End;
      return t;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      return lex_number(t);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[end])) || src_[end] == '_')) {
        ++end;
      }
      t.kind = Tok::Ident;
      t.text = std::string(src_.substr(pos_, end - pos_));
      pos_ = end;
      return t;
    }
    ++pos_;
    t.text = std::string(1, c);
    switch (c) {
      case '+': t.kind = Tok::Plus; break;
      case '-': t.kind = Tok::Minus; break;
      case '*': t.kind = Tok::Star; break;
      case '/': t.kind = Tok::Slash; break;
      case '^': t.kind = Tok::Caret; break;
      case '(': t.kind = Tok::LParen; break;
      case ')': t.kind = Tok::RParen; break;
      case ',': t.kind = Tok::Comma; break;
      default: t.kind = Tok::Invalid; break;
    }
    return t;
  }

 private:
  Token lex_number(Token& t) {
    std::size_t end = pos_;
    auto digits = [&] {
      while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
    };
    digits();
    if (end < src_.size() && src_[end] == '.') {
      ++end;
      digits();
    }
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t exp = end + 1;
      if (exp < src_.size() && (src_[exp] == '+' || src_[exp] == '-')) ++exp;
      if (exp < src_.size() && std::isdigit(static_cast<unsigned char>(src_[exp]))) {
        end = exp;
        digits();
      }
    }
    t.kind = Tok::Number;
    t.text = std::string(src_.substr(pos_, end - pos_));
    t.number = std::strtod(t.text.c_str(), nullptr);
    pos_ = end;
    return t;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lexer_(src) { advance(); }

  NodePtr parse_all() {
    NodePtr root = parse_expr();
    if (tok_.kind != Tok::End) {
      fail({"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"});
    }
    return root;
  }

 private:
  void advance() { tok_ = lexer_.next(); }

  [[noreturn]] void fail(std::vector<std::string> expected) {
    std::ostringstream msg;
    msg << "syntax error at offset " << tok_.offset << ": found ";
    if (tok_.kind == Tok::End) {
      msg << "end of input";
    } else {
      msg << "'" << tok_.text << "'";
    }
    msg << ", expected one of {" << join(expected) << "}";
    throw ParseError(ParseError::Kind::Syntax, tok_.offset, std::move(expected), msg.str());
  }

  static NodePtr make_binary(Node::Kind kind, NodePtr lhs, NodePtr rhs, std::size_t offset) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->offset = offset;
    n->args = {std::move(lhs), std::move(rhs)};
    return n;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
      const auto kind = tok_.kind == Tok::Plus ? Node::Kind::Add : Node::Kind::Sub;
      const std::size_t at = tok_.offset;
      advance();
      lhs = make_binary(kind, lhs, parse_term(), at);
    }
    return lhs;
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_power();
    while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash) {
      const auto kind = tok_.kind == Tok::Star ? Node::Kind::Mul : Node::Kind::Div;
      const std::size_t at = tok_.offset;
      advance();
      lhs = make_binary(kind, lhs, parse_power(), at);
    }
    return lhs;
  }

  NodePtr parse_power() {
    NodePtr lhs = parse_unary();
    while (tok_.kind == Tok::Caret) {
      const std::size_t at = tok_.offset;
      advance();
      lhs = make_binary(Node::Kind::Pow, lhs, parse_unary(), at);
    }
    return lhs;
  }

  NodePtr parse_unary() {
    if (tok_.kind == Tok::Minus) {
      const std::size_t at = tok_.offset;
      advance();
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Negate;
      n->offset = at;
      n->args = {parse_unary()};
      return n;
    }
    return parse_primary();
  }

  NodePtr parse_primary() {
    const Token t = tok_;
    switch (t.kind) {
      case Tok::Number: {
        advance();
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Number;
        n->number = t.number;
        n->offset = t.offset;
        return n;
      }
      case Tok::LParen: {
        advance();
        NodePtr inner = parse_expr();
        if (tok_.kind != Tok::RParen) fail({"')'", "'+'", "'-'", "'*'", "'/'", "'^'"});
        advance();
        return inner;
      }
      case Tok::Ident: {
        advance();
        if (tok_.kind == Tok::LParen) return parse_call(t);
        auto n = std::make_shared<Node>();
        n->offset = t.offset;
        if (t.text == "pi") {
          n->kind = Node::Kind::Number;
          n->number = std::numbers::pi;
        } else {
          n->kind = Node::Kind::Variable;
          n->name = t.text;
        }
        return n;
      }
      default:
        fail({"number", "identifier", "'('", "'-'"});
    }
  }

  NodePtr parse_call(const Token& name) {
    const FuncInfo* info = find_function(name.text);
    if (!info) {
      std::vector<std::string> known;
      for (const auto& f : kFunctions) known.emplace_back(f.name);
      throw ParseError(ParseError::Kind::UnknownFunction, name.offset, known,
                       "unknown function '" + name.text + "' at offset " +
                           std::to_string(name.offset));
    }
    advance();  // '('
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Call;
    n->func = info->func;
    n->name = name.text;
    n->offset = name.offset;
    n->args.push_back(parse_expr());
    while (tok_.kind == Tok::Comma) {
      advance();
      n->args.push_back(parse_expr());
    }
    if (tok_.kind != Tok::RParen) fail({"')'", "','"});
    advance();
    if (static_cast<int>(n->args.size()) != info->arity) {
      throw ParseError(ParseError::Kind::Arity, name.offset, {},
                       "function '" + name.text + "' takes " + std::to_string(info->arity) +
                           " argument(s), got " + std::to_string(n->args.size()) +
                           " at offset " + std::to_string(name.offset));
    }
    return n;
  }

  Lexer lexer_;
  Token tok_;
};

void collect_vars(const Node& n, std::vector<std::string>& out) {
  if (n.kind == Node::Kind::Variable) {
    if (std::find(out.begin(), out.end(), n.name) == out.end()) out.push_back(n.name);
    return;
  }
  for (const auto& a : n.args) collect_vars(*a, out);
}

}  // namespace

// ---------------------------------------------------------------------------

ParseError::ParseError(Kind kind, std::size_t offset, std::vector<std::string> expected,
                       const std::string& message)
    : Error(message), kind_(kind), offset_(offset), expected_(std::move(expected)) {}

UnboundVariable::UnboundVariable(std::string name)
    : Error("unbound variable '" + name + "'"), name_(std::move(name)) {}

FieldExpr::FieldExpr() : FieldExpr(std::make_shared<Node>(), "0") {}

FieldExpr::FieldExpr(NodePtr root, std::string source)
    : root_(std::move(root)), source_(std::move(source)) {
  collect_vars(*root_, free_vars_);
}

FieldExpr FieldExpr::parse(std::string_view source) {
  Parser p(source);
  return FieldExpr(p.parse_all(), std::string(source));
}

FieldExpr FieldExpr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->number = value;
  return FieldExpr(n, format_number(value));
}

bool FieldExpr::depends_on(std::string_view name) const {
  return std::find(free_vars_.begin(), free_vars_.end(), name) != free_vars_.end();
}

std::string FieldExpr::unparse() const { return expr::unparse(*root_); }

FieldExpr parse(std::string_view source) { return FieldExpr::parse(source); }

std::string unparse(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Number: return format_number(n.number);
    case Node::Kind::Variable: return n.name;
    case Node::Kind::Negate: return "(-" + unparse(*n.args[0]) + ")";
    case Node::Kind::Add: return "(" + unparse(*n.args[0]) + "+" + unparse(*n.args[1]) + ")";
    case Node::Kind::Sub: return "(" + unparse(*n.args[0]) + "-" + unparse(*n.args[1]) + ")";
    case Node::Kind::Mul: return "(" + unparse(*n.args[0]) + "*" + unparse(*n.args[1]) + ")";
    case Node::Kind::Div: return "(" + unparse(*n.args[0]) + "/" + unparse(*n.args[1]) + ")";
    case Node::Kind::Pow: return "(" + unparse(*n.args[0]) + "^" + unparse(*n.args[1]) + ")";
    case Node::Kind::Call: {
      std::string s = std::string(function_name(n.func)) + "(";
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) s += ",";
        s += unparse(*n.args[i]);
      }
      return s + ")";
    }
  }
  return "?";
}

bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case Node::Kind::Number:
      if (a.number != b.number) return false;
      break;
    case Node::Kind::Variable:
      if (a.name != b.name) return false;
      break;
    case Node::Kind::Call:
      if (a.func != b.func) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!structurally_equal(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

bool is_integer_exponent(const Node& e, int* value) {
  const Node* n = &e;
  int sign = 1;
  if (n->kind == Node::Kind::Negate) {
    sign = -1;
    n = n->args[0].get();
  }
  if (n->kind != Node::Kind::Number) return false;
  const double x = n->number;
  if (x != std::floor(x) || std::abs(x) > 1e6) return false;
  if (value) *value = sign * static_cast<int>(x);
  return true;
}

// ---------------------------------------------------------------------------
// DenseJet arithmetic.

DenseJet DenseJet::constant(double value, int directions, int order) {
  if (directions < 0 || directions > kMaxDirections) {
    throw InvalidArgument("jet direction count " + std::to_string(directions) +
                          " exceeds the supported maximum " + std::to_string(kMaxDirections));
  }
  DenseJet j;
  j.value_ = value;
  j.dirs_ = directions;
  j.order_ = order;
  return j;
}

DenseJet DenseJet::variable(double value, int direction, int directions, int order) {
  DenseJet j = constant(value, directions, order);
  if (order >= 1 && direction >= 0 && direction < directions) j.grad_[direction] = 1.0;
  return j;
}

DenseJet DenseJet::compose(double g0, double g1, double g2) const {
  DenseJet r;
  r.dirs_ = dirs_;
  r.order_ = order_;
  r.value_ = g0;
  if (order_ >= 1) {
    for (int i = 0; i < dirs_; ++i) r.grad_[i] = g1 * grad_[i];
  }
  if (order_ >= 2) {
    for (int j = 0; j < dirs_; ++j) {
      for (int i = 0; i <= j; ++i) {
        const int k = packed(i, j);
        r.hess_[k] = g1 * hess_[k] + g2 * grad_[i] * grad_[j];
      }
    }
  }
  return r;
}

DenseJet operator+(const DenseJet& a, const DenseJet& b) {
  DenseJet r = a;
  r.value_ += b.value_;
  if (r.order_ >= 1) {
    for (int i = 0; i < r.dirs_; ++i) r.grad_[i] += b.grad_[i];
  }
  if (r.order_ >= 2) {
    const int m = r.dirs_ * (r.dirs_ + 1) / 2;
    for (int k = 0; k < m; ++k) r.hess_[k] += b.hess_[k];
  }
  return r;
}

DenseJet operator-(const DenseJet& a) {
  DenseJet r = a;
  r.value_ = -r.value_;
  for (int i = 0; i < r.dirs_; ++i) r.grad_[i] = -r.grad_[i];
  const int m = r.dirs_ * (r.dirs_ + 1) / 2;
  for (int k = 0; k < m; ++k) r.hess_[k] = -r.hess_[k];
  return r;
}

DenseJet operator-(const DenseJet& a, const DenseJet& b) {
  DenseJet r = a;
  r.value_ -= b.value_;
  if (r.order_ >= 1) {
    for (int i = 0; i < r.dirs_; ++i) r.grad_[i] -= b.grad_[i];
  }
  if (r.order_ >= 2) {
    const int m = r.dirs_ * (r.dirs_ + 1) / 2;
    for (int k = 0; k < m; ++k) r.hess_[k] -= b.hess_[k];
  }
  return r;
}

DenseJet operator*(double s, const DenseJet& a) {
  DenseJet r = a;
  r.value_ *= s;
  for (int i = 0; i < r.dirs_; ++i) r.grad_[i] *= s;
  const int m = r.dirs_ * (r.dirs_ + 1) / 2;
  for (int k = 0; k < m; ++k) r.hess_[k] *= s;
  return r;
}

DenseJet operator*(const DenseJet& a, const DenseJet& b) {
  DenseJet r;
  r.dirs_ = a.dirs_;
  r.order_ = a.order_;
  r.value_ = a.value_ * b.value_;
  if (r.order_ >= 1) {
    for (int i = 0; i < r.dirs_; ++i) r.grad_[i] = a.grad_[i] * b.value_ + a.value_ * b.grad_[i];
  }
  if (r.order_ >= 2) {
    for (int j = 0; j < r.dirs_; ++j) {
      for (int i = 0; i <= j; ++i) {
        const int k = DenseJet::packed(i, j);
        r.hess_[k] = a.hess_[k] * b.value_ + a.grad_[i] * b.grad_[j] +
                     a.grad_[j] * b.grad_[i] + a.value_ * b.hess_[k];
      }
    }
  }
  return r;
}

DenseJet operator/(const DenseJet& a, const DenseJet& b) {
  const double u = b.value_;
  return a * b.compose(1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u));
}

// ---------------------------------------------------------------------------
// Program.

Program::Program(const FieldExpr& e, std::span<const std::string> layout) : expr_(e) {
  compile(e.root(), layout);
  constant_ = e.free_vars().empty();
}

void Program::compile(const Node& n, std::span<const std::string> layout) {
  Instr ins{};
  ins.text = static_cast<int>(texts_.size());
  texts_.push_back(unparse(n));
  switch (n.kind) {
    case Node::Kind::Number:
      ins.op = Op::Const;
      ins.constant = n.number;
      break;
    case Node::Kind::Variable: {
      auto it = std::find(layout.begin(), layout.end(), n.name);
      if (it == layout.end()) throw UnboundVariable(n.name);
      ins.op = Op::Var;
      ins.slot = static_cast<int>(it - layout.begin());
      break;
    }
    case Node::Kind::Negate:
      compile(*n.args[0], layout);
      ins.op = Op::Neg;
      break;
    case Node::Kind::Add:
    case Node::Kind::Sub:
    case Node::Kind::Mul:
    case Node::Kind::Div:
      compile(*n.args[0], layout);
      compile(*n.args[1], layout);
      ins.op = n.kind == Node::Kind::Add   ? Op::Add
               : n.kind == Node::Kind::Sub ? Op::Sub
               : n.kind == Node::Kind::Mul ? Op::Mul
                                           : Op::Div;
      break;
    case Node::Kind::Pow:
    case Node::Kind::Call:
      if (n.kind == Node::Kind::Pow || n.func == Func::Pow) {
        compile(*n.args[0], layout);
        int k = 0;
        if (is_integer_exponent(*n.args[1], &k)) {
          ins.op = Op::PowInt;
          ins.exponent = k;
        } else {
          compile(*n.args[1], layout);
          ins.op = Op::PowReal;
        }
        break;
      }
      compile(*n.args[0], layout);
      switch (n.func) {
        case Func::Exp: ins.op = Op::Exp; break;
        case Func::Log: ins.op = Op::Log; break;
        case Func::Sin: ins.op = Op::Sin; break;
        case Func::Cos: ins.op = Op::Cos; break;
        case Func::Tan: ins.op = Op::Tan; break;
        case Func::Tanh: ins.op = Op::Tanh; break;
        case Func::Sqrt: ins.op = Op::Sqrt; break;
        case Func::Abs: ins.op = Op::Abs; break;
        case Func::Pow: break;
      }
      break;
  }
  code_.push_back(ins);
}

namespace {

[[noreturn]] void domain_fail(const std::string& what, double arg, const std::string& text) {
  throw DomainError(what + " (argument " + format_number(arg) + ") in subexpression '" +
                    text + "'");
}

// Value and first two derivatives of the unary elementary functions.
struct Deriv3 {
  double g0, g1, g2;
};

}  // namespace

double Program::value(std::span<const double> slots) const {
  thread_local std::vector<double> stack;
  const std::size_t base = stack.size();
  for (const Instr& ins : code_) {
    const std::string& text = texts_[ins.text];
    switch (ins.op) {
      case Op::Const: stack.push_back(ins.constant); continue;
      case Op::Var: stack.push_back(slots[ins.slot]); continue;
      default: break;
    }
    double& top = stack.back();
    double r = 0.0;
    switch (ins.op) {
      case Op::Neg: r = -top; break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::PowReal: {
        const double b = stack.back();
        stack.pop_back();
        const double a = stack.back();
        if (ins.op == Op::Add) r = a + b;
        else if (ins.op == Op::Sub) r = a - b;
        else if (ins.op == Op::Mul) r = a * b;
        else if (ins.op == Op::Div) {
          if (b == 0.0) domain_fail("division by zero", b, text);
          r = a / b;
        } else {
          if (!(a > 0.0)) domain_fail("non-integer power of non-positive base", a, text);
          r = std::pow(a, b);
        }
        break;
      }
      case Op::PowInt:
        if (top == 0.0 && ins.exponent < 0) domain_fail("negative power of zero", top, text);
        r = std::pow(top, ins.exponent);
        break;
      case Op::Exp: r = std::exp(top); break;
      case Op::Log:
        if (!(top > 0.0)) domain_fail("log of non-positive value", top, text);
        r = std::log(top);
        break;
      case Op::Sin: r = std::sin(top); break;
      case Op::Cos: r = std::cos(top); break;
      case Op::Tan: r = std::tan(top); break;
      case Op::Tanh: r = std::tanh(top); break;
      case Op::Sqrt:
        if (top < 0.0) domain_fail("sqrt of negative value", top, text);
        r = std::sqrt(top);
        break;
      case Op::Abs: r = std::abs(top); break;
      default: break;
    }
    if (!std::isfinite(r)) domain_fail("non-finite result", r, text);
    stack.back() = r;
  }
  const double out = stack.back();
  stack.resize(base);
  return out;
}

DenseJet Program::jet(std::span<const double> slots, int directions, int order) const {
  DenseJet out;
  jet(slots, directions, order, out);
  return out;
}

void Program::jet(std::span<const double> slots, int directions, int order,
                  DenseJet& out) const {
  if (directions > static_cast<int>(slots.size())) {
    throw InvalidArgument("more derivative directions than bound slots");
  }
  thread_local std::vector<DenseJet> stack;
  const std::size_t base = stack.size();
  for (const Instr& ins : code_) {
    const std::string& text = texts_[ins.text];
    if (ins.op == Op::Const) {
      stack.push_back(DenseJet::constant(ins.constant, directions, order));
      continue;
    }
    if (ins.op == Op::Var) {
      stack.push_back(DenseJet::variable(slots[ins.slot], ins.slot, directions, order));
      continue;
    }
    if (ins.op == Op::Add || ins.op == Op::Sub || ins.op == Op::Mul || ins.op == Op::Div ||
        ins.op == Op::PowReal) {
      const std::size_t top = stack.size() - 1;
      const DenseJet& b = stack[top];
      DenseJet& a = stack[top - 1];
      switch (ins.op) {
        case Op::Add: a = a + b; break;
        case Op::Sub: a = a - b; break;
        case Op::Mul: a = a * b; break;
        case Op::Div:
          if (b.value() == 0.0) domain_fail("division by zero", b.value(), text);
          a = a / b;
          break;
        default: {
          const double base_value = a.value();
          if (!(base_value > 0.0)) {
            domain_fail("non-integer power of non-positive base", base_value, text);
          }
          const double l = std::log(base_value);
          DenseJet lg = a.compose(l, 1.0 / base_value, -1.0 / (base_value * base_value));
          DenseJet m = b * lg;
          const double e = std::exp(m.value());
          a = m.compose(e, e, e);
          a.value_ref() = std::pow(base_value, b.value());
          break;
        }
      }
      stack.pop_back();
      if (!std::isfinite(stack.back().value())) {
        domain_fail("non-finite result", stack.back().value(), text);
      }
      continue;
    }
    DenseJet& u = stack.back();
    const double x = u.value();
    Deriv3 g{};
    switch (ins.op) {
      case Op::Neg:
        u = -u;
        continue;
      case Op::PowInt: {
        const int k = ins.exponent;
        if (x == 0.0 && k < 0) domain_fail("negative power of zero", x, text);
        g.g0 = std::pow(x, k);
        g.g1 = k == 0 ? 0.0 : k * std::pow(x, k - 1);
        g.g2 = (k == 0 || k == 1) ? 0.0 : static_cast<double>(k) * (k - 1) * std::pow(x, k - 2);
        break;
      }
      case Op::Exp: {
        const double e = std::exp(x);
        g = {e, e, e};
        break;
      }
      case Op::Log:
        if (!(x > 0.0)) domain_fail("log of non-positive value", x, text);
        g = {std::log(x), 1.0 / x, -1.0 / (x * x)};
        break;
      case Op::Sin: g = {std::sin(x), std::cos(x), -std::sin(x)}; break;
      case Op::Cos: g = {std::cos(x), -std::sin(x), -std::cos(x)}; break;
      case Op::Tan: {
        const double t = std::tan(x);
        const double s = 1.0 + t * t;
        g = {t, s, 2.0 * t * s};
        break;
      }
      case Op::Tanh: {
        const double t = std::tanh(x);
        const double s = 1.0 - t * t;
        g = {t, s, -2.0 * t * s};
        break;
      }
      case Op::Sqrt: {
        if (x < 0.0 || (x == 0.0 && order >= 1)) domain_fail("sqrt of non-positive value", x, text);
        const double r = std::sqrt(x);
        g = {r, order >= 1 ? 0.5 / r : 0.0, order >= 2 ? -0.25 / (r * x) : 0.0};
        break;
      }
      case Op::Abs: g = {std::abs(x), std::copysign(1.0, x), 0.0}; break;
      default: break;
    }
    u = u.compose(g.g0, g.g1, g.g2);
    if (!std::isfinite(u.value())) domain_fail("non-finite result", u.value(), text);
  }
  out = stack.back();
  stack.resize(base);
}

// ---------------------------------------------------------------------------

double Jet::d(const std::string& var) const {
  auto it = grad.find(var);
  return it == grad.end() ? 0.0 : it->second;
}

double Jet::d2(const std::string& a, const std::string& b) const {
  auto it = hess.find({a, b});
  return it == hess.end() ? 0.0 : it->second;
}

Jet eval_jet(const FieldExpr& e, const Env& env, const std::vector<std::string>& wrt) {
  if (static_cast<int>(wrt.size()) > kMaxDirections) {
    throw InvalidArgument("at most " + std::to_string(kMaxDirections) +
                          " differentiation variables are supported");
  }
  std::vector<std::string> layout = wrt;
  for (const auto& v : e.free_vars()) {
    if (std::find(layout.begin(), layout.end(), v) == layout.end()) layout.push_back(v);
  }
  std::vector<double> slots(layout.size(), 0.0);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    auto it = env.find(layout[i]);
    if (it != env.end()) {
      slots[i] = it->second;
    } else if (e.depends_on(layout[i])) {
      throw UnboundVariable(layout[i]);
    }
  }
  const Program prog(e, layout);
  const int dirs = static_cast<int>(wrt.size());
  const DenseJet j = prog.jet(slots, dirs, 2);
  Jet out;
  out.value = j.value();
  for (int p = 0; p < dirs; ++p) {
    out.grad[wrt[p]] = j.d(p);
    for (int q = 0; q < dirs; ++q) out.hess[{wrt[p], wrt[q]}] = j.d2(p, q);
  }
  return out;
}

double eval(const FieldExpr& e, const Env& env) {
  std::vector<std::string> layout = e.free_vars();
  std::vector<double> slots;
  for (const auto& v : layout) {
    auto it = env.find(v);
    if (it == env.end()) throw UnboundVariable(v);
    slots.push_back(it->second);
  }
  return Program(e, layout).value(slots);
}

}  // namespace nshift::expr
