#pragma once

// Scalar field expressions: a small closed DSL for user-supplied functions
// (W, h, a, b_i, f, conformal factors, surface embeddings) with exact first and
// second derivatives by truncated Taylor arithmetic.
//
// Grammar (see docs/expression-grammar.md):
//
//   expr    := term (('+' | '-') term)*
//   term    := power (('*' | '/') power)*
//   power   := unary ('^' unary)*             left-associative
//   unary   := '-' unary | primary
//   primary := number | 'pi' | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nshift/error.hpp"

namespace nshift::expr {

enum class Func { Exp, Log, Sin, Cos, Tan, Tanh, Sqrt, Abs, Pow };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Kind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };

  Kind kind = Kind::Number;
  double number = 0.0;
  std::string name;
  Func func = Func::Exp;
  std::vector<NodePtr> args;
  std::size_t offset = 0;  // byte offset of the node in the source text
};

class ParseError : public Error {
 public:
  enum class Kind { Syntax, UnknownFunction, Arity };

  ParseError(Kind kind, std::size_t offset, std::vector<std::string> expected,
             const std::string& message);

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  Kind kind_;
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class UnboundVariable : public Error {
 public:
  explicit UnboundVariable(std::string name);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// Immutable parsed expression. Copies share the tree.
class FieldExpr {
 public:
  FieldExpr();  // the constant 0

  static FieldExpr parse(std::string_view source);
  static FieldExpr constant(double value);

  const Node& root() const { return *root_; }
  const NodePtr& root_ptr() const { return root_; }
  // Variables in order of first appearance, left to right.
  const std::vector<std::string>& free_vars() const { return free_vars_; }
  bool depends_on(std::string_view name) const;
  const std::string& source() const { return source_; }

  // Fully parenthesized text that reparses to a structurally identical tree.
  std::string unparse() const;

 private:
  FieldExpr(NodePtr root, std::string source);

  NodePtr root_;
  std::vector<std::string> free_vars_;
  std::string source_;
};

FieldExpr parse(std::string_view source);
std::string unparse(const Node& node);
bool structurally_equal(const Node& a, const Node& b);
inline bool structurally_equal(const FieldExpr& a, const FieldExpr& b) {
  return structurally_equal(a.root(), b.root());
}

// ---------------------------------------------------------------------------
// Dense second-order jets.

inline constexpr int kMaxDirections = 8;

// Value, gradient and packed upper-triangular Hessian with respect to up to
// kMaxDirections independent directions. Only the first `directions()`
// entries are meaningful; `order()` is 0, 1 or 2.
class DenseJet {
 public:
  static constexpr int kPacked = kMaxDirections * (kMaxDirections + 1) / 2;

  DenseJet() = default;
  static DenseJet constant(double value, int directions, int order);
  static DenseJet variable(double value, int direction, int directions, int order);

  double value() const { return value_; }
  double d(int i) const { return grad_[i]; }
  double d2(int i, int j) const { return hess_[packed(i, j)]; }
  int directions() const { return dirs_; }
  int order() const { return order_; }

  double& value_ref() { return value_; }
  double& d_ref(int i) { return grad_[i]; }
  double& d2_ref(int i, int j) { return hess_[packed(i, j)]; }

  static int packed(int i, int j) {
    return i <= j ? j * (j + 1) / 2 + i : i * (i + 1) / 2 + j;
  }

  // Composition with a scalar function g at u = value(): given g(u), g'(u),
  // g''(u), returns the jet of g(*this).
  DenseJet compose(double g0, double g1, double g2) const;

  friend DenseJet operator+(const DenseJet& a, const DenseJet& b);
  friend DenseJet operator-(const DenseJet& a, const DenseJet& b);
  friend DenseJet operator*(const DenseJet& a, const DenseJet& b);
  friend DenseJet operator/(const DenseJet& a, const DenseJet& b);
  friend DenseJet operator-(const DenseJet& a);
  friend DenseJet operator*(double s, const DenseJet& a);

 private:
  double value_ = 0.0;
  std::array<double, kMaxDirections> grad_{};
  std::array<double, kPacked> hess_{};
  int dirs_ = 0;
  int order_ = 0;
};

// An expression bound to a variable layout. Variable nodes are resolved to
// slot indices once; evaluation takes a span of slot values. Derivative
// directions are the first `directions` slots of the layout.
class Program {
 public:
  Program() = default;
  // Throws UnboundVariable if a free variable of `e` is missing from `layout`.
  Program(const FieldExpr& e, std::span<const std::string> layout);

  double value(std::span<const double> slots) const;
  DenseJet jet(std::span<const double> slots, int directions, int order) const;
  // Evaluates into `out` (avoids returning the jet by value in hot loops).
  void jet(std::span<const double> slots, int directions, int order,
           DenseJet& out) const;

  const FieldExpr& expression() const { return expr_; }
  bool is_constant() const { return constant_; }

 private:
  enum class Op {
    Const, Var, Neg, Add, Sub, Mul, Div, PowInt, PowReal,
    Exp, Log, Sin, Cos, Tan, Tanh, Sqrt, Abs
  };
  struct Instr {
    Op op;
    double constant = 0.0;
    int slot = 0;
    int exponent = 0;
    int text = 0;  // index into texts_ for diagnostics
  };

  void compile(const Node& node, std::span<const std::string> layout);

  FieldExpr expr_;
  std::vector<Instr> code_;
  std::vector<std::string> texts_;
  bool constant_ = false;
};

// Map-keyed jet returned by the convenience entry point.
struct Jet {
  double value = 0.0;
  std::map<std::string, double> grad;
  std::map<std::pair<std::string, std::string>, double> hess;

  double d(const std::string& var) const;
  double d2(const std::string& a, const std::string& b) const;
};

using Env = std::map<std::string, double>;

Jet eval_jet(const FieldExpr& e, const Env& env, const std::vector<std::string>& wrt);
double eval(const FieldExpr& e, const Env& env);

// True when the exponent subtree is an integer literal, optionally negated.
bool is_integer_exponent(const Node& exponent, int* value = nullptr);

}  // namespace nshift::expr
