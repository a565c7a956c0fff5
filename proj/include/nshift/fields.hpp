#pragma once

// Force data of a Newtonian system admitting the normal shift, in its two
// presentations:
//
//   (h, W):  F_k = h(W) N_k / W_v - v sum_i (d_i W / W_v) (2 N^i N_k - delta^i_k)
//   (a, b):  F_k = a N_k + v sum_i b_i (2 N^i N_k - delta^i_k)
//
// with N the unit vector along the velocity and v = |velocity|_g. The two are
// related by a = h(W) / W_v and b_i = -d_i W / W_v. Since W is a scalar, the
// covariant derivative d_i W is the plain partial derivative.
//
// Every jet in this module is taken with respect to (x1, ..., xn, v) in that
// order, so slot n is the speed.

#include <memory>
#include <span>
#include <vector>

#include "nshift/expr.hpp"
#include "nshift/geometry.hpp"
#include "nshift/linalg.hpp"

namespace nshift::fields {

inline constexpr double kMinWv = 1e-10;
inline constexpr double kMinSpeed = 1e-12;

// Variables x1..xn, v.
std::vector<std::string> state_names(int n);

class HWModel {
 public:
  virtual ~HWModel() = default;
  virtual int dimension() const = 0;
  // W and its derivatives with respect to x1..xn, v up to `order` (<= 2).
  virtual void W(std::span<const double> x, double v, int order, expr::DenseJet& out) const = 0;
  // h and its derivatives up to `order` (<= 2), single direction.
  virtual void h(double w, int order, expr::DenseJet& out) const = 0;
};

class HWPair final : public HWModel {
 public:
  // W is an expression of x1..xn, v; h an expression of w.
  HWPair(int n, const expr::FieldExpr& W, const expr::FieldExpr& h);

  int dimension() const override { return n_; }
  void W(std::span<const double> x, double v, int order, expr::DenseJet& out) const override;
  void h(double w, int order, expr::DenseJet& out) const override;

  const expr::FieldExpr& W_expr() const { return W_.expression(); }
  const expr::FieldExpr& h_expr() const { return h_.expression(); }

 private:
  int n_;
  expr::Program W_;
  expr::Program h_;
};

struct ABJet {
  expr::DenseJet a;
  std::vector<expr::DenseJet> b;
};

class ABModel {
 public:
  virtual ~ABModel() = default;
  virtual int dimension() const = 0;
  // a and b_i at (x, v); order 1 adds derivatives with respect to x1..xn, v.
  virtual void eval(std::span<const double> x, double v, int order, ABJet& out) const = 0;
};

// (a, b) given directly as expressions of x1..xn, v.
class ABFields final : public ABModel {
 public:
  ABFields(int n, const expr::FieldExpr& a, const std::vector<expr::FieldExpr>& b);

  int dimension() const override { return n_; }
  void eval(std::span<const double> x, double v, int order, ABJet& out) const override;

  const expr::FieldExpr& a_expr() const { return a_.expression(); }

 private:
  int n_;
  expr::Program a_;
  std::vector<expr::Program> b_;
};

// (a, b) induced by an (h, W) model: a = h(W) / W_v, b_i = -d_i W / W_v.
class DerivedAB final : public ABModel {
 public:
  explicit DerivedAB(std::shared_ptr<const HWModel> hw);

  int dimension() const override { return hw_->dimension(); }
  void eval(std::span<const double> x, double v, int order, ABJet& out) const override;

 private:
  std::shared_ptr<const HWModel> hw_;
};

// Pointwise conversions. Both throw DomainError when |W_v| <= kMinWv.
Vec b_from_W(const HWModel& hw, std::span<const double> x, double v);
double a_from_hW(const HWModel& hw, std::span<const double> x, double v);

// Covariant force components from either presentation, raised with g^{-1}.
Vec force_hw(const HWModel& hw, const geometry::MetricSpec& m, std::span<const double> x,
             std::span<const double> velocity);
Vec force_ab(const ABModel& ab, const geometry::MetricSpec& m, std::span<const double> x,
             std::span<const double> velocity);
// Force of a global closed 1-form omega = (omega_1..omega_n, omega_{n+1}) with
// h == 1: F_k = N_k / omega_{n+1} - v sum_i (omega_i / omega_{n+1})(2 N^i N_k - delta^i_k).
Vec force_closed_form(std::span<const double> omega, const geometry::MetricSpec& m,
                      std::span<const double> x, std::span<const double> velocity);

// R_ij = (d_j + b_j d_v) b_i - (d_i + b_i d_v) b_j; antisymmetric.
Matrix closedness_residual(const ABModel& ab, std::span<const double> x, double v);
// r_i = (d_i + b_i d_v) a - (d_v b_i) a.
Vec normalizing_residual(const ABModel& ab, std::span<const double> x, double v);
// With W~ = a W_v: |component of dW~ orthogonal to dW| / |dW~| in the
// coordinate gradient sense on (x1..xn, v). Zero when dW~ vanishes.
double collinearity_defect(const ABModel& ab, const expr::FieldExpr& W,
                           std::span<const double> x, double v);

class ForceField {
 public:
  enum class Source { HW, AB, Custom };

  ForceField() = default;
  static ForceField from_hw(std::shared_ptr<const HWModel> hw, geometry::MetricSpec m);
  static ForceField from_ab(std::shared_ptr<const ABModel> ab, geometry::MetricSpec m);
  // Contravariant components F^k as expressions of x1..xn, v, xdot1..xdotn.
  static ForceField custom(const std::vector<expr::FieldExpr>& components, geometry::MetricSpec m);

  Source source() const { return source_; }
  const geometry::MetricSpec& metric() const { return metric_; }
  int dimension() const { return metric_.dimension(); }

  Vec operator()(std::span<const double> x, std::span<const double> velocity) const;
  // Same, reusing a metric already evaluated at x.
  Vec evaluate(std::span<const double> x, std::span<const double> velocity,
               const geometry::LocalGeometry& geo) const;

 private:
  Source source_ = Source::Custom;
  geometry::MetricSpec metric_;
  std::shared_ptr<const HWModel> hw_;
  std::shared_ptr<const ABModel> ab_;
  std::vector<expr::Program> custom_;
};

}  // namespace nshift::fields
