#pragma once

// Global integration of the force data: continuation of the Pfaff system
//
//   dV/dx^i = b_i(x, V),   V(p0) = w
//
// along chart paths, the derivative V_w of the continuation with respect to its
// initial value, reconstruction of W by inverting V, f-norm estimates,
// monodromy maps of deck transformations, gauge transformations of (h, W) and
// recovery of h from (a, b).

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nshift/expr.hpp"
#include "nshift/fields.hpp"
#include "nshift/geometry.hpp"
#include "nshift/linalg.hpp"

namespace nshift::pfaff {

// ---------------------------------------------------------------------------
// Paths.

// A chart path made of smooth pieces. A polyline has one piece per segment,
// each parametrized by s in [0, 1]; a parametric path is a single piece over
// [t0, t1]. The global parameter of a polyline is segment index + s.
class PathSpec {
 public:
  PathSpec() = default;
  static PathSpec polyline(std::vector<Vec> points);
  static PathSpec segment(const Vec& from, const Vec& to) { return polyline({from, to}); }
  // Components are expressions of t; `samples` points are checked for a finite,
  // bounded tangent.
  static PathSpec parametric(std::vector<expr::FieldExpr> components, double t0, double t1,
                             int samples = 64);
  // The curve t -> S(u_start + t e_axis), t in [0, length], on a hypersurface.
  static PathSpec on_surface(std::shared_ptr<const geometry::Hypersurface> surface, int axis,
                             Vec u_start, double length);

  int dimension() const { return n_; }
  int piece_count() const;
  // Parameter interval of a piece, in the global parameter.
  double piece_start(int piece) const;
  double piece_end(int piece) const;
  // Position and velocity d x / d t at global parameter t inside `piece`.
  void eval(int piece, double t, Vec& x, Vec& xdot) const;

  Vec start() const;
  Vec end() const;
  bool is_polyline() const { return !points_.empty(); }
  const std::vector<Vec>& points() const { return points_; }
  // The same polyline traversed backwards (polylines only).
  PathSpec reversed() const;

 private:
  int n_ = 0;
  std::vector<Vec> points_;
  std::vector<expr::Program> components_;
  std::shared_ptr<const geometry::Hypersurface> surface_;
  int axis_ = 0;
  Vec u_start_;
  double t0_ = 0.0;
  double t1_ = 1.0;
};

// Points are distinct when they differ by more than 1e-14 in some coordinate.
bool same_point(std::span<const double> a, std::span<const double> b, double tol = 1e-12);

// ---------------------------------------------------------------------------
// Continuation.

struct ContinuationSample {
  double t = 0.0;
  Vec x;
  double V = 0.0;
  double Vw = 1.0;
};

struct Continuation {
  std::vector<ContinuationSample> samples;
  double end_value() const { return samples.back().V; }
  double end_Vw() const { return samples.back().Vw; }
};

// RK4 on dV/dt = sum_i b_i(x(t), V) xdot^i jointly with
// d(log V_w)/dt = sum_i (d b_i / d v)(x(t), V) xdot^i, from V = w0, V_w = 1.
// Each piece takes ceil(length / dt) equal steps. Throws NumericalFailure when V
// leaves (0, inf) or b cannot be evaluated (with t and state).
Continuation continue_V(const fields::ABModel& ab, const PathSpec& path, double w0, double dt);

// The V_w samples of the same continuation.
std::vector<double> Vw_along_path(const fields::ABModel& ab, const PathSpec& path, double w0,
                                  double dt);

// |V_1(end) - V_2(end)| for two paths with common endpoints.
double path_independence_defect(const fields::ABModel& ab, const PathSpec& path1,
                                const PathSpec& path2, double w0, double dt);

// Canonical path from the base point to x.
using PathFactory = std::function<PathSpec(const Vec& base, const Vec& x)>;
PathSpec straight_path(const Vec& base, const Vec& x);

struct InverseOptions {
  double dt = 1e-3;
  double w_lo = 1e-8;
  double w_hi = 1e8;
  int max_iterations = 80;
};

struct Inversion {
  double w = 0.0;
  double Vw = 1.0;  // d V / d w at the solution
  int iterations = 0;
};

// The value w with V(x, w) = v for the continuation from base along the
// canonical path, i.e. W(x, v) under the normalization W(base, v) = v. Throws
// NumericalFailure when no w in [w_lo, w_hi] reaches v. The root is
// bracketed by geometric expansion from w = v and refined by Newton steps
// (using V_w) that fall back to bisection whenever they leave the bracket.
Inversion invert_V(const fields::ABModel& ab, const Vec& base, const Vec& x, double v,
                   const InverseOptions& opt = {}, const PathFactory& paths = straight_path);

// Columns t, x1..xn, V, V_w.
void write_trace_csv(std::ostream& out, const Continuation& c, int n);

// ---------------------------------------------------------------------------
// f-norm.

class AdmissibleF {
 public:
  // f is an expression of v. The flags record the user's assertion that
  // the integral of dv / f diverges at 0 and at infinity; they are carried
  // along, not verified. Throws DomainError when f <= 0 somewhere on the log
  // grid 1e-6..1e6.
  AdmissibleF(const expr::FieldExpr& f, bool diverges_at_zero = true,
              bool diverges_at_infinity = true);

  double operator()(double v) const;
  const expr::FieldExpr& expression() const { return f_.expression(); }
  bool diverges_at_zero() const { return at_zero_; }
  bool diverges_at_infinity() const { return at_infinity_; }

 private:
  expr::Program f_;
  bool at_zero_;
  bool at_infinity_;
};

struct FNormEstimate {
  double value = 0.0;  // a lower bound of the supremum
  Vec x;               // argmax point
  double v = 0.0;      // argmax speed
  std::size_t v_index = 0;
  // The largest ratio sits on the first or last speed of the grid and strictly
  // exceeds every interior speed: the supremum may be infinite.
  bool divergence_suspected = false;
  std::vector<double> per_v;  // max ratio over the points, per grid speed
};

FNormEstimate f_norm_estimate(const fields::ABModel& ab, const AdmissibleF& f,
                              const geometry::MetricSpec& m, const std::vector<Vec>& x_grid,
                              const std::vector<double>& v_grid);

// ---------------------------------------------------------------------------
// Monotone maps of (0, inf).

class MonotoneMap {
 public:
  virtual ~MonotoneMap() = default;
  virtual double operator()(double w) const = 0;
  virtual double derivative(double w) const = 0;
  virtual double second_derivative(double w) const = 0;
  virtual double inverse(double y) const = 0;
  virtual double domain_lo() const = 0;
  virtual double domain_hi() const = 0;
};

// rho given as an expression of w on [lo, hi]; derivatives are exact.
class ClosedFormMap final : public MonotoneMap {
 public:
  ClosedFormMap(const expr::FieldExpr& rho, double lo, double hi);
  static std::shared_ptr<ClosedFormMap> identity();

  double operator()(double w) const override;
  double derivative(double w) const override;
  double second_derivative(double w) const override;
  double inverse(double y) const override;
  double domain_lo() const override { return lo_; }
  double domain_hi() const override { return hi_; }

 private:
  expr::DenseJet jet(double w) const;
  expr::Program rho_;
  double lo_;
  double hi_;
};

// rho sampled at increasing w. Interpolation is monotone cubic Hermite of
// log rho against log w; node slopes come from five-point differences on the
// nodes (exact for power laws) and are limited to keep the interpolant
// monotone. Throws DomainError outside [w_front, w_back].
class TableMap final : public MonotoneMap {
 public:
  TableMap(std::vector<double> w, std::vector<double> rho);

  double operator()(double w) const override;
  double derivative(double w) const override;
  double second_derivative(double w) const override;
  double inverse(double y) const override;
  double domain_lo() const override { return w_.front(); }
  double domain_hi() const override { return w_.back(); }

  const std::vector<double>& w() const { return w_; }
  const std::vector<double>& rho() const { return rho_; }

 private:
  // log rho and its first two derivatives in log w at s = log w.
  void eval_log(double s, double& y, double& dy, double& d2y) const;
  std::size_t interval(double s) const;

  std::vector<double> w_, rho_;
  std::vector<double> s_, y_, m_;
};

// ---------------------------------------------------------------------------
// Monodromy.

struct MonodromyOptions {
  InverseOptions inverse;
  // Deck invariance of b is spot-checked at these speeds along the cover path.
  std::vector<double> check_speeds = {0.5, 1.0, 2.0};
  double invariance_tol = 1e-12;
};

struct MonodromyMap {
  geometry::GeneratorWord word;
  std::shared_ptr<TableMap> table;
  // max |rho(w) - V(g^-1 p0, w)| / rho(w): the inversion route against direct
  // continuation to the inverse translate.
  double cross_check_defect = 0.0;

  double operator()(double w) const { return (*table)(w); }
  bool is_identity(double tol = 1e-8) const;
};

// rho_g(w) = W(g(p0), w), computed by invert_V along the straight cover path.
double monodromy_value(const fields::ABModel& ab, const geometry::CoveringManifold& M,
                       const geometry::GeneratorWord& word, const Vec& p0, double w,
                       const InverseOptions& opt = {});

// Throws DomainError when b is not deck invariant at the spot checks, and
// NumericalFailure when the sampled map is not strictly increasing.
MonodromyMap monodromy(const fields::ABModel& ab, const geometry::CoveringManifold& M,
                       const geometry::GeneratorWord& word, const Vec& p0,
                       const std::vector<double>& w_grid, const MonodromyOptions& opt = {});

// Columns w, rho_w.
void write_monodromy_csv(std::ostream& out, const MonodromyMap& map);

// log-spaced grid of `count` points from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int count);

// ---------------------------------------------------------------------------
// Gauge transformations.

// W'(x, v) = rho(W(x, v)), h'(w) = h(rho^-1(w)) rho'(rho^-1(w)). Orders up to 2
// for W' and up to 1 for h'.
class GaugedHW final : public fields::HWModel {
 public:
  GaugedHW(std::shared_ptr<const fields::HWModel> hw, std::shared_ptr<const MonotoneMap> rho);

  int dimension() const override { return hw_->dimension(); }
  void W(std::span<const double> x, double v, int order, expr::DenseJet& out) const override;
  void h(double w, int order, expr::DenseJet& out) const override;

 private:
  std::shared_ptr<const fields::HWModel> hw_;
  std::shared_ptr<const MonotoneMap> rho_;
};

std::shared_ptr<GaugedHW> gauge_transform(std::shared_ptr<const fields::HWModel> hw,
                                          std::shared_ptr<const MonotoneMap> rho);

// ---------------------------------------------------------------------------
// Recovery of h.

struct ExtractOptions {
  InverseOptions inverse;
  std::vector<Vec> check_points;  // points p != p0 for the consistency check
  double residual_tol = 1e-8;     // gate on the closedness and normalizing residuals
};

struct HTable {
  std::vector<double> v;
  std::vector<double> h;
  // max over check points and grid speeds of |a(p, v) W_v(p, v) - h(W(p, v))|
  double max_defect = 0.0;
  Vec defect_point;
  double defect_v = 0.0;
  double max_residual = 0.0;  // spot residual of the PDE systems
};

// h(v) = a(p0, v), since W(p0, v) = v forces W_v(p0, v) = 1. Throws
// DomainError when the normalizing (or closedness) residual exceeds the gate.
HTable extract_h(const fields::ABModel& ab, const Vec& p0, const std::vector<double>& v_grid,
                 const ExtractOptions& opt = {});

// Columns v, h.
void write_h_csv(std::ostream& out, const HTable& table);

}  // namespace nshift::pfaff
