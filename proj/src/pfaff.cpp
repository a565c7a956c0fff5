#include "nshift/pfaff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "nshift/error.hpp"
#include "nshift/format.hpp"

namespace nshift::pfaff {

using expr::DenseJet;

namespace {

std::string describe_point(std::span<const double> x) {
  std::ostringstream s;
  s.precision(17);
  s << "(";
  for (std::size_t i = 0; i < x.size(); ++i) s << (i ? ", " : "") << x[i];
  s << ")";
  return s.str();
}

long steps_for(double length, double dt) {
  return std::max(1L, static_cast<long>(std::ceil(length / dt - 1e-9)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Paths.

bool same_point(std::span<const double> a, std::span<const double> b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol * std::max(1.0, std::abs(a[i]))) return false;
  }
  return true;
}

PathSpec PathSpec::polyline(std::vector<Vec> points) {
  if (points.size() < 2) throw InvalidArgument("a polyline needs at least two points");
  PathSpec p;
  p.n_ = static_cast<int>(points.front().size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (static_cast<int>(points[k].size()) != p.n_) {
      throw InvalidArgument("polyline point " + std::to_string(k) + " has the wrong dimension");
    }
    if (k > 0) {
      double gap = 0.0;
      for (int i = 0; i < p.n_; ++i) gap = std::max(gap, std::abs(points[k][i] - points[k - 1][i]));
      if (!(gap > 1e-14)) {
        throw InvalidArgument("polyline points " + std::to_string(k - 1) + " and " +
                              std::to_string(k) + " coincide");
      }
    }
  }
  p.points_ = std::move(points);
  return p;
}

PathSpec PathSpec::parametric(std::vector<expr::FieldExpr> components, double t0, double t1,
                              int samples) {
  if (components.empty()) throw InvalidArgument("a parametric path needs components");
  if (!(t1 > t0)) throw InvalidArgument("a parametric path needs t1 > t0");
  PathSpec p;
  p.n_ = static_cast<int>(components.size());
  p.t0_ = t0;
  p.t1_ = t1;
  const std::vector<std::string> layout = {"t"};
  for (const auto& c : components) {
    try {
      p.components_.emplace_back(c, layout);
    } catch (const expr::UnboundVariable& e) {
      throw InvalidArgument("path component '" + c.source() + "' uses variable '" + e.name() +
                            "' (allowed: t)");
    }
  }
  Vec x, xdot;
  const int count = std::max(samples, 2);
  for (int k = 0; k < count; ++k) {
    const double t = t0 + (t1 - t0) * k / (count - 1);
    p.eval(0, t, x, xdot);
    for (double c : xdot) {
      if (!std::isfinite(c) || std::abs(c) > 1e8) {
        throw InvalidArgument("path tangent is unbounded near t = " + format_double(t));
      }
    }
  }
  return p;
}

PathSpec PathSpec::on_surface(std::shared_ptr<const geometry::Hypersurface> surface, int axis,
                              Vec u_start, double length) {
  if (!surface) throw InvalidArgument("surface path needs a surface");
  if (axis < 0 || axis >= surface->parameter_count()) throw InvalidArgument("bad surface axis");
  if (static_cast<int>(u_start.size()) != surface->parameter_count()) {
    throw InvalidArgument("surface path start has the wrong number of parameters");
  }
  if (!(length > 0.0)) throw InvalidArgument("surface path length must be positive");
  PathSpec p;
  p.n_ = surface->dimension();
  p.surface_ = std::move(surface);
  p.axis_ = axis;
  p.u_start_ = std::move(u_start);
  p.t0_ = 0.0;
  p.t1_ = length;
  return p;
}

int PathSpec::piece_count() const {
  return points_.empty() ? 1 : static_cast<int>(points_.size()) - 1;
}

double PathSpec::piece_start(int piece) const {
  return points_.empty() ? t0_ : static_cast<double>(piece);
}

double PathSpec::piece_end(int piece) const {
  return points_.empty() ? t1_ : static_cast<double>(piece + 1);
}

void PathSpec::eval(int piece, double t, Vec& x, Vec& xdot) const {
  x.resize(n_);
  xdot.resize(n_);
  if (!points_.empty()) {
    const Vec& a = points_[piece];
    const Vec& b = points_[piece + 1];
    const double s = t - piece;
    for (int i = 0; i < n_; ++i) {
      xdot[i] = b[i] - a[i];
      x[i] = a[i] + s * xdot[i];
    }
    return;
  }
  if (surface_) {
    Vec u = u_start_;
    u[axis_] += t;
    std::vector<Vec> tangents;
    surface_->embed_with_tangents(u, x, tangents);
    xdot = tangents[axis_];
    return;
  }
  const double slot[1] = {t};
  DenseJet j;
  for (int i = 0; i < n_; ++i) {
    components_[i].jet(slot, 1, 1, j);
    x[i] = j.value();
    xdot[i] = j.d(0);
  }
}

Vec PathSpec::start() const {
  if (!points_.empty()) return points_.front();
  Vec x, xdot;
  eval(0, t0_, x, xdot);
  return x;
}

Vec PathSpec::end() const {
  if (!points_.empty()) return points_.back();
  Vec x, xdot;
  eval(0, t1_, x, xdot);
  return x;
}

PathSpec PathSpec::reversed() const {
  if (points_.empty()) throw InvalidArgument("only polylines can be reversed");
  std::vector<Vec> pts(points_.rbegin(), points_.rend());
  return polyline(std::move(pts));
}

PathSpec straight_path(const Vec& base, const Vec& x) { return PathSpec::segment(base, x); }

// ---------------------------------------------------------------------------
// Continuation.

Continuation continue_V(const fields::ABModel& ab, const PathSpec& path, double w0, double dt) {
  if (!(w0 > 0.0) || !std::isfinite(w0)) throw InvalidArgument("initial value must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("continuation step must be positive");
  const int n = path.dimension();
  if (ab.dimension() != n) throw InvalidArgument("path and field dimensions differ");

  Continuation out;
  out.samples.push_back({path.piece_start(0), path.start(), w0, 1.0});

  Vec x, xdot;
  fields::ABJet jet;
  // (dV/dt, d log V_w / dt)
  auto rhs = [&](int piece, double t, double V, double& dV, double& dL) {
    path.eval(piece, t, x, xdot);
    try {
      ab.eval(x, V, 1, jet);
    } catch (const Error& e) {
      throw NumericalFailure("b evaluation failed at t=" + format_double(t) + ", x=" +
                             describe_point(x) + ", V=" + format_double(V) + ": " + e.what());
    }
    dV = 0.0;
    dL = 0.0;
    for (int i = 0; i < n; ++i) {
      dV += jet.b[i].value() * xdot[i];
      dL += jet.b[i].d(n) * xdot[i];
    }
  };

  double V = w0;
  double L = 0.0;
  for (int piece = 0; piece < path.piece_count(); ++piece) {
    const double a = path.piece_start(piece);
    const double b = path.piece_end(piece);
    const long steps = steps_for(b - a, dt);
    const double h = (b - a) / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
      const double t = a + static_cast<double>(k) * h;
      double v1, l1, v2, l2, v3, l3, v4, l4;
      rhs(piece, t, V, v1, l1);
      rhs(piece, t + 0.5 * h, V + 0.5 * h * v1, v2, l2);
      rhs(piece, t + 0.5 * h, V + 0.5 * h * v2, v3, l3);
      rhs(piece, t + h, V + h * v3, v4, l4);
      V += h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
      L += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
      const double t_next = k + 1 == steps ? b : a + static_cast<double>(k + 1) * h;
      path.eval(piece, t_next, x, xdot);
      if (!(V > 0.0) || !std::isfinite(V)) {
        throw NumericalFailure("V left (0, inf) at t=" + format_double(t_next) + ", x=" +
                               describe_point(x) + ", V=" + format_double(V));
      }
      out.samples.push_back({t_next, x, V, std::exp(L)});
    }
  }
  return out;
}

std::vector<double> Vw_along_path(const fields::ABModel& ab, const PathSpec& path, double w0,
                                  double dt) {
  const Continuation c = continue_V(ab, path, w0, dt);
  std::vector<double> out;
  out.reserve(c.samples.size());
  for (const auto& s : c.samples) out.push_back(s.Vw);
  return out;
}

double path_independence_defect(const fields::ABModel& ab, const PathSpec& path1,
                                const PathSpec& path2, double w0, double dt) {
  if (!same_point(path1.start(), path2.start()) || !same_point(path1.end(), path2.end())) {
    throw InvalidArgument("paths do not share their endpoints");
  }
  return std::abs(continue_V(ab, path1, w0, dt).end_value() -
                  continue_V(ab, path2, w0, dt).end_value());
}

Inversion invert_V(const fields::ABModel& ab, const Vec& base, const Vec& x, double v,
                   const InverseOptions& opt, const PathFactory& paths) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("target speed must be positive");
  if (same_point(base, x, 0.0)) return {v, 1.0, 0};
  const PathSpec path = paths(base, x);

  int evaluations = 0;
  auto run = [&](double w, double& Vw) {
    ++evaluations;
    const Continuation c = continue_V(ab, path, w, opt.dt);
    Vw = c.end_Vw();
    return c.end_value();
  };
  const double tol = 1e-13 * std::max(1.0, v);
  const double accept = 1e-10 * std::max(1.0, v);
  auto failure = [&](const std::string& why) {
    return NumericalFailure("cannot invert V at x=" + describe_point(x) + " for v=" +
                            format_double(v) + ": " + why);
  };

  double w = std::clamp(v, opt.w_lo, opt.w_hi);
  double Vw = 1.0;
  double Vcur = run(w, Vw);
  if (std::abs(Vcur - v) <= tol) return {w, Vw, evaluations};

  // Bracket [lo, hi] with V(lo) < v < V(hi); V increases with w.
  double lo = w, hi = w;
  double Vw_edge = Vw;
  if (Vcur < v) {
    double Vhi = Vcur;
    while (Vhi < v) {
      if (hi >= opt.w_hi) throw failure("no w up to " + format_double(opt.w_hi) + " reaches it");
      lo = hi;
      hi = std::min(hi * 4.0, opt.w_hi);
      Vhi = run(hi, Vw_edge);
    }
  } else {
    double Vlo = Vcur;
    while (Vlo > v) {
      if (lo <= opt.w_lo) throw failure("no w down to " + format_double(opt.w_lo) + " reaches it");
      hi = lo;
      lo = std::max(lo / 4.0, opt.w_lo);
      Vlo = run(lo, Vw_edge);
    }
  }

  double best_w = w, best_V = Vcur, best_Vw = Vw;
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (std::abs(Vcur - v) < std::abs(best_V - v)) {
      best_w = w;
      best_V = Vcur;
      best_Vw = Vw;
    }
    if (std::abs(best_V - v) <= tol) break;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
    double next = (Vw > 0.0) ? w - (Vcur - v) / Vw : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
    w = next;
    Vcur = run(w, Vw);
    if (Vcur < v) lo = w; else hi = w;
  }
  if (std::abs(Vcur - v) < std::abs(best_V - v)) {
    best_w = w;
    best_V = Vcur;
    best_Vw = Vw;
  }
  if (!(std::abs(best_V - v) <= accept)) {
    throw failure("residual " + format_double(best_V - v) + " after " +
                  std::to_string(opt.max_iterations) + " iterations");
  }
  return {best_w, best_Vw, evaluations};
}

void write_trace_csv(std::ostream& out, const Continuation& c, int n) {
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  out << ",V,V_w\n";
  for (const auto& s : c.samples) {
    out << format_double(s.t);
    for (double xi : s.x) out << ',' << format_double(xi);
    out << ',' << format_double(s.V) << ',' << format_double(s.Vw) << '\n';
  }
}

// ---------------------------------------------------------------------------
// f-norm.

AdmissibleF::AdmissibleF(const expr::FieldExpr& f, bool diverges_at_zero,
                         bool diverges_at_infinity)
    : at_zero_(diverges_at_zero), at_infinity_(diverges_at_infinity) {
  const std::vector<std::string> layout = {"v"};
  try {
    f_ = expr::Program(f, layout);
  } catch (const expr::UnboundVariable& e) {
    throw InvalidArgument("f '" + f.source() + "' uses variable '" + e.name() +
                          "' (allowed: v)");
  }
  for (double v : log_grid(1e-6, 1e6, 121)) {
    const double value = (*this)(v);
    if (!(value > 0.0)) {
      throw DomainError("f '" + f.source() + "' is not positive at v=" + format_double(v));
    }
  }
}

double AdmissibleF::operator()(double v) const {
  const double slot[1] = {v};
  return f_.value(slot);
}

FNormEstimate f_norm_estimate(const fields::ABModel& ab, const AdmissibleF& f,
                              const geometry::MetricSpec& m, const std::vector<Vec>& x_grid,
                              const std::vector<double>& v_grid) {
  if (x_grid.empty() || v_grid.empty()) throw InvalidArgument("f-norm grids must be nonempty");
  for (std::size_t k = 1; k < v_grid.size(); ++k) {
    if (!(v_grid[k] > v_grid[k - 1])) throw InvalidArgument("speed grid must be increasing");
  }
  const int n = ab.dimension();
  std::vector<double> per_v(v_grid.size(), -1.0);
  FNormEstimate est;
  est.value = -1.0;
  fields::ABJet jet;
  for (const Vec& x : x_grid) {
    const Matrix g_inv = spd_inverse(m.metric_at(x));
    for (std::size_t k = 0; k < v_grid.size(); ++k) {
      const double v = v_grid[k];
      const double fv = f(v);
      if (!(fv > 0.0)) throw DomainError("f is not positive at v=" + format_double(v));
      ab.eval(x, v, 0, jet);
      Vec b(n);
      for (int i = 0; i < n; ++i) b[i] = jet.b[i].value();
      const double ratio = std::sqrt(std::max(inner(g_inv, b, b), 0.0)) / fv;
      per_v[k] = std::max(per_v[k], ratio);
      if (ratio > est.value) {
        est.value = ratio;
        est.x = x;
        est.v = v;
        est.v_index = k;
      }
    }
  }
  const bool on_edge = est.v_index == 0 || est.v_index + 1 == v_grid.size();
  if (on_edge && v_grid.size() > 1) {
    double others = 0.0;
    for (std::size_t k = 0; k < per_v.size(); ++k) {
      if (k != est.v_index) others = std::max(others, per_v[k]);
    }
    est.divergence_suspected = est.value > others * (1.0 + 1e-12);
  }
  est.per_v = std::move(per_v);
  return est;
}

// ---------------------------------------------------------------------------
// Monotone maps.

namespace {

// Safeguarded Newton for an increasing function on [lo, hi].
template <class F, class DF>
double solve_increasing(F f, DF df, double target, double lo, double hi) {
  double flo = f(lo) - target;
  double fhi = f(hi) - target;
  if (flo > 0.0 || fhi < 0.0) {
    throw DomainError("value " + format_double(target) + " outside the range of the map");
  }
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double fx = f(x) - target;
    if (fx == 0.0) return x;
    if (fx < 0.0) lo = x; else hi = x;
    if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))) {
      break;
    }
    const double d = df(x);
    double next = d > 0.0 ? x - fx / d : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

}  // namespace

ClosedFormMap::ClosedFormMap(const expr::FieldExpr& rho, double lo, double hi)
    : lo_(lo), hi_(hi) {
  if (!(hi > lo) || !(lo >= 0.0)) throw InvalidArgument("map domain must satisfy 0 <= lo < hi");
  const std::vector<std::string> layout = {"w"};
  try {
    rho_ = expr::Program(rho, layout);
  } catch (const expr::UnboundVariable& e) {
    throw InvalidArgument("map '" + rho.source() + "' uses variable '" + e.name() +
                          "' (allowed: w)");
  }
  double prev = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 64; ++k) {
    const double w = k == 64 ? hi : lo + (hi - lo) * k / 64.0;
    if (w <= 0.0) continue;
    const double r = (*this)(w);
    if (!(r > 0.0) || !(r > prev)) {
      throw InvalidArgument("map '" + rho.source() + "' is not positive and increasing on [" +
                            format_double(lo) + ", " + format_double(hi) + "]");
    }
    prev = r;
  }
}

std::shared_ptr<ClosedFormMap> ClosedFormMap::identity() {
  return std::make_shared<ClosedFormMap>(expr::parse("w"), 0.0, 1e300);
}

DenseJet ClosedFormMap::jet(double w) const {
  if (w < lo_ || w > hi_) {
    throw DomainError("w=" + format_double(w) + " outside the map domain [" + format_double(lo_) +
                      ", " + format_double(hi_) + "]");
  }
  const double slot[1] = {w};
  return rho_.jet(slot, 1, 2);
}

double ClosedFormMap::operator()(double w) const { return jet(w).value(); }
double ClosedFormMap::derivative(double w) const { return jet(w).d(0); }
double ClosedFormMap::second_derivative(double w) const { return jet(w).d2(0, 0); }

double ClosedFormMap::inverse(double y) const {
  // Shrink an unbounded upper end so the bracket is finite and evaluable.
  double hi = hi_;
  if (hi > 1e12) {
    hi = std::max(1.0, lo_);
    while ((*this)(hi) < y && hi < hi_ / 2.0) hi *= 2.0;
  }
  return solve_increasing([&](double w) { return (*this)(w); },
                          [&](double w) { return derivative(w); }, y, lo_, hi);
}

TableMap::TableMap(std::vector<double> w, std::vector<double> rho)
    : w_(std::move(w)), rho_(std::move(rho)) {
  const std::size_t count = w_.size();
  if (count < 2 || rho_.size() != count) throw InvalidArgument("a map table needs >= 2 samples");
  for (std::size_t k = 0; k < count; ++k) {
    if (!(w_[k] > 0.0) || !(rho_[k] > 0.0)) {
      throw NumericalFailure("map table is not positive at w=" + format_double(w_[k]));
    }
    if (k > 0 && (!(w_[k] > w_[k - 1]) || !(rho_[k] > rho_[k - 1]))) {
      throw NumericalFailure("map table is not strictly increasing at w=" + format_double(w_[k]));
    }
    s_.push_back(std::log(w_[k]));
    y_.push_back(std::log(rho_[k]));
  }
  // Node slopes: derivative of the interpolating polynomial through up to five
  // nearest nodes.
  m_.resize(count);
  const std::size_t window = std::min<std::size_t>(5, count);
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t first = k >= window / 2 ? k - window / 2 : 0;
    first = std::min(first, count - window);
    double slope = 0.0;
    for (std::size_t j = first; j < first + window; ++j) {
      // d/ds of the Lagrange basis polynomial l_j at s_k.
      double dl = 0.0;
      if (j == k) {
        for (std::size_t i = first; i < first + window; ++i) {
          if (i != k) dl += 1.0 / (s_[k] - s_[i]);
        }
      } else {
        dl = 1.0 / (s_[j] - s_[k]);
        for (std::size_t i = first; i < first + window; ++i) {
          if (i != j && i != k) dl *= (s_[k] - s_[i]) / (s_[j] - s_[i]);
        }
      }
      slope += y_[j] * dl;
    }
    m_[k] = slope;
  }
  // Fritsch-Carlson limiter.
  for (std::size_t k = 0; k + 1 < count; ++k) {
    const double delta = (y_[k + 1] - y_[k]) / (s_[k + 1] - s_[k]);
    m_[k] = std::max(m_[k], 0.0);
    m_[k + 1] = std::max(m_[k + 1], 0.0);
    const double a = m_[k] / delta;
    const double b = m_[k + 1] / delta;
    const double r = a * a + b * b;
    if (r > 9.0) {
      const double tau = 3.0 / std::sqrt(r);
      m_[k] = tau * a * delta;
      m_[k + 1] = tau * b * delta;
    }
  }
}

std::size_t TableMap::interval(double s) const {
  const auto it = std::upper_bound(s_.begin(), s_.end(), s);
  std::size_t k = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
  return std::min(k, s_.size() - 2);
}

void TableMap::eval_log(double s, double& y, double& dy, double& d2y) const {
  const std::size_t k = interval(s);
  const double h = s_[k + 1] - s_[k];
  const double t = (s - s_[k]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double y0 = y_[k], y1 = y_[k + 1], m0 = h * m_[k], m1 = h * m_[k + 1];
  y = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 +
      (t3 - t2) * m1;
  dy = ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * y1 +
        (3 * t2 - 2 * t) * m1) / h;
  d2y = ((12 * t - 6) * y0 + (6 * t - 4) * m0 + (-12 * t + 6) * y1 + (6 * t - 2) * m1) / (h * h);
}

namespace {

double checked_log(double w, double lo, double hi) {
  const double slack = 1e-12;
  if (!(w >= lo * (1.0 - slack) && w <= hi * (1.0 + slack))) {
    throw DomainError("w=" + format_double(w) + " outside the table range [" + format_double(lo) +
                      ", " + format_double(hi) + "]");
  }
  return std::log(std::clamp(w, lo, hi));
}

}  // namespace

double TableMap::operator()(double w) const {
  const double s = checked_log(w, w_.front(), w_.back());
  // Nodes are reproduced exactly.
  const auto it = std::lower_bound(w_.begin(), w_.end(), w);
  if (it != w_.end() && *it == w) return rho_[static_cast<std::size_t>(it - w_.begin())];
  double y, dy, d2y;
  eval_log(s, y, dy, d2y);
  return std::exp(y);
}

double TableMap::derivative(double w) const {
  const double s = checked_log(w, w_.front(), w_.back());
  double y, dy, d2y;
  eval_log(s, y, dy, d2y);
  return std::exp(y - s) * dy;
}

double TableMap::second_derivative(double w) const {
  const double s = checked_log(w, w_.front(), w_.back());
  double y, dy, d2y;
  eval_log(s, y, dy, d2y);
  return std::exp(y - 2.0 * s) * ((dy - 1.0) * dy + d2y);
}

double TableMap::inverse(double r) const {
  if (!(r > 0.0)) throw DomainError("map value must be positive");
  const auto it = std::lower_bound(rho_.begin(), rho_.end(), r);
  if (it != rho_.end() && *it == r) return w_[static_cast<std::size_t>(it - rho_.begin())];
  const double target = std::log(r);
  const double s = solve_increasing(
      [&](double s) {
        double y, dy, d2y;
        eval_log(s, y, dy, d2y);
        return y;
      },
      [&](double s) {
        double y, dy, d2y;
        eval_log(s, y, dy, d2y);
        return dy;
      },
      target, s_.front(), s_.back());
  return std::exp(s);
}

// ---------------------------------------------------------------------------
// Monodromy.

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw InvalidArgument("bad log grid");
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (int k = 0; k < count; ++k) out[k] = std::exp(a + (b - a) * k / (count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

bool MonodromyMap::is_identity(double tol) const {
  for (std::size_t k = 0; k < table->w().size(); ++k) {
    const double w = table->w()[k];
    if (std::abs(table->rho()[k] - w) > tol * std::max(1.0, w)) return false;
  }
  return true;
}

double monodromy_value(const fields::ABModel& ab, const geometry::CoveringManifold& M,
                       const geometry::GeneratorWord& word, const Vec& p0, double w,
                       const InverseOptions& opt) {
  return invert_V(ab, p0, M.deck_apply(word, p0), w, opt).w;
}

namespace {

geometry::GeneratorWord inverse_word(const geometry::GeneratorWord& word) {
  geometry::GeneratorWord inv(word.rbegin(), word.rend());
  for (auto& letter : inv) letter.power = -letter.power;
  return inv;
}

void check_deck_invariance(const fields::ABModel& ab, const geometry::CoveringManifold& M,
                           const geometry::GeneratorWord& word, const Vec& p0,
                           const MonodromyOptions& opt) {
  const int n = M.dimension();
  const Vec target = M.deck_apply(word, p0);
  fields::ABJet here, there;
  for (const auto& letter : word) {
    const geometry::GeneratorWord single = {{letter.generator, 1}};
    for (int k = 0; k <= 4; ++k) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = p0[i] + (target[i] - p0[i]) * k / 4.0;
      const Vec gx = M.deck_apply(single, x);
      for (double v : opt.check_speeds) {
        ab.eval(x, v, 0, here);
        ab.eval(gx, v, 0, there);
        for (int i = 0; i < n; ++i) {
          const double a = here.b[i].value(), b = there.b[i].value();
          if (std::abs(a - b) > opt.invariance_tol * std::max(1.0, std::abs(a))) {
            throw DomainError("b is not invariant under generator g" +
                              std::to_string(letter.generator + 1) + ": b" +
                              std::to_string(i + 1) + " differs by " + format_double(b - a) +
                              " at x=" + describe_point(x) + ", v=" + format_double(v));
          }
        }
      }
    }
  }
}

}  // namespace

MonodromyMap monodromy(const fields::ABModel& ab, const geometry::CoveringManifold& M,
                       const geometry::GeneratorWord& word, const Vec& p0,
                       const std::vector<double>& w_grid, const MonodromyOptions& opt) {
  if (w_grid.size() < 2) throw InvalidArgument("monodromy needs at least two w values");
  for (std::size_t k = 0; k < w_grid.size(); ++k) {
    if (!(w_grid[k] > 0.0) || (k > 0 && !(w_grid[k] > w_grid[k - 1]))) {
      throw InvalidArgument("w grid must be positive and increasing");
    }
  }
  check_deck_invariance(ab, M, word, p0, opt);

  const Vec target = M.deck_apply(word, p0);
  const Vec back = M.deck_apply(inverse_word(word), p0);
  const bool trivial = same_point(target, p0, 0.0);

  MonodromyMap map;
  map.word = word;
  std::vector<double> rho(w_grid.size());
  for (std::size_t k = 0; k < w_grid.size(); ++k) {
    const double w = w_grid[k];
    rho[k] = invert_V(ab, p0, target, w, opt.inverse).w;
    const double direct =
        trivial ? w : continue_V(ab, PathSpec::segment(p0, back), w, opt.inverse.dt).end_value();
    map.cross_check_defect = std::max(map.cross_check_defect, std::abs(rho[k] - direct) / rho[k]);
  }
  map.table = std::make_shared<TableMap>(w_grid, std::move(rho));
  return map;
}

void write_monodromy_csv(std::ostream& out, const MonodromyMap& map) {
  out << "w,rho_w\n";
  for (std::size_t k = 0; k < map.table->w().size(); ++k) {
    out << format_double(map.table->w()[k]) << ',' << format_double(map.table->rho()[k]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Gauge transformations.

GaugedHW::GaugedHW(std::shared_ptr<const fields::HWModel> hw,
                   std::shared_ptr<const MonotoneMap> rho)
    : hw_(std::move(hw)), rho_(std::move(rho)) {
  if (!hw_ || !rho_) throw InvalidArgument("gauge transform needs a model and a map");
}

void GaugedHW::W(std::span<const double> x, double v, int order, DenseJet& out) const {
  DenseJet inner_jet;
  hw_->W(x, v, order, inner_jet);
  const double u = inner_jet.value();
  const double r0 = (*rho_)(u);
  const double r1 = order >= 1 ? rho_->derivative(u) : 0.0;
  const double r2 = order >= 2 ? rho_->second_derivative(u) : 0.0;
  out = inner_jet.compose(r0, r1, r2);
}

void GaugedHW::h(double w, int order, DenseJet& out) const {
  if (order > 1) throw InvalidArgument("gauged h provides derivatives up to order 1");
  const double u = rho_->inverse(w);
  DenseJet hu;
  hw_->h(u, order, hu);
  const double r1 = rho_->derivative(u);
  out = DenseJet::constant(hu.value() * r1, 1, order);
  if (order == 1) {
    out.d_ref(0) = (hu.d(0) * r1 + hu.value() * rho_->second_derivative(u)) / r1;
  }
}

std::shared_ptr<GaugedHW> gauge_transform(std::shared_ptr<const fields::HWModel> hw,
                                          std::shared_ptr<const MonotoneMap> rho) {
  return std::make_shared<GaugedHW>(std::move(hw), std::move(rho));
}

// ---------------------------------------------------------------------------
// Recovery of h.

HTable extract_h(const fields::ABModel& ab, const Vec& p0, const std::vector<double>& v_grid,
                 const ExtractOptions& opt) {
  const int n = ab.dimension();
  if (static_cast<int>(p0.size()) != n) throw InvalidArgument("base point has the wrong dimension");
  if (v_grid.empty()) throw InvalidArgument("speed grid must be nonempty");

  HTable table;
  std::vector<Vec> points = {p0};
  points.insert(points.end(), opt.check_points.begin(), opt.check_points.end());
  for (const Vec& p : points) {
    for (double v : v_grid) {
      const Vec r = fields::normalizing_residual(ab, p, v);
      const Matrix c = fields::closedness_residual(ab, p, v);
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(r[i]));
        for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(c(i, j)));
      }
      table.max_residual = std::max(table.max_residual, worst);
      if (worst > opt.residual_tol) {
        throw DomainError("(a, b) fails the normalizing/closedness equations by " +
                          format_double(worst) + " at x=" + describe_point(p) + ", v=" +
                          format_double(v) + "; h is not defined");
      }
    }
  }

  fields::ABJet jet;
  auto a_at = [&](const Vec& p, double v) {
    ab.eval(p, v, 0, jet);
    return jet.a.value();
  };
  for (double v : v_grid) {
    table.v.push_back(v);
    table.h.push_back(a_at(p0, v));
  }
  table.defect_point = p0;
  for (const Vec& p : opt.check_points) {
    for (double v : v_grid) {
      const Inversion inv = invert_V(ab, p0, p, v, opt.inverse);
      // V(p, W(p, v)) = v gives W_v = 1 / V_w.
      const double lifted = a_at(p, v) / inv.Vw;
      const double expected = a_at(p0, inv.w);
      const double defect = std::abs(lifted - expected);
      if (defect > table.max_defect) {
        table.max_defect = defect;
        table.defect_point = p;
        table.defect_v = v;
      }
    }
  }
  return table;
}

void write_h_csv(std::ostream& out, const HTable& table) {
  out << "v,h\n";
  for (std::size_t k = 0; k < table.v.size(); ++k) {
    out << format_double(table.v[k]) << ',' << format_double(table.h[k]) << '\n';
  }
}

}  // namespace nshift::pfaff
