#include "nshift/fields.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nshift/error.hpp"

namespace nshift::fields {

using expr::DenseJet;

std::vector<std::string> state_names(int n) {
  auto names = geometry::coordinate_names(n);
  names.push_back("v");
  return names;
}

namespace {

std::string format_state(std::span<const double> x, double v) {
  std::ostringstream s;
  s.precision(17);
  s << "x=(";
  for (std::size_t i = 0; i < x.size(); ++i) s << (i ? ", " : "") << x[i];
  s << "), v=" << v;
  return s.str();
}

expr::Program bind_program(const expr::FieldExpr& e, const std::vector<std::string>& layout,
                   const char* what) {
  try {
    return expr::Program(e, layout);
  } catch (const expr::UnboundVariable& err) {
    std::string allowed;
    for (const auto& s : layout) allowed += (allowed.empty() ? "" : ", ") + s;
    throw InvalidArgument(std::string(what) + " '" + e.source() + "' uses variable '" +
                          err.name() + "' (allowed: " + allowed + ")");
  }
}

// Slots (x1..xn, v) in a reusable thread-local buffer.
std::span<const double> state_slots(std::span<const double> x, double v) {
  thread_local Vec buf;
  buf.assign(x.begin(), x.end());
  buf.push_back(v);
  return buf;
}

void check_wv(double wv, std::span<const double> x, double v) {
  if (!(std::abs(wv) > kMinWv)) {
    std::ostringstream s;
    s.precision(17);
    s << "vanishing W_v = " << wv << " at " << format_state(x, v);
    throw DomainError(s.str());
  }
}

struct Kinematics {
  double speed = 0.0;
  Vec up;    // N^i
  Vec down;  // N_i
};

Kinematics kinematics(const geometry::LocalGeometry& geo, std::span<const double> x,
                      std::span<const double> velocity) {
  Kinematics k;
  const double s2 = inner(geo.g, velocity, velocity);
  k.speed = std::sqrt(std::max(s2, 0.0));
  if (!(k.speed > kMinSpeed)) {
    throw DomainError("zero-speed state at " + format_state(x, k.speed));
  }
  k.up.assign(velocity.begin(), velocity.end());
  for (auto& c : k.up) c /= k.speed;
  k.down = geo.g.apply(k.up);
  return k;
}

// F_k = a N_k + v (2 (b.N) N_k - b_k), raised.
Vec ab_force(double a, std::span<const double> b, const Kinematics& k,
             const geometry::LocalGeometry& geo) {
  const std::size_t n = b.size();
  double bn = 0.0;
  for (std::size_t i = 0; i < n; ++i) bn += b[i] * k.up[i];
  Vec f(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = a * k.down[i] + k.speed * (2.0 * bn * k.down[i] - b[i]);
  }
  return geo.g_inv.apply(f);
}

// F_k = h(W) N_k / W_v - v sum_i (W_i / W_v)(2 N^i N_k - delta^i_k), raised.
Vec hw_force(const HWModel& hw, std::span<const double> x, std::span<const double> velocity,
             const geometry::LocalGeometry& geo) {
  const int n = hw.dimension();
  const Kinematics k = kinematics(geo, x, velocity);
  DenseJet W, h;
  hw.W(x, k.speed, 1, W);
  const double wv = W.d(n);
  check_wv(wv, x, k.speed);
  hw.h(W.value(), 0, h);
  double qn = 0.0;
  for (int i = 0; i < n; ++i) qn += (W.d(i) / wv) * k.up[i];
  Vec f(n);
  for (int i = 0; i < n; ++i) {
    f[i] = h.value() * k.down[i] / wv - k.speed * (2.0 * qn * k.down[i] - W.d(i) / wv);
  }
  return geo.g_inv.apply(f);
}

}  // namespace

// ---------------------------------------------------------------------------

HWPair::HWPair(int n, const expr::FieldExpr& W, const expr::FieldExpr& h)
    : n_(n), W_(bind_program(W, state_names(n), "W")), h_(bind_program(h, {"w"}, "h")) {
  if (n + 1 > expr::kMaxDirections) throw InvalidArgument("dimension too large");
}

void HWPair::W(std::span<const double> x, double v, int order, DenseJet& out) const {
  W_.jet(state_slots(x, v), n_ + 1, order, out);
}

void HWPair::h(double w, int order, DenseJet& out) const {
  const double slot[1] = {w};
  h_.jet(slot, 1, order, out);
}

ABFields::ABFields(int n, const expr::FieldExpr& a, const std::vector<expr::FieldExpr>& b)
    : n_(n), a_(bind_program(a, state_names(n), "a")) {
  if (static_cast<int>(b.size()) != n) {
    throw InvalidArgument("b needs " + std::to_string(n) + " components, got " +
                          std::to_string(b.size()));
  }
  const auto names = state_names(n);
  for (const auto& e : b) b_.push_back(bind_program(e, names, "b component"));
}

void ABFields::eval(std::span<const double> x, double v, int order, ABJet& out) const {
  const auto slots = state_slots(x, v);
  out.b.resize(n_);
  a_.jet(slots, n_ + 1, order, out.a);
  for (int i = 0; i < n_; ++i) b_[i].jet(slots, n_ + 1, order, out.b[i]);
}

DerivedAB::DerivedAB(std::shared_ptr<const HWModel> hw) : hw_(std::move(hw)) {
  if (!hw_) throw InvalidArgument("DerivedAB needs an (h, W) model");
}

void DerivedAB::eval(std::span<const double> x, double v, int order, ABJet& out) const {
  const int n = hw_->dimension();
  const int dirs = n + 1;
  DenseJet W, h;
  hw_->W(x, v, order + 1, W);
  const double wv = W.d(n);
  check_wv(wv, x, v);
  hw_->h(W.value(), order, h);
  const double hv = h.value();

  out.a = DenseJet::constant(hv / wv, dirs, order);
  out.b.assign(n, DenseJet{});
  for (int i = 0; i < n; ++i) out.b[i] = DenseJet::constant(-W.d(i) / wv, dirs, order);
  if (order < 1) return;
  const double wv2 = wv * wv;
  for (int k = 0; k < dirs; ++k) {
    out.a.d_ref(k) = (h.d(0) * W.d(k) * wv - hv * W.d2(n, k)) / wv2;
    for (int i = 0; i < n; ++i) {
      out.b[i].d_ref(k) = -(W.d2(i, k) * wv - W.d(i) * W.d2(n, k)) / wv2;
    }
  }
}

// ---------------------------------------------------------------------------

Vec b_from_W(const HWModel& hw, std::span<const double> x, double v) {
  const int n = hw.dimension();
  DenseJet W;
  hw.W(x, v, 1, W);
  const double wv = W.d(n);
  check_wv(wv, x, v);
  Vec b(n);
  for (int i = 0; i < n; ++i) b[i] = -W.d(i) / wv;
  return b;
}

double a_from_hW(const HWModel& hw, std::span<const double> x, double v) {
  const int n = hw.dimension();
  DenseJet W, h;
  hw.W(x, v, 1, W);
  const double wv = W.d(n);
  check_wv(wv, x, v);
  hw.h(W.value(), 0, h);
  return h.value() / wv;
}

Vec force_hw(const HWModel& hw, const geometry::MetricSpec& m, std::span<const double> x,
             std::span<const double> velocity) {
  return hw_force(hw, x, velocity, m.local(x, false));
}

Vec force_ab(const ABModel& ab, const geometry::MetricSpec& m, std::span<const double> x,
             std::span<const double> velocity) {
  const auto geo = m.local(x, false);
  const Kinematics k = kinematics(geo, x, velocity);
  ABJet j;
  ab.eval(x, k.speed, 0, j);
  Vec b(j.b.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = j.b[i].value();
  return ab_force(j.a.value(), b, k, geo);
}

Vec force_closed_form(std::span<const double> omega, const geometry::MetricSpec& m,
                      std::span<const double> x, std::span<const double> velocity) {
  const int n = m.dimension();
  if (static_cast<int>(omega.size()) != n + 1) throw InvalidArgument("omega needs n+1 components");
  const auto geo = m.local(x, false);
  const Kinematics k = kinematics(geo, x, velocity);
  const double last = omega[n];
  double qn = 0.0;
  for (int i = 0; i < n; ++i) qn += (omega[i] / last) * k.up[i];
  Vec f(n);
  for (int i = 0; i < n; ++i) {
    f[i] = k.down[i] / last - k.speed * (2.0 * qn * k.down[i] - omega[i] / last);
  }
  return geo.g_inv.apply(f);
}

Matrix closedness_residual(const ABModel& ab, std::span<const double> x, double v) {
  const int n = ab.dimension();
  ABJet j;
  ab.eval(x, v, 1, j);
  Matrix r(n);
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      const double lhs = j.b[i].d(k) + j.b[k].value() * j.b[i].d(n);
      const double rhs = j.b[k].d(i) + j.b[i].value() * j.b[k].d(n);
      r(i, k) = lhs - rhs;
      r(k, i) = -(lhs - rhs);
    }
  }
  return r;
}

Vec normalizing_residual(const ABModel& ab, std::span<const double> x, double v) {
  const int n = ab.dimension();
  ABJet j;
  ab.eval(x, v, 1, j);
  Vec r(n);
  for (int i = 0; i < n; ++i) {
    r[i] = j.a.d(i) + j.b[i].value() * j.a.d(n) - j.b[i].d(n) * j.a.value();
  }
  return r;
}

double collinearity_defect(const ABModel& ab, const expr::FieldExpr& W_expr,
                           std::span<const double> x, double v) {
  const int n = ab.dimension();
  const int dirs = n + 1;
  const expr::Program W_prog = bind_program(W_expr, state_names(n), "W");
  const DenseJet W = W_prog.jet(state_slots(x, v), dirs, 2);
  ABJet j;
  ab.eval(x, v, 1, j);
  // dW~ = d(a W_v) = W_v da + a dW_v
  Vec dw(dirs), dwt(dirs);
  for (int k = 0; k < dirs; ++k) {
    dw[k] = W.d(k);
    dwt[k] = W.d(n) * j.a.d(k) + j.a.value() * W.d2(n, k);
  }
  const double norm_dw = std::sqrt(dot(dw, dw));
  if (!(norm_dw > 1e-12)) {
    throw DomainError("|dW| below 1e-12 at " + format_state(x, v));
  }
  const double norm_dwt = std::sqrt(dot(dwt, dwt));
  if (norm_dwt == 0.0) return 0.0;
  const double along = dot(dwt, dw) / (norm_dw * norm_dw);
  double perp2 = 0.0;
  for (int k = 0; k < dirs; ++k) {
    const double c = dwt[k] - along * dw[k];
    perp2 += c * c;
  }
  return std::sqrt(perp2) / norm_dwt;
}

// ---------------------------------------------------------------------------

ForceField ForceField::from_hw(std::shared_ptr<const HWModel> hw, geometry::MetricSpec m) {
  if (!hw || hw->dimension() != m.dimension()) throw InvalidArgument("force/metric dimension mismatch");
  ForceField f;
  f.source_ = Source::HW;
  f.hw_ = std::move(hw);
  f.metric_ = std::move(m);
  return f;
}

ForceField ForceField::from_ab(std::shared_ptr<const ABModel> ab, geometry::MetricSpec m) {
  if (!ab || ab->dimension() != m.dimension()) throw InvalidArgument("force/metric dimension mismatch");
  ForceField f;
  f.source_ = Source::AB;
  f.ab_ = std::move(ab);
  f.metric_ = std::move(m);
  return f;
}

ForceField ForceField::custom(const std::vector<expr::FieldExpr>& components,
                              geometry::MetricSpec m) {
  const int n = m.dimension();
  if (static_cast<int>(components.size()) != n) {
    throw InvalidArgument("custom force needs " + std::to_string(n) + " components");
  }
  auto names = state_names(n);
  for (int i = 1; i <= n; ++i) names.push_back("xdot" + std::to_string(i));
  ForceField f;
  f.source_ = Source::Custom;
  f.metric_ = std::move(m);
  for (const auto& c : components) f.custom_.push_back(bind_program(c, names, "force component"));
  return f;
}

Vec ForceField::operator()(std::span<const double> x, std::span<const double> velocity) const {
  return evaluate(x, velocity, metric_.local(x, false));
}

Vec ForceField::evaluate(std::span<const double> x, std::span<const double> velocity,
                         const geometry::LocalGeometry& geo) const {
  switch (source_) {
    case Source::HW:
      return hw_force(*hw_, x, velocity, geo);
    case Source::AB: {
      const Kinematics k = kinematics(geo, x, velocity);
      ABJet j;
      ab_->eval(x, k.speed, 0, j);
      Vec b(j.b.size());
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = j.b[i].value();
      return ab_force(j.a.value(), b, k, geo);
    }
    case Source::Custom: {
      const int n = dimension();
      Vec slots(x.begin(), x.end());
      slots.push_back(std::sqrt(std::max(inner(geo.g, velocity, velocity), 0.0)));
      slots.insert(slots.end(), velocity.begin(), velocity.end());
      Vec f(n);
      for (int i = 0; i < n; ++i) f[i] = custom_[i].value(slots);
      return f;
    }
  }
  return {};
}

}  // namespace nshift::fields
