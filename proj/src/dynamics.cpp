#include "nshift/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "nshift/error.hpp"

namespace nshift::dynamics {

namespace {

std::string describe(double t, std::span<const double> x, std::span<const double> xdot) {
  std::ostringstream s;
  s.precision(17);
  s << "t=" << t << ", x=(";
  for (std::size_t i = 0; i < x.size(); ++i) s << (i ? ", " : "") << x[i];
  s << "), xdot=(";
  for (std::size_t i = 0; i < xdot.size(); ++i) s << (i ? ", " : "") << xdot[i];
  s << ")";
  return s.str();
}

void axpy(Vec& out, std::span<const double> base, double h, std::span<const double> k) {
  out.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + h * k[i];
}

}  // namespace

double speed(const geometry::MetricSpec& m, const State& s) {
  return std::sqrt(std::max(inner(m.metric_at(s.x), s.xdot, s.xdot), 0.0));
}

long step_count(double T, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(T >= 0.0)) throw InvalidArgument("duration must be non-negative");
  return static_cast<long>(std::ceil(T / dt - 1e-9));
}

void acceleration(const fields::ForceField& f, const geometry::MetricSpec& m,
                  std::span<const double> x, std::span<const double> xdot, Vec& out) {
  const auto geo = m.local(x, m.kind() != geometry::MetricSpec::Kind::Euclidean);
  out = f.evaluate(x, xdot, geo);
  if (!geo.gamma.data.empty()) {
    const Vec c = geo.gamma.contract(xdot, xdot);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= c[k];
  }
}

Trajectory integrate(const fields::ForceField& f, const geometry::MetricSpec& m, const State& s0,
                     double T, double dt) {
  const int n = m.dimension();
  if (static_cast<int>(s0.x.size()) != n || static_cast<int>(s0.xdot.size()) != n) {
    throw InvalidArgument("initial state does not match the dimension " + std::to_string(n));
  }
  if (f.dimension() != n) throw InvalidArgument("force and metric dimensions differ");
  const long steps = step_count(T, dt);
  if (!(speed(m, s0) > fields::kMinSpeed)) {
    throw InvalidArgument("initial speed is zero at " + describe(s0.t, s0.x, s0.xdot));
  }

  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.push_back(s0);

  Vec k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v, tx, tv;
  auto stage = [&](std::span<const double> x, std::span<const double> v, Vec& kx, Vec& kv,
                   double t) {
    kx.assign(v.begin(), v.end());
    try {
      acceleration(f, m, x, v, kv);
    } catch (const Error& e) {
      throw NumericalFailure("force evaluation failed at " + describe(t, x, v) + ": " + e.what());
    }
  };

  for (long k = 0; k < steps; ++k) {
    const State& s = traj.states.back();
    const double t = s0.t + static_cast<double>(k) * dt;
    stage(s.x, s.xdot, k1x, k1v, t);
    axpy(tx, s.x, 0.5 * dt, k1x);
    axpy(tv, s.xdot, 0.5 * dt, k1v);
    stage(tx, tv, k2x, k2v, t + 0.5 * dt);
    axpy(tx, s.x, 0.5 * dt, k2x);
    axpy(tv, s.xdot, 0.5 * dt, k2v);
    stage(tx, tv, k3x, k3v, t + 0.5 * dt);
    axpy(tx, s.x, dt, k3x);
    axpy(tv, s.xdot, dt, k3v);
    stage(tx, tv, k4x, k4v, t + dt);

    State next;
    next.t = s0.t + static_cast<double>(k + 1) * dt;
    next.x.resize(n);
    next.xdot.resize(n);
    for (int i = 0; i < n; ++i) {
      next.x[i] = s.x[i] + dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
      next.xdot[i] = s.xdot[i] + dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
    }
    double sp = 0.0;
    try {
      sp = speed(m, next);
    } catch (const Error& e) {
      throw NumericalFailure("metric evaluation failed at " + describe(next.t, next.x, next.xdot) +
                             ": " + e.what());
    }
    if (!(sp > fields::kMinSpeed)) {
      traj.complete = false;
      traj.diagnostic = "speed collapsed below 1e-12 at " + describe(next.t, next.x, next.xdot);
      break;
    }
    traj.states.push_back(std::move(next));
  }
  return traj;
}

void write_csv(std::ostream& out, const Trajectory& traj, const geometry::MetricSpec& m) {
  const int n = m.dimension();
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= n; ++i) out << ",xdot" << i;
  out << ",speed\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const auto& s : traj.states) {
    put(s.t);
    for (double c : s.x) out << ',', put(c);
    for (double c : s.xdot) out << ',', put(c);
    out << ',';
    put(speed(m, s));
    out << '\n';
  }
}

}  // namespace nshift::dynamics
