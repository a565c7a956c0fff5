#pragma once

// Trajectories of the Newtonian system
//
//   xddot^k + Gamma^k_ij xdot^i xdot^j = F^k(x, xdot)
//
// by fixed-step classical Runge-Kutta on the first-order system (x, xdot).

#include <iosfwd>
#include <string>
#include <vector>

#include "nshift/fields.hpp"
#include "nshift/geometry.hpp"
#include "nshift/linalg.hpp"

namespace nshift::dynamics {

struct State {
  double t = 0.0;
  Vec x;
  Vec xdot;
};

struct Trajectory {
  double dt = 0.0;
  std::vector<State> states;  // states[k].t == t0 + k * dt
  bool complete = true;       // false when the speed collapsed mid-run
  std::string diagnostic;
};

double speed(const geometry::MetricSpec& m, const State& s);

// Number of steps taken for a duration T: the smallest k with k * dt >= T
// (up to a relative slack of 1e-9), so the final time is within dt of T.
long step_count(double T, double dt);

// Integrates from s0 over [s0.t, s0.t + T]. The metric m supplies the
// Christoffel symbols (re-evaluated at every stage) and the inner product used
// by the force. Speed collapse below kMinSpeed stops the run and returns the
// partial trajectory; a force or metric evaluation error throws
// NumericalFailure carrying the time and state.
Trajectory integrate(const fields::ForceField& f, const geometry::MetricSpec& m, const State& s0,
                     double T, double dt);

// Right-hand side of the first-order system: (xdot, F - Gamma(xdot, xdot)).
void acceleration(const fields::ForceField& f, const geometry::MetricSpec& m,
                  std::span<const double> x, std::span<const double> xdot, Vec& out);

// Columns t, x1..xn, xdot1..xdotn, speed; 17 significant digits.
void write_csv(std::ostream& out, const Trajectory& traj, const geometry::MetricSpec& m);

}  // namespace nshift::dynamics
