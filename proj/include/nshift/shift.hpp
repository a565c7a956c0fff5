#pragma once

// The normal shift of a hypersurface: the launch-speed function nu on S, the
// family of shifted surfaces S_t swept by trajectories leaving S along its
// normal with speed nu, and the orthogonality of S_t to those trajectories.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "nshift/dynamics.hpp"
#include "nshift/fields.hpp"
#include "nshift/geometry.hpp"
#include "nshift/pfaff.hpp"

namespace nshift::shift {

struct NuField {
  std::vector<double> values;  // per grid node, flat order of the hypersurface
  Vec base;                    // parameters of the base point u0
  double nu0 = 1.0;            // nu(u0)
  // max |nu_staircase - nu_reverse_order| over the audited nodes
  double audit_defect = 0.0;
  std::size_t audited_nodes = 0;
  double closedness_residual = 0.0;  // max spot residual on S
};

struct NuOptions {
  // Every `audit_stride`-th node is recomputed along the staircase that visits
  // the axes in reverse order.
  std::size_t audit_stride = 37;
  double audit_tol = 1e-6;        // relative to nu; larger defects throw
  double closedness_tol = 1e-8;   // spot residual gate on b along S
};

// Integrates d nu / d u^k = sum_i b_i(x(u), nu) d x^i / d u^k from nu(u0) = nu0
// along staircase paths in the parameter domain: first along axis 1 to the
// node's u^1, then along axis 2, and so on. du is the largest RK4 step in
// parameter units. Throws DomainError when the spot closedness residual
// exceeds the gate, NumericalFailure when nu leaves (0, inf) or the audit
// defect exceeds its tolerance.
NuField solve_nu(const geometry::Hypersurface& S, const fields::ABModel& ab,
                 const geometry::MetricSpec& m, double nu0, double du,
                 const NuOptions& opt = {});

// nu == nu0 at every node (for checks against forces not built from (a, b)).
NuField constant_nu(const geometry::Hypersurface& S, double nu0);

struct ShiftLayer {
  double t = 0.0;
  std::vector<Vec> x;     // per node
  std::vector<Vec> xdot;  // per node
  std::vector<double> defect;  // per node orthogonality defect
  double max_defect = 0.0;
  double min_gram = 0.0;  // smallest Gram determinant of the S_t tangents
  bool degenerate = false;
};

struct ShiftOptions {
  int layers = 50;  // stored time layers after t = 0 (at most)
  // Order (2, 4 or 6) of the finite differences along open axes, and along
  // closed axes when spectral_closed is off.
  int fd_order = 6;
  // Differentiate closed axes through the trigonometric interpolant. Needs the
  // embedding to be periodic in the chart along those axes.
  bool spectral_closed = true;
};

struct ShiftFamily {
  std::shared_ptr<const geometry::Hypersurface> surface;
  NuField nu;
  double dt = 0.0;
  std::vector<ShiftLayer> layers;  // layers[0] is S itself
  bool partial = false;            // some trajectory failed; layers truncated
  std::vector<std::string> failures;
};

// Launches x(0) = S(u), xdot(0) = nu(u) n(u) at every node and stores the
// shifted surfaces every ceil(steps / layers) steps, plus the last step.
// Tangents of S_t for t > 0 are differences in u (see ShiftOptions); at t = 0
// they are exact.
ShiftFamily normal_shift(std::shared_ptr<const geometry::Hypersurface> S, const NuField& nu,
                         const fields::ForceField& f, const geometry::MetricSpec& m,
                         double t_max, double dt, const ShiftOptions& opt = {});

// Per-layer maximum of |g(xdot, tau_k)| / (|xdot|_g |tau_k|_g). Throws
// DomainError when a layer has a degenerate tangent frame.
std::vector<double> orthogonality_defect(const ShiftFamily& family);

// |nu_end - nu_start| after continuing nu = V once around a loop whose end is
// the deck image of its start under `closing` (the empty word for loops that
// close in the chart).
double loop_closure_defect(const pfaff::PathSpec& loop, const fields::ABModel& ab, double nu0,
                           double du, const geometry::CoveringManifold* M = nullptr,
                           const geometry::GeneratorWord& closing = {});

// Columns u1..u(n-1) indices, t, x1..xn, xdot1..xdotn, nu, defect.
void write_csv(std::ostream& out, const ShiftFamily& family);

}  // namespace nshift::shift
