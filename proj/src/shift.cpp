#include "nshift/shift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "nshift/error.hpp"
#include "nshift/format.hpp"
#include "nshift/parallel.hpp"

namespace nshift::shift {

namespace {

std::string describe_index(const std::vector<int>& index) {
  std::ostringstream s;
  s << "(";
  for (std::size_t i = 0; i < index.size(); ++i) s << (i ? ", " : "") << index[i];
  s << ")";
  return s.str();
}

class NuSolver {
 public:
  NuSolver(const geometry::Hypersurface& S, const fields::ABModel& ab, double du)
      : S_(S), ab_(ab), du_(du) {}

  // nu after moving u[axis] from u[axis] to `to` with the other parameters
  // held fixed; u is updated.
  double advance(Vec& u, int axis, double to, double nu) const {
    const double from = u[axis];
    if (from == to) return nu;
    const long steps = std::max(1L, static_cast<long>(std::ceil(std::abs(to - from) / du_ - 1e-9)));
    const double h = (to - from) / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
      const double s = from + static_cast<double>(k) * h;
      const double k1 = rhs(u, axis, s, nu);
      const double k2 = rhs(u, axis, s + 0.5 * h, nu + 0.5 * h * k1);
      const double k3 = rhs(u, axis, s + 0.5 * h, nu + 0.5 * h * k2);
      const double k4 = rhs(u, axis, s + h, nu + h * k3);
      nu += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!(nu > 0.0) || !std::isfinite(nu)) {
        u[axis] = s + h;
        std::ostringstream msg;
        msg.precision(17);
        msg << "nu left (0, inf) at u=(";
        for (std::size_t i = 0; i < u.size(); ++i) msg << (i ? ", " : "") << u[i];
        msg << "), nu=" << nu;
        throw NumericalFailure(msg.str());
      }
    }
    u[axis] = to;
    return nu;
  }

  // nu at u_target along the staircase visiting axes in `order`.
  double staircase(const Vec& base, const Vec& target, const std::vector<int>& order,
                   double nu0) const {
    Vec u = base;
    double nu = nu0;
    for (int axis : order) nu = advance(u, axis, target[axis], nu);
    return nu;
  }

 private:
  double rhs(Vec& u, int axis, double s, double nu) const {
    u[axis] = s;
    S_.embed_with_tangents(u, x_, tangents_);
    try {
      ab_.eval(x_, nu, 0, jet_);
    } catch (const Error& e) {
      throw NumericalFailure(std::string("b evaluation failed on the surface: ") + e.what());
    }
    double out = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) out += jet_.b[i].value() * tangents_[axis][i];
    return out;
  }

  const geometry::Hypersurface& S_;
  const fields::ABModel& ab_;
  double du_;
  mutable Vec x_;
  mutable std::vector<Vec> tangents_;
  mutable fields::ABJet jet_;
};

}  // namespace

NuField solve_nu(const geometry::Hypersurface& S, const fields::ABModel& ab,
                 const geometry::MetricSpec& m, double nu0, double du, const NuOptions& opt) {
  if (!(nu0 > 0.0)) throw InvalidArgument("nu0 must be positive");
  if (!(du > 0.0)) throw InvalidArgument("du must be positive");
  if (ab.dimension() != S.dimension() || m.dimension() != S.dimension()) {
    throw InvalidArgument("surface, field and metric dimensions differ");
  }
  const int axes = S.parameter_count();
  const NuSolver solver(S, ab, du);

  NuField field;
  field.base = S.base();
  field.nu0 = nu0;
  field.values.assign(S.node_count(), 0.0);

  // Sweep axis by axis: move along `axis` from the base value through every
  // node value in both directions, then recurse into the next axis.
  std::vector<int> index(axes, 0);
  auto sweep = [&](auto&& self, int axis, const Vec& u, double nu) -> void {
    const auto& A = S.axes()[axis];
    auto visit = [&](int i, Vec& cur_u, double& cur_nu) {
      cur_nu = solver.advance(cur_u, axis, A.at(i), cur_nu);
      index[axis] = i;
      if (axis + 1 == axes) {
        field.values[S.flat_index(index)] = cur_nu;
      } else {
        self(self, axis + 1, cur_u, cur_nu);
      }
    };
    const double base = u[axis];
    {
      Vec cur_u = u;
      double cur_nu = nu;
      for (int i = 0; i < A.nodes; ++i) {
        if (A.at(i) >= base) visit(i, cur_u, cur_nu);
      }
    }
    {
      Vec cur_u = u;
      double cur_nu = nu;
      for (int i = A.nodes - 1; i >= 0; --i) {
        if (A.at(i) < base) visit(i, cur_u, cur_nu);
      }
    }
  };
  sweep(sweep, 0, S.base(), nu0);

  // Mixed-order audit and closedness spot check on a subsample of nodes.
  std::vector<int> reverse_order(axes);
  for (int a = 0; a < axes; ++a) reverse_order[a] = axes - 1 - a;
  const std::size_t stride = std::max<std::size_t>(1, opt.audit_stride);
  for (std::size_t k = 0; k < S.node_count(); k += stride) {
    const Vec u = S.node_parameters(k);
    const double nu = field.values[k];
    if (axes > 1) {
      const double other = solver.staircase(S.base(), u, reverse_order, nu0);
      field.audit_defect = std::max(field.audit_defect, std::abs(other - nu) / nu);
      ++field.audited_nodes;
    }
    const Matrix r = fields::closedness_residual(ab, S.embed(u), nu);
    for (int i = 0; i < S.dimension(); ++i) {
      for (int j = 0; j < S.dimension(); ++j) {
        field.closedness_residual = std::max(field.closedness_residual, std::abs(r(i, j)));
      }
    }
  }
  if (field.closedness_residual > opt.closedness_tol) {
    throw DomainError("b is not closed along the surface: residual " +
                      format_double(field.closedness_residual));
  }
  if (field.audit_defect > opt.audit_tol) {
    throw NumericalFailure("nu depends on the staircase order: relative defect " +
                           format_double(field.audit_defect));
  }
  return field;
}

NuField constant_nu(const geometry::Hypersurface& S, double nu0) {
  if (!(nu0 > 0.0)) throw InvalidArgument("nu0 must be positive");
  NuField field;
  field.base = S.base();
  field.nu0 = nu0;
  field.values.assign(S.node_count(), nu0);
  return field;
}

namespace {

// Weights of the derivative at `at` of the polynomial interpolating unit-spaced
// nodes first..first+count-1.
std::vector<double> lagrange_derivative_weights(int first, int count, int at) {
  std::vector<double> w(count, 0.0);
  for (int j = 0; j < count; ++j) {
    const int nj = first + j;
    double dl = 0.0;
    if (nj == at) {
      for (int i = 0; i < count; ++i) {
        if (first + i != at) dl += 1.0 / (at - (first + i));
      }
    } else {
      dl = 1.0 / (nj - at);
      for (int i = 0; i < count; ++i) {
        const int ni = first + i;
        if (ni != nj && ni != at) dl *= static_cast<double>(at - ni) / (nj - ni);
      }
    }
    w[j] = dl;
  }
  return w;
}

// d p / d u along `axis` at node `index` from the positions of one layer.
// Closed axes use trigonometric interpolation when `spectral` is set, else a
// periodic centered stencil; open axes use the interpolating polynomial on the
// `order` + 1 nearest nodes (centered where possible, one-sided at the ends).
Vec fd_tangent(const geometry::Hypersurface& S, const std::vector<Vec>& pos,
               std::vector<int> index, int axis, int order, bool spectral) {
  const auto& A = S.axes()[axis];
  const int N = A.nodes;
  if (N < 2) throw InvalidArgument("finite-difference tangents need >= 2 nodes per axis");
  const int i = index[axis];
  const double h = A.spacing();
  const std::size_t n = pos.front().size();
  Vec out(n, 0.0);
  auto add = [&](int j, double c) {
    if (A.closed) j = ((j % N) + N) % N;
    index[axis] = j;
    const Vec& p = pos[S.flat_index(index)];
    for (std::size_t d = 0; d < n; ++d) out[d] += c * p[d];
  };
  if (A.closed && spectral && N >= 3) {
    // Derivative of the trigonometric interpolant on N equispaced nodes.
    const double theta = 2.0 * M_PI / N;
    const double scale = theta / h;
    for (int k = 1; k < N; ++k) {
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      const double c = (N % 2 == 0) ? 0.5 * sign / std::tan(0.5 * k * theta)
                                    : 0.5 * sign / std::sin(0.5 * k * theta);
      add(i + k, c * scale);
    }
    return out;
  }
  const int count = std::min(order + 1, A.closed ? N - (N % 2 == 0 ? 1 : 0) : N);
  const int half = count / 2;
  int first = i - half;
  if (!A.closed) first = std::clamp(first, 0, N - count);
  const auto w = lagrange_derivative_weights(first, count, i);
  for (int j = 0; j < count; ++j) add(first + j, w[j] / h);
  return out;
}

void measure_layer(const geometry::Hypersurface& S, const geometry::MetricSpec& m,
                   ShiftLayer& layer, const std::vector<std::vector<Vec>>* exact_tangents,
                   int fd_order, bool spectral) {
  const std::size_t count = layer.x.size();
  const int axes = S.parameter_count();
  layer.defect.assign(count, 0.0);
  layer.max_defect = 0.0;
  layer.min_gram = std::numeric_limits<double>::infinity();
  layer.degenerate = false;
  for (std::size_t k = 0; k < count; ++k) {
    const Matrix g = m.metric_at(layer.x[k]);
    std::vector<Vec> tangents;
    if (exact_tangents) {
      tangents = (*exact_tangents)[k];
    } else {
      const auto index = S.node_index(k);
      for (int a = 0; a < axes; ++a) tangents.push_back(fd_tangent(S, layer.x, index, a, fd_order, spectral));
    }
    const double gram = geometry::gram_determinant(g, tangents);
    layer.min_gram = std::min(layer.min_gram, gram);
    if (!(gram > 1e-10)) layer.degenerate = true;
    const Vec& v = layer.xdot[k];
    const double vn = std::sqrt(std::max(inner(g, v, v), 0.0));
    double worst = 0.0;
    for (const Vec& tau : tangents) {
      const double tn = std::sqrt(std::max(inner(g, tau, tau), 0.0));
      if (vn > 0.0 && tn > 0.0) worst = std::max(worst, std::abs(inner(g, v, tau)) / (vn * tn));
    }
    layer.defect[k] = worst;
    layer.max_defect = std::max(layer.max_defect, worst);
  }
}

}  // namespace

ShiftFamily normal_shift(std::shared_ptr<const geometry::Hypersurface> S, const NuField& nu,
                         const fields::ForceField& f, const geometry::MetricSpec& m,
                         double t_max, double dt, const ShiftOptions& opt) {
  if (!S) throw InvalidArgument("normal shift needs a surface");
  if (opt.fd_order != 2 && opt.fd_order != 4 && opt.fd_order != 6) {
    throw InvalidArgument("fd_order must be 2, 4 or 6");
  }
  const std::size_t count = S->node_count();
  if (nu.values.size() != count) throw InvalidArgument("nu field does not match the surface grid");
  const long steps = dynamics::step_count(t_max, dt);
  const long stride = std::max(1L, (steps + std::max(opt.layers, 1) - 1) / std::max(opt.layers, 1));
  std::vector<long> stored;
  for (long k = 0; k <= steps; k += stride) stored.push_back(k);
  if (stored.back() != steps) stored.push_back(steps);

  const auto frames = geometry::surface_frames(*S, m);

  // positions[layer][node], velocities likewise; reached[node] = stored layers reached.
  std::vector<std::vector<Vec>> xs(stored.size(), std::vector<Vec>(count));
  std::vector<std::vector<Vec>> vs(stored.size(), std::vector<Vec>(count));
  std::vector<std::size_t> reached(count, 0);
  std::vector<std::string> failure(count);

  parallel_for(count, [&](std::size_t k) {
    dynamics::State s0;
    s0.x = frames[k].x;
    s0.xdot = frames[k].normal;
    for (auto& c : s0.xdot) c *= nu.values[k];
    dynamics::Trajectory traj;
    try {
      traj = dynamics::integrate(f, m, s0, t_max, dt);
    } catch (const Error& e) {
      failure[k] = e.what();
      traj.states = {s0};
    }
    if (!traj.complete) failure[k] = traj.diagnostic;
    std::size_t layer = 0;
    for (; layer < stored.size(); ++layer) {
      const auto step = static_cast<std::size_t>(stored[layer]);
      if (step >= traj.states.size()) break;
      xs[layer][k] = traj.states[step].x;
      vs[layer][k] = traj.states[step].xdot;
    }
    reached[k] = layer;
  });

  ShiftFamily fam;
  fam.surface = S;
  fam.nu = nu;
  fam.dt = dt;
  std::size_t usable = stored.size();
  for (std::size_t k = 0; k < count; ++k) {
    usable = std::min(usable, reached[k]);
    if (!failure[k].empty()) {
      fam.partial = true;
      fam.failures.push_back("node " + describe_index(S->node_index(k)) + ": " + failure[k]);
    }
  }
  if (reached.empty()) usable = 0;

  std::vector<std::vector<Vec>> exact(count);
  for (std::size_t k = 0; k < count; ++k) exact[k] = frames[k].tangents;

  fam.layers.resize(usable);
  for (std::size_t layer = 0; layer < usable; ++layer) {
    ShiftLayer& L = fam.layers[layer];
    L.t = static_cast<double>(stored[layer]) * dt;
    L.x = std::move(xs[layer]);
    L.xdot = std::move(vs[layer]);
    measure_layer(*S, m, L, layer == 0 ? &exact : nullptr, opt.fd_order, opt.spectral_closed);
  }
  return fam;
}

std::vector<double> orthogonality_defect(const ShiftFamily& family) {
  std::vector<double> out;
  out.reserve(family.layers.size());
  for (const auto& L : family.layers) {
    if (L.degenerate) {
      throw DomainError("degenerate tangent frame of the shifted surface at t=" +
                        format_double(L.t) + " (Gram determinant " + format_double(L.min_gram) +
                        ")");
    }
    out.push_back(L.max_defect);
  }
  return out;
}

double loop_closure_defect(const pfaff::PathSpec& loop, const fields::ABModel& ab, double nu0,
                           double du, const geometry::CoveringManifold* M,
                           const geometry::GeneratorWord& closing) {
  const Vec start = loop.start();
  const Vec expected = M ? M->deck_apply(closing, start) : start;
  if (!pfaff::same_point(loop.end(), expected, 1e-9)) {
    throw InvalidArgument("the loop does not close up to the given deck transformation");
  }
  return std::abs(pfaff::continue_V(ab, loop, nu0, du).end_value() - nu0);
}

void write_csv(std::ostream& out, const ShiftFamily& family) {
  const auto& S = *family.surface;
  const int n = S.dimension();
  for (int a = 1; a < n; ++a) out << "u" << a << "_index,";
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= n; ++i) out << ",xdot" << i;
  out << ",nu,defect\n";
  for (const auto& L : family.layers) {
    for (std::size_t k = 0; k < L.x.size(); ++k) {
      for (int idx : S.node_index(k)) out << idx << ',';
      out << format_double(L.t);
      for (double c : L.x[k]) out << ',' << format_double(c);
      for (double c : L.xdot[k]) out << ',' << format_double(c);
      out << ',' << format_double(family.nu.values[k]) << ',' << format_double(L.defect[k])
          << '\n';
    }
  }
}

}  // namespace nshift::shift
