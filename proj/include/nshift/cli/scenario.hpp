#pragma once

// Typed, validated view of a scenario file.
//
//   [manifold]  dimension, metric ("euclidean" | "conformal" | "explicit"),
//               conformal (lambda), entries (n*n), periods (deck translations)
//   [field]     kind ("hw" | "ab" | "custom"), W, h, a, b, force
//   [surface]   embedding, ranges, grid, closed, base, orientation, nu0, nu
//   [run]       command parameters (steps, grids, paths, words, tolerances)
//
// Numeric entries accept numbers or constant expressions such as "2*pi".

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nshift/cli/config.hpp"
#include "nshift/expr.hpp"
#include "nshift/fields.hpp"
#include "nshift/geometry.hpp"
#include "nshift/pfaff.hpp"

namespace nshift::cli {

struct RunParams {
  std::optional<double> t_max, dt, du, tol;
  std::uint64_t seed = 1;
  double w0 = 1.0;
  std::vector<double> w_grid, v_grid;
  std::vector<Vec> x_grid;
  std::optional<pfaff::PathSpec> path, path2;
  std::vector<std::string> words;
  Vec p0;
  Vec x0, xdot0;
  std::vector<Vec> check_points;
  std::optional<expr::FieldExpr> rho;
  double rho_lo = 0.0, rho_hi = 0.0;
  std::string rho_word;
  std::optional<expr::FieldExpr> f;
  std::optional<double> fnorm_bound;
  int samples = 20;
  Vec x_lo, x_hi;
  double v_lo = 0.5, v_hi = 2.0;
  int layers = 50;
  int fd_order = 6;
  bool spectral = true;
  int loop_axis = -1;  // shift: also report the closure defect around this closed axis
  std::string loop_word;
};

struct Scenario {
  std::string file;
  int dimension = 0;
  geometry::MetricSpec metric;
  std::vector<Vec> periods;

  enum class FieldKind { HW, AB, Custom };
  FieldKind field_kind = FieldKind::HW;
  std::optional<expr::FieldExpr> W_expr;
  std::shared_ptr<const fields::HWModel> hw;  // HW kind only
  std::shared_ptr<const fields::ABModel> ab;  // HW (derived) and AB kinds
  fields::ForceField force;

  std::shared_ptr<const geometry::Hypersurface> surface;
  double nu0 = 1.0;
  bool solve_nu = true;

  RunParams run;

  geometry::CoveringManifold covering() const;
};

// Throws ConfigError naming the file position and field path.
Scenario load_scenario(const Config& config);

}  // namespace nshift::cli
