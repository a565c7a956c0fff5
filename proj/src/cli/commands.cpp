#include "nshift/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "nshift/dynamics.hpp"
#include "nshift/error.hpp"
#include "nshift/format.hpp"
#include "nshift/pfaff.hpp"
#include "nshift/shift.hpp"

namespace nshift::cli {

namespace fs = std::filesystem;

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"check",  "trajectory", "shift", "pfaff",
                                                 "fnorm",  "monodromy",  "gauge", "extract-h"};
  return names;
}

void Report::metric(const std::string& name, double value, double threshold) {
  const bool pass = value <= threshold;
  passed_ = passed_ && pass;
  lines_.push_back("METRIC " + name + " " + format_double(value) + " " + format_double(threshold) +
                   (pass ? " PASS" : " FAIL"));
}

void Report::info(const std::string& name, const std::string& value) {
  lines_.push_back("INFO " + name + " " + value);
}

void Report::info(const std::string& name, double value) { info(name, format_double(value)); }

namespace {

std::string point_text(std::span<const double> x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + format_double(x[i]);
  return s + ")";
}

std::ofstream open_csv(const std::string& dir, const std::string& name) {
  std::ofstream out(fs::path(dir) / name, std::ios::binary);
  if (!out) throw Error("cannot write " + (fs::path(dir) / name).string());
  return out;
}

// Bit-reproducible uniform and normal variates from a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 gen_;
};

double pick(const std::optional<double>& over, const std::optional<double>& cfg, double fallback) {
  if (over) return *over;
  if (cfg) return *cfg;
  return fallback;
}

const fields::ABModel& need_ab(const Scenario& sc, const std::string& command) {
  if (!sc.ab) {
    throw ConfigError(sc.file + ": command '" + command +
                      "' needs (a, b) data: field.kind \"hw\" or \"ab\" (or b for custom forces)");
  }
  return *sc.ab;
}

std::vector<Vec> x_points(const Scenario& sc, double lo, double hi, int count) {
  if (!sc.run.x_grid.empty()) return sc.run.x_grid;
  const int n = sc.dimension;
  std::vector<Vec> out;
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(count);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Vec x(n);
    std::size_t rem = flat;
    for (int i = n; i-- > 0;) {
      const auto k = static_cast<double>(rem % static_cast<std::size_t>(count));
      rem /= static_cast<std::size_t>(count);
      x[i] = lo + (hi - lo) * k / (count - 1);
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<double> grid_or(const std::vector<double>& grid, double lo, double hi, int count) {
  return grid.empty() ? pfaff::log_grid(lo, hi, count) : grid;
}

// ---------------------------------------------------------------------------

Report cmd_check(const Scenario& sc, const Overrides& ov, const std::string& dir) {
  const auto& ab = need_ab(sc, "check");
  const double tol = pick(ov.tol, sc.run.tol, 1e-10);
  const auto xs = x_points(sc, -1.0, 1.0, 10);
  const auto vs = grid_or(sc.run.v_grid, 0.5, 2.0, 10);
  const int n = sc.dimension;
  const bool collinear = sc.W_expr.has_value();

  auto csv = open_csv(dir, "check.csv");
  for (int i = 1; i <= n; ++i) csv << "x" << i << ",";
  csv << "v,closedness,normalizing" << (collinear ? ",collinearity" : "") << "\n";

  double worst_c = 0.0, worst_r = 0.0, worst_l = 0.0;
  Vec at_c = xs.front(), at_r = xs.front(), at_l = xs.front();
  double v_c = vs.front(), v_r = vs.front(), v_l = vs.front();
  for (const Vec& x : xs) {
    for (double v : vs) {
      const Matrix c = fields::closedness_residual(ab, x, v);
      const Vec r = fields::normalizing_residual(ab, x, v);
      double cmax = 0.0, rmax = 0.0;
      for (int i = 0; i < n; ++i) {
        rmax = std::max(rmax, std::abs(r[i]));
        for (int j = 0; j < n; ++j) cmax = std::max(cmax, std::abs(c(i, j)));
      }
      double lmax = 0.0;
      if (collinear) lmax = fields::collinearity_defect(ab, *sc.W_expr, x, v);
      if (cmax > worst_c) worst_c = cmax, at_c = x, v_c = v;
      if (rmax > worst_r) worst_r = rmax, at_r = x, v_r = v;
      if (lmax > worst_l) worst_l = lmax, at_l = x, v_l = v;
      for (double xi : x) csv << format_double(xi) << ",";
      csv << format_double(v) << "," << format_double(cmax) << "," << format_double(rmax);
      if (collinear) csv << "," << format_double(lmax);
      csv << "\n";
    }
  }
  Report rep;
  rep.info("grid_points", static_cast<double>(xs.size() * vs.size()));
  rep.metric("closedness_residual_max", worst_c, tol);
  rep.info("closedness_residual_argmax", point_text(at_c) + " v=" + format_double(v_c));
  rep.metric("normalizing_residual_max", worst_r, tol);
  rep.info("normalizing_residual_argmax", point_text(at_r) + " v=" + format_double(v_r));
  if (collinear) {
    rep.metric("collinearity_defect_max", worst_l, tol);
    rep.info("collinearity_defect_argmax", point_text(at_l) + " v=" + format_double(v_l));
  }
  return rep;
}

Report cmd_trajectory(const Scenario& sc, const Overrides& ov, const std::string& dir) {
  if (sc.run.x0.empty() || sc.run.xdot0.empty()) {
    throw ConfigError(sc.file + ": run.x0 and run.xdot0 are required for 'trajectory'");
  }
  const double dt = pick(ov.dt, sc.run.dt, 1e-3);
  const double T = sc.run.t_max.value_or(1.0);
  dynamics::State s0{0.0, sc.run.x0, sc.run.xdot0};
  const auto traj = dynamics::integrate(sc.force, sc.metric, s0, T, dt);
  auto csv = open_csv(dir, "trajectory.csv");
  dynamics::write_csv(csv, traj, sc.metric);

  Report rep;
  const auto& last = traj.states.back();
  rep.info("steps", static_cast<double>(traj.states.size() - 1));
  rep.info("final_t", last.t);
  rep.info("final_x", point_text(last.x));
  rep.info("final_speed", dynamics::speed(sc.metric, last));
  if (!traj.complete) rep.info("diagnostic", traj.diagnostic);
  rep.metric("trajectory_incomplete", traj.complete ? 0.0 : 1.0, 0.0);
  return rep;
}

Report cmd_shift(const Scenario& sc, const Overrides& ov, const std::string& dir) {
  if (!sc.surface) throw ConfigError(sc.file + ": command 'shift' needs a [surface] section");
  const double tol = pick(ov.tol, sc.run.tol, 1e-5);
  const double dt = pick(ov.dt, sc.run.dt, 1e-3);
  const double du = pick(ov.du, sc.run.du, 1e-3);
  const double T = sc.run.t_max.value_or(0.5);

  Report rep;
  shift::NuField nu;
  if (sc.solve_nu && sc.ab) {
    nu = shift::solve_nu(*sc.surface, *sc.ab, sc.metric, sc.nu0, du);
    rep.info("nu_audit_defect", nu.audit_defect);
    rep.info("nu_closedness_residual", nu.closedness_residual);
  } else {
    nu = shift::constant_nu(*sc.surface, sc.nu0);
    rep.info("nu", "constant");
  }
  const auto [lo, hi] = std::minmax_element(nu.values.begin(), nu.values.end());
  rep.info("nu_min", *lo);
  rep.info("nu_max", *hi);

  if (sc.run.loop_axis >= 0) {
    if (!sc.ab) throw ConfigError(sc.file + ": run.loop_axis needs (a, b) data");
    const auto& axis = sc.surface->axes()[sc.run.loop_axis];
    Vec u = sc.surface->base();
    u[sc.run.loop_axis] = axis.lo;
    const auto loop = pfaff::PathSpec::on_surface(sc.surface, sc.run.loop_axis, u, axis.hi - axis.lo);
    const auto M = sc.covering();
    const double d = shift::loop_closure_defect(loop, *sc.ab, sc.nu0, du, &M,
                                                geometry::parse_word(sc.run.loop_word));
    rep.info("loop_closure_defect", d);
  }

  shift::ShiftOptions opt;
  opt.layers = sc.run.layers;
  opt.fd_order = sc.run.fd_order;
  opt.spectral_closed = sc.run.spectral;
  const auto fam = shift::normal_shift(sc.surface, nu, sc.force, sc.metric, T, dt, opt);
  {
    auto csv = open_csv(dir, "shift.csv");
    shift::write_csv(csv, fam);
  }
  auto layers = open_csv(dir, "shift_layers.csv");
  layers << "t,max_defect,min_gram\n";
  double worst = 0.0;
  for (const auto& L : fam.layers) {
    layers << format_double(L.t) << "," << format_double(L.max_defect) << ","
           << format_double(L.min_gram) << "\n";
    if (L.t > 0.0) worst = std::max(worst, L.max_defect);
    if (L.degenerate) rep.info("degenerate_layer", L.t);
  }
  for (const auto& f : fam.failures) rep.info("failure", f);
  rep.info("layers", static_cast<double>(fam.layers.size()));
  rep.metric("initial_defect", fam.layers.front().max_defect, 1e-10);
  if (fam.layers.size() > 1) rep.metric("orthogonality_defect_max", worst, tol);
  rep.metric("trajectory_failures", static_cast<double>(fam.failures.size()), 0.0);
  return rep;
}

Report cmd_pfaff(const Scenario& sc, const Overrides& ov, const std::string& dir) {
  const auto& ab = need_ab(sc, "pfaff");
  if (!sc.run.path) throw ConfigError(sc.file + ": run.path is required for 'pfaff'");
  const double dt = pick(ov.dt, sc.run.dt, 1e-3);
  const int n = sc.dimension;
  Report rep;
  const auto c1 = pfaff::continue_V(ab, *sc.run.path, sc.run.w0, dt);
  {
    auto csv = open_csv(dir, "trace.csv");
    pfaff::write_trace_csv(csv, c1, n);
  }
  rep.info("w0", sc.run.w0);
  rep.info("V_end", c1.end_value());
  rep.info("V_w_end", c1.end_Vw());
  double min_vw = c1.samples.front().Vw;
  for (const auto& s : c1.samples) min_vw = std::min(min_vw, s.Vw);
  rep.info("V_w_min", min_vw);
  if (sc.run.path2) {
    const auto c2 = pfaff::continue_V(ab, *sc.run.path2, sc.run.w0, dt);
    auto csv = open_csv(dir, "trace2.csv");
    pfaff::write_trace_csv(csv, c2, n);
    if (!pfaff::same_point(sc.run.path->start(), sc.run.path2->start()) ||
        !pfaff::same_point(sc.run.path->end(), sc.run.path2->end())) {
      throw ConfigError(sc.file + ": run.path and run.path2 must share their endpoints");
    }
    rep.info("V2_end", c2.end_value());
    rep.metric("path_independence_defect", std::abs(c1.end_value() - c2.end_value()),
               pick(ov.tol, sc.run.tol, 1e-8));
  }
  return rep;
}

Report cmd_fnorm(const Scenario& sc, const Overrides&, const std::string& dir) {
  const auto& ab = need_ab(sc, "fnorm");
  if (!sc.run.f) throw ConfigError(sc.file + ": run.f is required for 'fnorm'");
  const pfaff::AdmissibleF f(*sc.run.f);
  const auto xs = sc.run.x_grid.empty() ? std::vector<Vec>{sc.run.p0} : sc.run.x_grid;
  const auto vs = grid_or(sc.run.v_grid, 1e-3, 1e3, 13);
  const auto est = pfaff::f_norm_estimate(ab, f, sc.metric, xs, vs);
  auto csv = open_csv(dir, "fnorm.csv");
  csv << "v,ratio_max\n";
  for (std::size_t k = 0; k < vs.size(); ++k) {
    csv << format_double(vs[k]) << "," << format_double(est.per_v[k]) << "\n";
  }
  Report rep;
  rep.info("f_norm_lower_bound", est.value);
  rep.info("argmax", point_text(est.x) + " v=" + format_double(est.v));
  rep.info("divergence_suspected", est.divergence_suspected ? "1" : "0");
  if (sc.run.fnorm_bound) rep.metric("f_norm", est.value, *sc.run.fnorm_bound);
  return rep;
}

Report cmd_monodromy(const Scenario& sc, const Overrides& ov, const std::string& dir) {
  const auto& ab = need_ab(sc, "monodromy");
  if (sc.periods.empty()) throw ConfigError(sc.file + ": manifold.periods is required for 'monodromy'");
  const auto M = sc.covering();
  const auto ws = grid_or(sc.run.w_grid, 0.1, 10.0, 10);
  const auto words = sc.run.words.empty() ? std::vector<std::string>{"g1"} : sc.run.words;
  pfaff::MonodromyOptions opt;
  opt.inverse.dt = pick(ov.dt, sc.run.dt, 1e-3);
  const double tol = pick(ov.tol, sc.run.tol, 1e-6);
  Report rep;
  for (std::size_t k = 0; k < words.size(); ++k) {
    const auto word = geometry::parse_word(words[k]);
    const auto map = pfaff::monodromy(ab, M, word, sc.run.p0, ws, opt);
    auto csv = open_csv(dir, "monodromy_" + std::to_string(k + 1) + ".csv");
    pfaff::write_monodromy_csv(csv, map);
    const std::string tag = "monodromy_" + std::to_string(k + 1);
    rep.info(tag + ".word", word.empty() ? "e" : geometry::format_word(word));
    rep.info(tag + ".ratio_first", map.table->rho().front() / ws.front());
    rep.info(tag + ".ratio_last", map.table->rho().back() / ws.back());
    rep.info(tag + ".trivial", map.is_identity() ? "1" : "0");
    rep.metric(tag + ".cross_check_defect", map.cross_check_defect, tol);
  }
  return rep;
}

Report cmd_gauge(const Scenario& sc, const Overrides& ov, const std::string& dir) {
  if (!sc.hw) throw ConfigError(sc.file + ": command 'gauge' needs field.kind \"hw\"");
  std::shared_ptr<const pfaff::MonotoneMap> rho;
  if (sc.run.rho) {
    rho = std::make_shared<pfaff::ClosedFormMap>(*sc.run.rho, sc.run.rho_lo, sc.run.rho_hi);
  } else if (!sc.run.rho_word.empty()) {
    const auto M = sc.covering();
    pfaff::MonodromyOptions opt;
    opt.inverse.dt = pick(ov.dt, sc.run.dt, 1e-3);
    rho = pfaff::monodromy(*sc.ab, M, geometry::parse_word(sc.run.rho_word), sc.run.p0,
                           grid_or(sc.run.w_grid, 0.1, 10.0, 10), opt)
              .table;
  } else {
    throw ConfigError(sc.file + ": 'gauge' needs run.rho (with run.rho_domain) or run.rho_word");
  }
  const auto gauged = pfaff::gauge_transform(sc.hw, rho);
  const int n = sc.dimension;
  const Vec lo = sc.run.x_lo.empty() ? Vec(n, -1.0) : sc.run.x_lo;
  const Vec hi = sc.run.x_hi.empty() ? Vec(n, 1.0) : sc.run.x_hi;

  Rng rng(sc.run.seed);
  auto csv = open_csv(dir, "gauge.csv");
  csv << "sample";
  for (int i = 1; i <= n; ++i) csv << ",x" << i;
  for (int i = 1; i <= n; ++i) csv << ",xdot" << i;
  csv << ",discrepancy\n";
  double worst = 0.0;
  for (int s = 0; s < sc.run.samples; ++s) {
    Vec x(n), xdot(n);
    bool found = false;
    for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(lo[i], hi[i]);
      double norm2 = 0.0;
      for (int i = 0; i < n; ++i) {
        xdot[i] = rng.normal();
        norm2 += xdot[i] * xdot[i];
      }
      const double speed = rng.uniform(sc.run.v_lo, sc.run.v_hi);
      const Matrix g = sc.metric.metric_at(x);
      const double gnorm = std::sqrt(inner(g, xdot, xdot));
      if (!(norm2 > 0.0) || !(gnorm > 0.0)) continue;
      for (auto& c : xdot) c *= speed / gnorm;
      expr::DenseJet W;
      sc.hw->W(x, speed, 0, W);
      found = W.value() >= rho->domain_lo() && W.value() <= rho->domain_hi();
    }
    if (!found) throw Error("no sampled state has W inside the domain of rho");
    const Vec f0 = fields::force_hw(*sc.hw, sc.metric, x, xdot);
    const Vec f1 = fields::force_hw(*gauged, sc.metric, x, xdot);
    double d = 0.0;
    for (int i = 0; i < n; ++i) d = std::max(d, std::abs(f0[i] - f1[i]));
    worst = std::max(worst, d);
    csv << s;
    for (double c : x) csv << "," << format_double(c);
    for (double c : xdot) csv << "," << format_double(c);
    csv << "," << format_double(d) << "\n";
  }
  Report rep;
  rep.info("samples", static_cast<double>(sc.run.samples));
  rep.metric("gauge_force_discrepancy", worst, pick(ov.tol, sc.run.tol, 1e-9));
  return rep;
}

Report cmd_extract_h(const Scenario& sc, const Overrides& ov, const std::string& dir) {
  const auto& ab = need_ab(sc, "extract-h");
  pfaff::ExtractOptions opt;
  opt.inverse.dt = pick(ov.dt, sc.run.dt, 1e-3);
  opt.check_points = sc.run.check_points;
  std::vector<double> vs = sc.run.v_grid;
  if (vs.empty()) {
    for (int k = 0; k < 20; ++k) vs.push_back(0.5 + 1.5 * k / 19.0);
  }
  const auto table = pfaff::extract_h(ab, sc.run.p0, vs, opt);
  auto csv = open_csv(dir, "h.csv");
  pfaff::write_h_csv(csv, table);
  Report rep;
  rep.info("residual_max", table.max_residual);
  if (sc.hw) {
    double err = 0.0;
    for (std::size_t k = 0; k < table.v.size(); ++k) {
      expr::DenseJet h;
      sc.hw->h(table.v[k], 0, h);
      err = std::max(err, std::abs(h.value() - table.h[k]));
    }
    rep.info("h_difference_from_field", err);
  }
  if (!opt.check_points.empty()) {
    rep.info("defect_argmax", point_text(table.defect_point) + " v=" + format_double(table.defect_v));
    rep.metric("level_consistency_defect", table.max_defect, pick(ov.tol, sc.run.tol, 1e-7));
  }
  return rep;
}

std::string usage() {
  std::string s = "usage: normalshift <command> --config <file> --out <dir> [--dt X] [--du X] [--tol X]\n"
                  "commands:";
  for (const auto& c : command_names()) s += " " + c;
  return s + "\n";
}

}  // namespace

Report run_command(const std::string& command, const Scenario& sc, const Overrides& ov,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  if (command == "check") return cmd_check(sc, ov, out_dir);
  if (command == "trajectory") return cmd_trajectory(sc, ov, out_dir);
  if (command == "shift") return cmd_shift(sc, ov, out_dir);
  if (command == "pfaff") return cmd_pfaff(sc, ov, out_dir);
  if (command == "fnorm") return cmd_fnorm(sc, ov, out_dir);
  if (command == "monodromy") return cmd_monodromy(sc, ov, out_dir);
  if (command == "gauge") return cmd_gauge(sc, ov, out_dir);
  if (command == "extract-h") return cmd_extract_h(sc, ov, out_dir);
  throw InvalidArgument("unknown command '" + command + "'");
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Normal shift verification tool", "normalshift"};
  std::string command, config_path, out_dir = ".";
  Overrides ov;
  app.add_option("command", command, "one of: check trajectory shift pfaff fnorm monodromy gauge extract-h")
      ->required();
  app.add_option("--config", config_path, "scenario file")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--dt", ov.dt, "time or continuation step");
  app.add_option("--du", ov.du, "surface continuation step");
  app.add_option("--tol", ov.tol, "threshold of the main gated metric");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << usage();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << usage();
    return 2;
  }
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    err << "error: unknown command '" << command << "'\n" << usage();
    return 2;
  }
  for (const auto& [name, v] : {std::pair{"--dt", ov.dt}, {"--du", ov.du}, {"--tol", ov.tol}}) {
    if (v && !(*v > 0.0)) {
      err << "error: " << name << " must be positive\n";
      return 2;
    }
  }

  Scenario sc;
  try {
    sc = load_scenario(Config::load(config_path));
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  Report rep;
  try {
    rep = run_command(command, sc, ov, out_dir);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "ERROR " << e.what() << "\n";
    std::ofstream report(fs::path(out_dir) / "report.txt", std::ios::binary);
    report << "COMMAND " << command << "\nERROR " << e.what() << "\n";
    return 1;
  }
  std::ofstream report(fs::path(out_dir) / "report.txt", std::ios::binary);
  report << "COMMAND " << command << "\n";
  out << "COMMAND " << command << "\n";
  for (const auto& line : rep.lines()) {
    report << line << "\n";
    out << line << "\n";
  }
  const char* verdict = rep.passed() ? "RESULT PASS\n" : "RESULT FAIL\n";
  report << verdict;
  out << verdict;
  return rep.passed() ? 0 : 1;
}

}  // namespace nshift::cli
