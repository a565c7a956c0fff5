#include "nshift/cli/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nshift/format.hpp"

namespace nshift::cli {

namespace {

class Reader {
 public:
  Reader(const Config& cfg, const std::string& section)
      : cfg_(cfg), name_(section), sec_(cfg.section(section)) {}

  bool present() const { return sec_ != nullptr; }
  bool has(const std::string& key) const { return sec_ && sec_->entries.count(key); }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const Value* v = sec_ ? find(key) : nullptr;
    std::string where = cfg_.filename();
    if (v) {
      where += ":" + std::to_string(v->line) + ":" + std::to_string(v->column);
    } else if (sec_) {
      where += ":" + std::to_string(sec_->line);
    }
    throw ConfigError(where + ": " + path(key) + ": " + msg);
  }

  const Value& require(const std::string& key) const {
    const Value* v = find(key);
    if (!v) fail(key, "missing required entry");
    return *v;
  }

  // Numbers or constant expressions.
  double number(const std::string& key, const Value& v, const std::string& where) const {
    if (v.kind == Value::Kind::Number) return v.number;
    if (v.kind == Value::Kind::String) {
      try {
        const auto e = expr::parse(v.text);
        if (!e.free_vars().empty()) {
          fail(key, where + "expression '" + v.text + "' must be constant");
        }
        return expr::Program(e, std::vector<std::string>{}).value({});
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& err) {
        fail(key, where + err.what());
      }
    }
    fail(key, where + "expected a number, got " + kind_name(v.kind));
  }

  double number(const std::string& key) const { return number(key, require(key), ""); }
  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  std::optional<double> optional_number(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
  }
  double positive(const std::string& key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v > 0.0)) fail(key, "must be positive");
    return v;
  }
  std::optional<double> optional_positive(const std::string& key) const {
    auto v = optional_number(key);
    if (v && !(*v > 0.0)) fail(key, "must be positive");
    return v;
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 1e15) fail(key, "expected an integer");
    return static_cast<long>(v);
  }

  std::string string(const std::string& key) const {
    const Value& v = require(key);
    if (v.kind != Value::Kind::String) fail(key, std::string("expected a string, got ") + kind_name(v.kind));
    return v.text;
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Value& v = require(key);
    if (v.kind != Value::Kind::Bool) fail(key, "expected true or false");
    return v.boolean;
  }

  const std::vector<Value>& array(const std::string& key) const {
    const Value& v = require(key);
    if (v.kind != Value::Kind::Array) fail(key, std::string("expected an array, got ") + kind_name(v.kind));
    return v.items;
  }

  Vec vector(const std::string& key, const Value& v, const std::string& where) const {
    if (v.kind != Value::Kind::Array) fail(key, where + "expected an array of numbers");
    Vec out;
    for (std::size_t i = 0; i < v.items.size(); ++i) {
      out.push_back(number(key, v.items[i], where + "[" + std::to_string(i) + "]: "));
    }
    return out;
  }
  Vec vector(const std::string& key) const { return vector(key, require(key), ""); }
  Vec vector(const std::string& key, std::size_t size) const {
    Vec v = vector(key);
    if (v.size() != size) {
      fail(key, "expected " + std::to_string(size) + " entries, got " + std::to_string(v.size()));
    }
    return v;
  }

  std::vector<Vec> matrix(const std::string& key, std::size_t row_size) const {
    std::vector<Vec> out;
    const auto& rows = array(key);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = "[" + std::to_string(i) + "]: ";
      Vec row = vector(key, rows[i], where);
      if (row_size && row.size() != row_size) {
        fail(key, where + "expected " + std::to_string(row_size) + " entries");
      }
      out.push_back(std::move(row));
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key) const {
    std::vector<std::string> out;
    const auto& items = array(key);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].kind != Value::Kind::String) {
        fail(key, "[" + std::to_string(i) + "]: expected a string");
      }
      out.push_back(items[i].text);
    }
    return out;
  }

  expr::FieldExpr expression(const std::string& key, const std::string& text,
                             const std::vector<std::string>& allowed,
                             const std::string& where = "") const {
    expr::FieldExpr e;
    try {
      e = expr::parse(text);
    } catch (const Error& err) {
      fail(key, where + "in '" + text + "': " + err.what());
    }
    for (const auto& var : e.free_vars()) {
      if (std::find(allowed.begin(), allowed.end(), var) == allowed.end()) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(key, where + "variable '" + var + "' in '" + text + "' is not allowed here (allowed: " +
                      list + ")");
      }
    }
    return e;
  }
  expr::FieldExpr expression(const std::string& key, const std::vector<std::string>& allowed) const {
    return expression(key, string(key), allowed);
  }
  std::vector<expr::FieldExpr> expressions(const std::string& key, std::size_t count,
                                           const std::vector<std::string>& allowed) const {
    const auto texts = strings(key);
    if (count && texts.size() != count) {
      fail(key, "expected " + std::to_string(count) + " expressions, got " +
                    std::to_string(texts.size()));
    }
    std::vector<expr::FieldExpr> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      out.push_back(expression(key, texts[i], allowed, "[" + std::to_string(i) + "]: "));
    }
    return out;
  }

  void reject_unknown(const std::set<std::string>& known) const {
    if (!sec_) return;
    for (const auto& key : sec_->order) {
      if (!known.count(key)) fail(key, "unknown entry");
    }
  }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

 private:
  const Value* find(const std::string& key) const {
    if (!sec_) return nullptr;
    auto it = sec_->entries.find(key);
    return it == sec_->entries.end() ? nullptr : &it->second;
  }

  const Config& cfg_;
  std::string name_;
  const Section* sec_;
};

// lo/hi/count or explicit values, e.g. v_values = [...] or v_range = [lo, hi]
// with v_count and v_spacing ("log" | "linear").
std::vector<double> read_grid(const Reader& r, const std::string& stem, const char* default_spacing) {
  if (r.has(stem + "_values")) {
    Vec v = r.vector(stem + "_values");
    if (v.empty()) r.fail(stem + "_values", "must not be empty");
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!(v[k] > 0.0) || (k > 0 && !(v[k] > v[k - 1]))) {
        r.fail(stem + "_values", "must be positive and strictly increasing");
      }
    }
    return v;
  }
  if (!r.has(stem + "_range")) return {};
  const Vec range = r.vector(stem + "_range", 2);
  if (!(range[0] > 0.0) || !(range[1] > range[0])) {
    r.fail(stem + "_range", "needs 0 < lo < hi");
  }
  const long count = r.integer(stem + "_count", 10);
  if (count < 2) r.fail(stem + "_count", "must be at least 2");
  const std::string spacing = r.string(stem + "_spacing", default_spacing);
  if (spacing == "log") return pfaff::log_grid(range[0], range[1], static_cast<int>(count));
  if (spacing != "linear") r.fail(stem + "_spacing", "must be \"log\" or \"linear\"");
  std::vector<double> out(count);
  for (long k = 0; k < count; ++k) {
    out[k] = range[0] + (range[1] - range[0]) * static_cast<double>(k) / static_cast<double>(count - 1);
  }
  out.back() = range[1];
  return out;
}

pfaff::PathSpec read_path(const Reader& r, const std::string& key, int n) {
  const auto& v = r.require(key);
  if (v.kind == Value::Kind::Array && !v.items.empty() && v.items[0].kind == Value::Kind::String) {
    // Parametric: components in t, range from <key>_range.
    auto comps = r.expressions(key, static_cast<std::size_t>(n), {"t"});
    const Vec range = r.vector(key + "_range", 2);
    try {
      return pfaff::PathSpec::parametric(std::move(comps), range[0], range[1]);
    } catch (const Error& e) {
      r.fail(key, e.what());
    }
  }
  const auto points = r.matrix(key, static_cast<std::size_t>(n));
  try {
    return pfaff::PathSpec::polyline(points);
  } catch (const Error& e) {
    r.fail(key, e.what());
  }
}

}  // namespace

geometry::CoveringManifold Scenario::covering() const {
  return geometry::CoveringManifold(metric, periods);
}

Scenario load_scenario(const Config& cfg) {
  Scenario sc;
  sc.file = cfg.filename();
  for (const auto& sec : cfg.sections()) {
    static const std::set<std::string> known = {"", "manifold", "field", "surface", "run"};
    if (!known.count(sec.name)) {
      throw ConfigError(cfg.filename() + ":" + std::to_string(sec.line) + ": unknown section [" +
                        sec.name + "]");
    }
  }
  Reader(cfg, "").reject_unknown({});

  // [manifold]
  const Reader man(cfg, "manifold");
  if (!man.present()) throw ConfigError(cfg.filename() + ": missing section [manifold]");
  man.reject_unknown({"dimension", "metric", "conformal", "entries", "periods"});
  const long n = man.integer("dimension", 0);
  if (n < 2 || n > 7) man.fail("dimension", "must be between 2 and 7");
  sc.dimension = static_cast<int>(n);
  const auto coords = geometry::coordinate_names(sc.dimension);
  const std::string kind = man.string("metric", "euclidean");
  try {
    if (kind == "euclidean") {
      sc.metric = geometry::MetricSpec::euclidean(sc.dimension);
    } else if (kind == "conformal") {
      sc.metric = geometry::MetricSpec::conformal(sc.dimension, man.expression("conformal", coords));
    } else if (kind == "explicit") {
      sc.metric = geometry::MetricSpec::explicit_matrix(
          sc.dimension, man.expressions("entries", static_cast<std::size_t>(n * n), coords));
    } else {
      man.fail("metric", "must be \"euclidean\", \"conformal\" or \"explicit\"");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    man.fail("metric", e.what());
  }
  if (man.has("periods")) sc.periods = man.matrix("periods", static_cast<std::size_t>(n));

  // [field]
  const Reader fld(cfg, "field");
  if (!fld.present()) throw ConfigError(cfg.filename() + ": missing section [field]");
  fld.reject_unknown({"kind", "W", "h", "a", "b", "force"});
  const auto state = fields::state_names(sc.dimension);
  const std::string fkind = fld.string("kind");
  try {
    if (fkind == "hw") {
      sc.field_kind = Scenario::FieldKind::HW;
      sc.W_expr = fld.expression("W", state);
      auto hw = std::make_shared<fields::HWPair>(sc.dimension, *sc.W_expr,
                                                 fld.expression("h", {"w"}));
      sc.hw = hw;
      sc.ab = std::make_shared<fields::DerivedAB>(hw);
      sc.force = fields::ForceField::from_hw(hw, sc.metric);
    } else if (fkind == "ab") {
      sc.field_kind = Scenario::FieldKind::AB;
      auto ab = std::make_shared<fields::ABFields>(
          sc.dimension, fld.expression("a", state),
          fld.expressions("b", static_cast<std::size_t>(n), state));
      sc.ab = ab;
      sc.force = fields::ForceField::from_ab(ab, sc.metric);
    } else if (fkind == "custom") {
      sc.field_kind = Scenario::FieldKind::Custom;
      auto vars = state;
      for (int i = 1; i <= sc.dimension; ++i) vars.push_back("xdot" + std::to_string(i));
      sc.force = fields::ForceField::custom(
          fld.expressions("force", static_cast<std::size_t>(n), vars), sc.metric);
      if (fld.has("b")) {
        auto ab = std::make_shared<fields::ABFields>(
            sc.dimension, fld.has("a") ? fld.expression("a", state) : expr::FieldExpr::constant(1.0),
            fld.expressions("b", static_cast<std::size_t>(n), state));
        sc.ab = ab;
      }
    } else {
      fld.fail("kind", "must be \"hw\", \"ab\" or \"custom\"");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fld.fail("kind", e.what());
  }

  // [surface]
  const Reader srf(cfg, "surface");
  if (srf.present()) {
    srf.reject_unknown({"embedding", "ranges", "grid", "closed", "base", "orientation", "nu0", "nu"});
    const auto params = geometry::parameter_names(sc.dimension);
    const auto m = static_cast<std::size_t>(n - 1);
    auto embedding = srf.expressions("embedding", static_cast<std::size_t>(n), params);
    const auto ranges = srf.matrix("ranges", 2);
    if (ranges.size() != m) srf.fail("ranges", "expected " + std::to_string(m) + " ranges");
    const Vec grid = srf.vector("grid", m);
    std::vector<bool> closed(m, false);
    if (srf.has("closed")) {
      const auto& items = srf.array("closed");
      if (items.size() != m) srf.fail("closed", "expected " + std::to_string(m) + " flags");
      for (std::size_t k = 0; k < m; ++k) {
        if (items[k].kind != Value::Kind::Bool) srf.fail("closed", "expected booleans");
        closed[k] = items[k].boolean;
      }
    }
    std::vector<geometry::ParamAxis> axes;
    for (std::size_t k = 0; k < m; ++k) {
      if (grid[k] != std::floor(grid[k]) || grid[k] < 2) srf.fail("grid", "node counts must be integers >= 2");
      if (!(ranges[k][1] > ranges[k][0])) srf.fail("ranges", "each range needs lo < hi");
      axes.push_back({ranges[k][0], ranges[k][1], static_cast<int>(grid[k]), closed[k]});
    }
    const Vec base = srf.vector("base", m);
    for (std::size_t k = 0; k < m; ++k) {
      if (base[k] < ranges[k][0] || base[k] > ranges[k][1]) srf.fail("base", "outside the parameter ranges");
    }
    const long orientation = srf.integer("orientation", 1);
    if (orientation != 1 && orientation != -1) srf.fail("orientation", "must be 1 or -1");
    sc.nu0 = srf.positive("nu0", 1.0);
    const std::string mode = srf.string("nu", "solve");
    if (mode != "solve" && mode != "constant") srf.fail("nu", "must be \"solve\" or \"constant\"");
    sc.solve_nu = mode == "solve";
    try {
      sc.surface = std::make_shared<geometry::Hypersurface>(sc.dimension, std::move(embedding),
                                                            std::move(axes), base,
                                                            static_cast<int>(orientation));
    } catch (const Error& e) {
      srf.fail("embedding", e.what());
    }
  }

  // [run]
  const Reader run(cfg, "run");
  run.reject_unknown({"t_max", "dt", "du", "tol", "seed", "w0", "w_values", "w_range", "w_count",
                      "w_spacing", "v_values", "v_range", "v_count", "v_spacing", "x_points",
                      "x_lo", "x_hi", "x_count", "path", "path_range", "path2", "path2_range",
                      "words", "p0", "x0", "xdot0", "check_points", "rho", "rho_domain",
                      "rho_word", "f", "fnorm_bound", "samples", "speed_range", "layers",
                      "fd_order", "spectral", "loop_axis", "loop_word"});
  RunParams& r = sc.run;
  r.t_max = run.optional_number("t_max");
  if (r.t_max && *r.t_max < 0.0) run.fail("t_max", "must be non-negative");
  r.dt = run.optional_positive("dt");
  r.du = run.optional_positive("du");
  r.tol = run.optional_positive("tol");
  const long seed = run.integer("seed", 1);
  if (seed < 0) run.fail("seed", "must be non-negative");
  r.seed = static_cast<std::uint64_t>(seed);
  r.w0 = run.positive("w0", 1.0);
  r.w_grid = read_grid(run, "w", "log");
  r.v_grid = read_grid(run, "v", "log");
  const auto dim = static_cast<std::size_t>(n);
  if (run.has("x_points")) r.x_grid = run.matrix("x_points", dim);
  if (run.has("x_lo") || run.has("x_hi")) {
    r.x_lo = run.vector("x_lo", dim);
    r.x_hi = run.vector("x_hi", dim);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!(r.x_hi[i] >= r.x_lo[i])) run.fail("x_hi", "must not be below x_lo");
    }
    const long count = run.integer("x_count", 10);
    if (count < 1) run.fail("x_count", "must be positive");
    if (!run.has("x_points")) {
      // Tensor grid, first coordinate slowest.
      std::size_t total = 1;
      for (std::size_t i = 0; i < dim; ++i) total *= static_cast<std::size_t>(count);
      for (std::size_t flat = 0; flat < total; ++flat) {
        Vec x(dim);
        std::size_t rem = flat;
        for (std::size_t i = dim; i-- > 0;) {
          const auto k = static_cast<long>(rem % static_cast<std::size_t>(count));
          rem /= static_cast<std::size_t>(count);
          x[i] = count == 1 ? r.x_lo[i]
                            : r.x_lo[i] + (r.x_hi[i] - r.x_lo[i]) * static_cast<double>(k) /
                                              static_cast<double>(count - 1);
        }
        r.x_grid.push_back(std::move(x));
      }
    }
  }
  if (run.has("path")) r.path = read_path(run, "path", sc.dimension);
  if (run.has("path2")) r.path2 = read_path(run, "path2", sc.dimension);
  if (run.has("words")) {
    r.words = run.strings("words");
    for (const auto& w : r.words) {
      try {
        const auto word = geometry::parse_word(w);
        for (const auto& letter : word) {
          if (letter.generator >= static_cast<int>(sc.periods.size())) {
            run.fail("words", "word '" + w + "' uses g" + std::to_string(letter.generator + 1) +
                                  " but manifold.periods defines " +
                                  std::to_string(sc.periods.size()) + " generators");
          }
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        run.fail("words", e.what());
      }
    }
  }
  r.p0 = run.has("p0") ? run.vector("p0", dim) : Vec(dim, 0.0);
  if (run.has("x0")) r.x0 = run.vector("x0", dim);
  if (run.has("xdot0")) r.xdot0 = run.vector("xdot0", dim);
  if (run.has("check_points")) r.check_points = run.matrix("check_points", dim);
  if (run.has("rho")) {
    r.rho = run.expression("rho", {"w"});
    const Vec dom = run.vector("rho_domain", 2);
    if (!(dom[0] >= 0.0) || !(dom[1] > dom[0])) run.fail("rho_domain", "needs 0 <= lo < hi");
    r.rho_lo = dom[0];
    r.rho_hi = dom[1];
  }
  r.rho_word = run.string("rho_word", "");
  if (run.has("f")) r.f = run.expression("f", {"v"});
  r.fnorm_bound = run.optional_positive("fnorm_bound");
  r.samples = static_cast<int>(run.integer("samples", 20));
  if (r.samples < 1) run.fail("samples", "must be positive");
  if (run.has("speed_range")) {
    const Vec s = run.vector("speed_range", 2);
    if (!(s[0] > 0.0) || !(s[1] >= s[0])) run.fail("speed_range", "needs 0 < lo <= hi");
    r.v_lo = s[0];
    r.v_hi = s[1];
  }
  r.layers = static_cast<int>(run.integer("layers", 50));
  if (r.layers < 1) run.fail("layers", "must be positive");
  r.fd_order = static_cast<int>(run.integer("fd_order", 6));
  if (r.fd_order != 2 && r.fd_order != 4 && r.fd_order != 6) run.fail("fd_order", "must be 2, 4 or 6");
  r.spectral = run.boolean("spectral", true);
  r.loop_axis = static_cast<int>(run.integer("loop_axis", 0)) - 1;
  if (run.has("loop_axis") && (r.loop_axis < 0 || r.loop_axis >= sc.dimension - 1)) {
    run.fail("loop_axis", "must name a surface axis (1-based)");
  }
  r.loop_word = run.string("loop_word", "");
  return sc;
}

}  // namespace nshift::cli
