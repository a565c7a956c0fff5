#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "nshift/format.hpp"
#include "nshift/pfaff.hpp"
#include "support.hpp"

using namespace nshift;
using namespace nshift::pfaff;
using testing_support::Rng;

namespace {

expr::FieldExpr E(const std::string& s) { return expr::FieldExpr::parse(s); }

std::vector<expr::FieldExpr> Es(std::initializer_list<const char*> s) {
  std::vector<expr::FieldExpr> out;
  for (const char* e : s) out.push_back(E(e));
  return out;
}

// W(x, v) = v exp(alpha.(x - base)) + beta (sin(gamma.x) - sin(gamma.base)),
// normalized so that W(base, v) = v.
struct Normalized {
  Vec alpha, gamma, base;
  double beta = 0.0;
  std::shared_ptr<fields::DerivedAB> ab;

  double W(const Vec& x, double v) const {
    double ax = 0.0, gx = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ax += alpha[i] * (x[i] - base[i]);
      gx += gamma[i] * x[i];
      gb += gamma[i] * base[i];
    }
    return v * std::exp(ax) + beta * (std::sin(gx) - std::sin(gb));
  }
  // V(x; w): the speed at x on the level W = w.
  double V(const Vec& x, double w) const {
    double ax = 0.0, gx = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ax += alpha[i] * (x[i] - base[i]);
      gx += gamma[i] * x[i];
      gb += gamma[i] * base[i];
    }
    return (w - beta * (std::sin(gx) - std::sin(gb))) * std::exp(-ax);
  }
};

Normalized normalized(Rng& rng, int n) {
  Normalized z;
  z.alpha = rng.point(n, -0.5, 0.5);
  z.gamma = rng.point(n, -1.5, 1.5);
  z.base = rng.point(n, -0.5, 0.5);
  z.beta = rng.uniform(-0.15, 0.15);
  std::ostringstream lin, osc, osc0;
  double gb = 0.0;
  for (int i = 0; i < n; ++i) {
    lin << " + " << format_double(z.alpha[i]) << "*(x" << i + 1 << " - " << format_double(z.base[i]) << ")";
    osc << " + " << format_double(z.gamma[i]) << "*x" << i + 1;
    gb += z.gamma[i] * z.base[i];
  }
  const std::string W = "v*exp(0" + lin.str() + ") + " + format_double(z.beta) + "*(sin(0" + osc.str() +
                        ") - " + format_double(std::sin(gb)) + ")";
  z.ab = std::make_shared<fields::DerivedAB>(std::make_shared<fields::HWPair>(n, E(W), E("1")));
  return z;
}

}  // namespace

TEST_CASE("polyline and parametric paths") {
  const auto p = PathSpec::polyline({{0, 0}, {1, 0}, {1, 2}});
  CHECK(p.piece_count() == 2);
  CHECK(p.piece_start(1) == 1.0);
  CHECK(p.piece_end(1) == 2.0);
  Vec x, xd;
  p.eval(1, 1.5, x, xd);
  CHECK(x == Vec{1, 1});
  CHECK(xd == Vec{0, 2});
  CHECK(p.reversed().start() == Vec{1, 2});
  CHECK(p.reversed().end() == Vec{0, 0});
  CHECK(same_point(p.end(), Vec{1, 2}));
  CHECK_FALSE(same_point(p.end(), Vec{1, 2.001}));
  CHECK_THROWS_AS(PathSpec::polyline({{0, 0}}), InvalidArgument);
  CHECK_THROWS_AS(PathSpec::polyline({{0, 0}, {1, 0, 0}}), InvalidArgument);

  const auto circle = PathSpec::parametric(Es({"cos(t)", "sin(t)"}), 0.0, M_PI);
  CHECK(circle.piece_count() == 1);
  CHECK(circle.end()[0] == doctest::Approx(-1.0));
  circle.eval(0, M_PI / 2, x, xd);
  CHECK(xd[0] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(PathSpec::parametric(Es({"t", "u"}), 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(PathSpec::parametric(Es({"t", "t"}), 1.0, 1.0), InvalidArgument);
}

TEST_CASE("continuation follows the exact level set") {
  Rng rng(51);
  for (int s = 0; s < 15; ++s) {
    const int n = 2 + s % 3;
    const auto z = normalized(rng, n);
    std::vector<Vec> pts = {z.base};
    for (int k = 0; k < 3; ++k) pts.push_back(rng.point(n, -1.0, 1.0));
    const auto path = PathSpec::polyline(pts);
    const double w = rng.uniform(1.0, 3.0);
    const auto c = continue_V(*z.ab, path, w, 1e-3);
    for (const auto& smp : c.samples) {
      CHECK(smp.V == doctest::Approx(z.V(smp.x, w)).epsilon(1e-10));
      CHECK(smp.Vw == doctest::Approx(z.V(smp.x, 1.0) - z.V(smp.x, 0.0)).epsilon(1e-10));
    }
    // Round trip back to the start restores w.
    const auto back = continue_V(*z.ab, path.reversed(), c.end_value(), 1e-3);
    CHECK(back.end_value() == doctest::Approx(w).epsilon(1e-12));
    const auto vw = Vw_along_path(*z.ab, path, w, 1e-3);
    CHECK(vw.size() == c.samples.size());
  }
}

TEST_CASE("continuation failures") {
  const fields::ABFields ab(2, E("1"), Es({"-1", "0"}));
  CHECK_THROWS_AS(continue_V(ab, PathSpec::segment({0, 0}, {2, 0}), 1.0, 1e-2), NumericalFailure);
  CHECK_THROWS_AS(continue_V(ab, PathSpec::segment({0, 0}, {1, 0}), 0.0, 1e-2), InvalidArgument);
  CHECK_THROWS_AS(continue_V(ab, PathSpec::segment({0, 0}, {1, 0}), 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(path_independence_defect(ab, PathSpec::segment({0, 0}, {1, 0}),
                                           PathSpec::segment({0, 0}, {0, 1}), 1.0, 1e-2),
                  InvalidArgument);
}

TEST_CASE("inverting V recovers the normalized W") {
  Rng rng(52);
  for (int s = 0; s < 20; ++s) {
    const int n = 2 + s % 2;
    const auto z = normalized(rng, n);
    const Vec x = rng.point(n, -1.0, 1.0);
    const double v = rng.uniform(0.5, 2.0);
    const auto inv = invert_V(*z.ab, z.base, x, v);
    CHECK(inv.w == doctest::Approx(z.W(x, v)).epsilon(1e-10));
    CHECK(inv.Vw > 0.0);
    CHECK(inv.iterations <= 80);
  }
  const auto z = normalized(rng, 2);
  const auto at_base = invert_V(*z.ab, z.base, z.base, 1.25);
  CHECK(at_base.w == 1.25);
  CHECK(at_base.iterations == 0);
  // dV/dx1 = 1 - V: every w lands near V = 1 at x1 = 10, so V = 0.5 is out of reach.
  const fields::ABFields saturating(2, E("1"), Es({"1 - v", "0"}));
  CHECK_THROWS_AS(invert_V(saturating, {0, 0}, {10, 0}, 0.5), NumericalFailure);
}

TEST_CASE("admissible f and f-norm estimates") {
  CHECK_THROWS_AS(AdmissibleF(E("v - 1")), DomainError);
  CHECK_THROWS_AS(AdmissibleF(E("x1")), InvalidArgument);
  const AdmissibleF f(E("1 + v"));
  CHECK(f(2.0) == 3.0);
  const fields::ABFields ab(2, E("1"), Es({"-0.5*v*(1 + 0.5*sin(x1))", "0.1*v"}));
  const auto m = geometry::MetricSpec::euclidean(2);
  const std::vector<Vec> xs = {{0, 0}, {M_PI / 2, 0}, {-1, 1}};
  const auto vs = log_grid(0.1, 10.0, 9);
  const auto est = f_norm_estimate(ab, AdmissibleF(E("v")), m, xs, vs);
  // |b| / v is independent of v and largest where sin(x1) = 1.
  CHECK(est.value == doctest::Approx(std::hypot(0.75, 0.1)).epsilon(1e-14));
  CHECK(est.x == xs[1]);
  CHECK_FALSE(est.divergence_suspected);
  REQUIRE(est.per_v.size() == vs.size());
  for (double r : est.per_v) CHECK(r == doctest::Approx(est.value).epsilon(1e-14));
  // A bounded ratio that peaks inside the grid is not suspicious.
  const auto peak = f_norm_estimate(ab, AdmissibleF(E("v*(v + 1/v)")), m, xs, vs);
  CHECK_FALSE(peak.divergence_suspected);
  CHECK(peak.v_index == 4);
  const auto blow = f_norm_estimate(ab, AdmissibleF(E("sqrt(v)")), m, xs, vs);
  CHECK(blow.divergence_suspected);
  CHECK(blow.v_index == vs.size() - 1);
}

TEST_CASE("table maps interpolate power laws exactly") {
  const auto w = log_grid(0.01, 100.0, 12);
  for (double k : {1.0, 0.5, 2.5}) {
    std::vector<double> rho;
    for (double x : w) rho.push_back(3.0 * std::pow(x, k));
    const TableMap map(w, rho);
    for (double x : {0.013, 0.2, 1.0, 7.7, 99.0}) {
      CHECK(map(x) == doctest::Approx(3.0 * std::pow(x, k)).epsilon(1e-12));
      CHECK(map.derivative(x) == doctest::Approx(3.0 * k * std::pow(x, k - 1)).epsilon(1e-11));
      CHECK(map.second_derivative(x) ==
            doctest::Approx(3.0 * k * (k - 1) * std::pow(x, k - 2)).scale(1.0).epsilon(1e-9));
      CHECK(map.inverse(map(x)) == doctest::Approx(x).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(map(w[i]) == doctest::Approx(rho[i]).epsilon(1e-15));
  }
}

TEST_CASE("table maps stay monotone and accurate on smooth data") {
  const auto w = log_grid(0.1, 10.0, 40);
  std::vector<double> rho;
  auto exact = [](double x) { return x + x * x / (1.0 + x); };
  for (double x : w) rho.push_back(exact(x));
  const TableMap map(w, rho);
  double prev = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double x = 0.1 * std::pow(100.0, k / 1000.0);
    const double y = map(std::min(x, 10.0));
    CHECK(y >= prev);
    prev = y;
    CHECK(y == doctest::Approx(exact(std::min(x, 10.0))).epsilon(1e-5));
  }
  // A kinked table stays monotone.
  const TableMap kink({1, 2, 3, 4, 5}, {1, 1.001, 5, 5.001, 5.002});
  prev = 0.0;
  for (int k = 0; k <= 400; ++k) {
    const double y = kink(1.0 + k / 100.0);
    CHECK(y >= prev);
    prev = y;
  }
  CHECK_THROWS_AS(kink(0.5), DomainError);
  CHECK_THROWS_AS(TableMap({1, 2}, {2, 1}), NumericalFailure);
}

TEST_CASE("closed-form maps") {
  const ClosedFormMap rho(E("w + w^3"), 0.0, 100.0);
  CHECK(rho(2.0) == 10.0);
  CHECK(rho.derivative(2.0) == 13.0);
  CHECK(rho.second_derivative(2.0) == 12.0);
  CHECK(rho.inverse(10.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(rho(200.0), DomainError);
  CHECK_THROWS_AS(ClosedFormMap(E("1 - w"), 0.0, 1.0), InvalidArgument);
  CHECK((*ClosedFormMap::identity())(3.5) == 3.5);
}

TEST_CASE("monodromy on a two-generator torus") {
  // W = phi(v) exp(c.x) with phi(v) = v + v^3: deck invariant b, nonlinear rho.
  const fields::ABFields ab(2, E("1"), Es({"-0.2*(v + v^3)/(1 + 3*v^2)", "-0.1*(v + v^3)/(1 + 3*v^2)"}));
  const geometry::CoveringManifold torus(geometry::MetricSpec::euclidean(2), {{1.0, 0.0}, {0.0, 2.0}});
  const Vec p0 = {0.1, -0.2};
  auto exact = [](double w, double shift) {
    const double target = (w + w * w * w) * std::exp(shift);
    double v = w;
    for (int k = 0; k < 100; ++k) v -= (v + v * v * v - target) / (1 + 3 * v * v);
    return v;
  };
  const auto ws = log_grid(0.2, 5.0, 15);
  const auto g1 = geometry::parse_word("g1"), g2 = geometry::parse_word("g2");
  const auto m12 = monodromy(ab, torus, geometry::parse_word("g1 g2"), p0, ws);
  const auto m21 = monodromy(ab, torus, geometry::parse_word("g2 g1"), p0, ws);
  for (std::size_t k = 0; k < ws.size(); ++k) {
    const double w = ws[k];
    const double r12 = m12.table->rho()[k];
    CHECK(r12 == doctest::Approx(exact(w, 0.2 + 0.2)).epsilon(1e-9));
    // Translations commute, so both composition orders agree.
    const double r1_of_r2 = monodromy_value(ab, torus, g1, p0, monodromy_value(ab, torus, g2, p0, w));
    const double r2_of_r1 = monodromy_value(ab, torus, g2, p0, monodromy_value(ab, torus, g1, p0, w));
    CHECK(r12 == doctest::Approx(r1_of_r2).epsilon(1e-9));
    CHECK(r12 == doctest::Approx(r2_of_r1).epsilon(1e-9));
    CHECK(m21.table->rho()[k] == doctest::Approx(r12).epsilon(1e-12));
    // g and g^-1 are inverse maps.
    const double back = monodromy_value(ab, torus, geometry::parse_word("g1^-1"), p0,
                                        monodromy_value(ab, torus, g1, p0, w));
    CHECK(back == doctest::Approx(w).epsilon(1e-9));
  }
  CHECK(m12.cross_check_defect < 1e-9);
  CHECK_FALSE(m12.is_identity());

  // b with no component along the period: trivial monodromy.
  const fields::ABFields along(2, E("1"), Es({"0", "-0.5*v"}));
  const geometry::CoveringManifold strip(geometry::MetricSpec::euclidean(2), {{2 * M_PI, 0.0}});
  CHECK(monodromy(along, strip, g1, {0, 0}, ws).is_identity());
  // b that is not deck invariant is rejected.
  const fields::ABFields drifting(2, E("1"), Es({"-0.5*v*x1", "0"}));
  CHECK_THROWS_AS(monodromy(drifting, strip, g1, {0, 0}, ws), DomainError);
}

TEST_CASE("gauge transforms leave the force unchanged") {
  Rng rng(53);
  auto hw = std::make_shared<fields::HWPair>(3, E("v*exp(0.4*x1 - 0.2*x3) + 0.2*sin(x2)"), E("1 + 0.1*w"));
  const auto rho = std::make_shared<ClosedFormMap>(E("w + 0.3*w^3"), 0.0, 1e3);
  const auto gauged = gauge_transform(hw, rho);
  const auto m = geometry::MetricSpec::conformal(3, E("0.1*x1*x2"));
  for (int s = 0; s < 30; ++s) {
    const Vec x = rng.point(3, -1.0, 1.0);
    const Vec xdot = rng.velocity(m.metric_at(x), rng.uniform(0.5, 2.0));
    CHECK(testing_support::max_abs_diff(fields::force_hw(*hw, m, x, xdot),
                                        fields::force_hw(*gauged, m, x, xdot)) < 1e-12);
  }
  // h' = h(rho^-1) rho'(rho^-1) and its derivative against differences.
  expr::DenseJet j, up, dn;
  const double w = 2.0;
  gauged->h(w, 1, j);
  const double u = rho->inverse(w);
  CHECK(j.value() == doctest::Approx((1 + 0.1 * u) * (1 + 0.9 * u * u)).epsilon(1e-14));
  gauged->h(w + 1e-6, 0, up);
  gauged->h(w - 1e-6, 0, dn);
  CHECK(j.d(0) == doctest::Approx((up.value() - dn.value()) / 2e-6).epsilon(1e-7));
  CHECK_THROWS_AS(gauged->h(w, 2, j), InvalidArgument);
  // The gauged pair still solves both PDE systems.
  const fields::DerivedAB ab(gauged);
  const Vec x = {0.2, -0.3, 0.4};
  const Matrix R = fields::closedness_residual(ab, x, 1.1);
  const Vec r = fields::normalizing_residual(ab, x, 1.1);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(r[i]) < 1e-10);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(R(i, k)) < 1e-10);
  }
}

TEST_CASE("h extraction") {
  auto hw = std::make_shared<fields::HWPair>(2, E("v*exp(0.5*x1) + 0.3*x2"), E("1 + sin(w)^2"));
  const fields::DerivedAB ab(hw);
  ExtractOptions opt;
  opt.check_points = {{0.5, 0.5}, {-0.7, 0.1}};
  const auto table = extract_h(ab, {0, 0}, {0.5, 1.0, 1.5}, opt);
  for (std::size_t k = 0; k < table.v.size(); ++k) {
    CHECK(table.h[k] == doctest::Approx(1 + std::pow(std::sin(table.v[k]), 2)).epsilon(1e-14));
  }
  CHECK(table.max_defect < 1e-9);
  CHECK(table.max_residual < 1e-12);
  const fields::ABFields broken(2, E("1"), Es({"-0.5*v", "0"}));
  CHECK_THROWS_AS(extract_h(broken, {0, 0}, {1.0}), DomainError);
}

TEST_CASE("table writers") {
  std::ostringstream out;
  HTable t;
  t.v = {1.0, 2.0};
  t.h = {0.5, 0.25};
  write_h_csv(out, t);
  CHECK(out.str() == "v,h\n1,0.5\n2,0.25\n");
  std::ostringstream trace;
  const fields::ABFields ab(2, E("1"), Es({"0", "0"}));
  write_trace_csv(trace, continue_V(ab, PathSpec::segment({0, 0}, {1, 0}), 2.0, 0.5), 2);
  CHECK(trace.str() == "t,x1,x2,V,V_w\n0,0,0,2,1\n0.5,0.5,0,2,1\n1,1,0,2,1\n");
  const auto g = log_grid(1.0, 100.0, 3);
  CHECK(g.front() == 1.0);
  CHECK(g[1] == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(g.back() == 100.0);
}
