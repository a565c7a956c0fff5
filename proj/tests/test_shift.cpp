#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <memory>
#include <sstream>

#include "nshift/shift.hpp"
#include "support.hpp"

using namespace nshift;
using namespace nshift::shift;

namespace {

expr::FieldExpr E(const char* s) { return expr::FieldExpr::parse(s); }

std::vector<expr::FieldExpr> Es(std::initializer_list<const char*> s) {
  std::vector<expr::FieldExpr> out;
  for (const char* e : s) out.push_back(E(e));
  return out;
}

std::shared_ptr<geometry::Hypersurface> sphere(int open_nodes, int closed_nodes) {
  return std::make_shared<geometry::Hypersurface>(
      3, Es({"sin(u1)*cos(u2)", "sin(u1)*sin(u2)", "cos(u1)"}),
      std::vector<geometry::ParamAxis>{{0.2, M_PI - 0.2, open_nodes, false},
                                       {0.0, 2 * M_PI, closed_nodes, true}},
      Vec{1.3, 0.4}, 1);
}

std::shared_ptr<geometry::Hypersurface> plane(int nodes) {
  return std::make_shared<geometry::Hypersurface>(
      3, Es({"u1", "u2", "0.1*u1*u2"}),
      std::vector<geometry::ParamAxis>{{-1, 1, nodes, false}, {-1, 1, nodes, false}}, Vec{0, 0}, 1);
}

}  // namespace

TEST_CASE("nu solves the restricted Pfaff system exactly") {
  // On the level set W(x, nu) = W(x(u0), nu0): nu = nu0 exp(0.3 (x1(u0) - x1)).
  const auto m = geometry::MetricSpec::euclidean(3);
  auto hw = std::make_shared<fields::HWPair>(3, E("v*exp(0.3*x1)"), E("1"));
  const fields::DerivedAB ab(hw);
  const auto S = sphere(12, 16);
  const auto nu = solve_nu(*S, ab, m, 1.4, 1e-3);
  const double x1_base = S->embed(S->base())[0];
  REQUIRE(nu.values.size() == S->node_count());
  for (std::size_t k = 0; k < S->node_count(); ++k) {
    const double x1 = S->embed(S->node_parameters(k))[0];
    CHECK(nu.values[k] == doctest::Approx(1.4 * std::exp(0.3 * (x1_base - x1))).epsilon(1e-11));
  }
  CHECK(nu.audited_nodes > 0);
  CHECK(nu.audit_defect < 1e-10);
  CHECK(nu.closedness_residual < 1e-12);
  CHECK(nu.nu0 == 1.4);

  const fields::ABFields twisted(3, E("1"), Es({"x2*v", "0", "0"}));
  CHECK_THROWS_AS(solve_nu(*S, twisted, m, 1.0, 1e-3), DomainError);
  CHECK_THROWS_AS(solve_nu(*S, ab, m, 0.0, 1e-3), InvalidArgument);
  const auto c = constant_nu(*S, 2.0);
  CHECK(c.values.size() == S->node_count());
  CHECK(c.values[5] == 2.0);
}

TEST_CASE("shifted layers and the t = 0 surface") {
  const auto m = geometry::MetricSpec::euclidean(3);
  auto hw = std::make_shared<fields::HWPair>(3, E("v*exp(0.3*x1)"), E("1"));
  const fields::DerivedAB ab(hw);
  const auto S = sphere(16, 24);
  const auto nu = solve_nu(*S, ab, m, 1.0, 1e-3);
  ShiftOptions opt;
  opt.layers = 4;
  const auto fam = normal_shift(S, nu, fields::ForceField::from_hw(hw, m), m, 0.3, 1e-2, opt);
  REQUIRE(fam.layers.size() == 5);
  CHECK_FALSE(fam.partial);
  const double times[] = {0.0, 0.08, 0.16, 0.24, 0.3};
  for (int k = 0; k < 5; ++k) CHECK(fam.layers[k].t == doctest::Approx(times[k]).epsilon(1e-12));
  const auto& L0 = fam.layers[0];
  for (std::size_t k = 0; k < S->node_count(); ++k) {
    const Vec x = S->embed(S->node_parameters(k));
    CHECK(testing_support::max_abs_diff(L0.x[k], x) == 0.0);
    // Launch velocity nu n with the outward unit normal.
    for (int i = 0; i < 3; ++i) CHECK(L0.xdot[k][i] == doctest::Approx(nu.values[k] * x[i]).epsilon(1e-13));
  }
  CHECK(L0.max_defect < 1e-12);
  const auto per_layer = orthogonality_defect(fam);
  for (std::size_t k = 0; k < per_layer.size(); ++k) CHECK(per_layer[k] == fam.layers[k].max_defect);
  CHECK(fam.layers.back().max_defect < 1e-3);
  CHECK(fam.layers.back().min_gram > 0.0);
}

TEST_CASE("tangent stencils converge at their order") {
  // Free motion from a plane-like graph: S_t is the parallel surface, so the
  // defect measures the tangent differences alone.
  const auto m = geometry::MetricSpec::euclidean(3);
  auto hw = std::make_shared<fields::HWPair>(3, E("v"), E("1"));
  const auto f = fields::ForceField::from_hw(hw, m);
  for (int order : {2, 4, 6}) {
    std::vector<double> defects;
    for (int nodes : {21, 41}) {
      const auto S = plane(nodes);
      ShiftOptions opt;
      opt.layers = 1;
      opt.fd_order = order;
      const auto fam = normal_shift(S, constant_nu(*S, 1.0), f, m, 1.0, 0.1, opt);
      defects.push_back(fam.layers.back().max_defect);
    }
    const double rate = std::log2(defects[0] / defects[1]);
    // One-sided end stencils approach their asymptotic rate slowly.
    CHECK(rate > order - 1.0);
  }
  CHECK_THROWS_AS(normal_shift(plane(5), constant_nu(*plane(5), 1.0), f, m, 1.0, 0.1, {1, 3, true}),
                  InvalidArgument);
}

TEST_CASE("trajectory failures truncate the family") {
  const auto m = geometry::MetricSpec::euclidean(3);
  const auto S = plane(5);
  // The force blows up as a trajectory approaches x3 = 1.5.
  const auto f = fields::ForceField::custom(Es({"0", "0", "-log(1.5 - x3)"}), m);
  const auto fam = normal_shift(S, constant_nu(*S, 1.0), f, m, 3.0, 1e-2, {10, 6, true});
  CHECK(fam.partial);
  CHECK_FALSE(fam.failures.empty());
  CHECK(fam.layers.size() < 11);
  CHECK(fam.failures.front().find("node") != std::string::npos);
}

TEST_CASE("results do not depend on the worker count") {
  const auto m = geometry::MetricSpec::euclidean(3);
  auto hw = std::make_shared<fields::HWPair>(3, E("v*exp(0.3*x1)"), E("1"));
  const auto S = sphere(8, 12);
  const auto nu = solve_nu(*S, fields::DerivedAB(hw), m, 1.0, 1e-2);
  auto run = [&](const char* threads) {
    setenv("NORMALSHIFT_THREADS", threads, 1);
    const auto fam = normal_shift(S, nu, fields::ForceField::from_hw(hw, m), m, 0.2, 1e-2, {2, 6, true});
    std::ostringstream out;
    write_csv(out, fam);
    return out.str();
  };
  const std::string one = run("1");
  const std::string four = run("4");
  unsetenv("NORMALSHIFT_THREADS");
  CHECK(one == four);
  std::istringstream in(one);
  std::string header;
  std::getline(in, header);
  CHECK(header == "u1_index,u2_index,t,x1,x2,x3,xdot1,xdot2,xdot3,nu,defect");
}

TEST_CASE("loop closure around a cylinder") {
  const geometry::CoveringManifold M(geometry::MetricSpec::euclidean(2), {{2 * M_PI, 0.0}});
  auto S = std::make_shared<geometry::Hypersurface>(
      2, Es({"u1", "0.5*sin(u1)"}), std::vector<geometry::ParamAxis>{{0.0, 2 * M_PI, 32, true}}, Vec{0.0}, 1);
  const auto loop = pfaff::PathSpec::on_surface(S, 0, {0.0}, 2 * M_PI);
  const fields::ABFields ab(2, E("1"), Es({"-0.3*v", "0.2*v*0"}));
  const double d = loop_closure_defect(loop, ab, 2.0, 1e-3, &M, geometry::parse_word("g1"));
  CHECK(d == doctest::Approx(2.0 * (1 - std::exp(-0.3 * 2 * M_PI))).epsilon(1e-9));
  // Closing the loop with the wrong deck word is an error.
  CHECK_THROWS_AS(loop_closure_defect(loop, ab, 2.0, 1e-3, &M, {}), InvalidArgument);
  // A loop that closes in the chart with closed b has no defect.
  const fields::ABFields closed(2, E("1"), Es({"-0.3*v", "-0.1*v"}));
  const auto square = pfaff::PathSpec::polyline({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}});
  CHECK(loop_closure_defect(square, closed, 1.0, 1e-3) < 1e-13);
}
