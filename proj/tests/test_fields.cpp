#include <doctest.h>

#include <cmath>
#include <memory>

#include "nshift/fields.hpp"
#include "support.hpp"

using namespace nshift;
using namespace nshift::fields;
using testing_support::Rng;

namespace {

expr::FieldExpr E(const std::string& s) { return expr::FieldExpr::parse(s); }

std::vector<expr::FieldExpr> Es(std::initializer_list<const char*> s) {
  std::vector<expr::FieldExpr> out;
  for (const char* e : s) out.push_back(E(e));
  return out;
}

// W with W_v > 0 on [-1, 1]^n x [0.5, 2] and its x-part drawn at random.
std::shared_ptr<HWPair> random_pair(Rng& rng, int n) {
  testing_support::ExprGen gen(rng, geometry::coordinate_names(n));
  const std::string W = "v^1.5*exp(0.3*sin(" + gen.make(2) + ")) + 0.2*tanh(" + gen.make(2) +
                        ") + 0.1*v*cos(" + gen.make(2) + ")";
  return std::make_shared<HWPair>(n, E(W), E("1 + 0.3*sin(w)"));
}

double W_value(const HWModel& hw, const Vec& x, double v) {
  expr::DenseJet j;
  hw.W(x, v, 0, j);
  return j.value();
}

}  // namespace

TEST_CASE("conversion formulas against differences of W") {
  Rng rng(31);
  for (int s = 0; s < 30; ++s) {
    const int n = 2 + s % 3;
    const auto hw = random_pair(rng, n);
    const Vec x = rng.point(n, -1.0, 1.0);
    const double v = rng.uniform(0.5, 2.0);
    const double h = 1e-6;
    const double Wv = (W_value(*hw, x, v + h) - W_value(*hw, x, v - h)) / (2 * h);
    const Vec b = b_from_W(*hw, x, v);
    for (int i = 0; i < n; ++i) {
      Vec up = x, dn = x;
      up[i] += h;
      dn[i] -= h;
      const double Wi = (W_value(*hw, up, v) - W_value(*hw, dn, v)) / (2 * h);
      CHECK(b[i] == doctest::Approx(-Wi / Wv).epsilon(1e-7));
    }
    const double w = W_value(*hw, x, v);
    CHECK(a_from_hW(*hw, x, v) == doctest::Approx((1 + 0.3 * std::sin(w)) / Wv).epsilon(1e-7));
  }
  const HWPair flat(2, E("x1"), E("1"));
  CHECK_THROWS_AS(b_from_W(flat, Vec{0.1, 0.2}, 1.0), DomainError);
}

TEST_CASE("derived (a, b) derivatives against differences") {
  Rng rng(32);
  for (int s = 0; s < 20; ++s) {
    const int n = 2 + s % 2;
    const DerivedAB ab(random_pair(rng, n));
    const Vec x = rng.point(n, -0.9, 0.9);
    const double v = rng.uniform(0.6, 1.8);
    ABJet j, up, dn;
    ab.eval(x, v, 1, j);
    const double h = 1e-6;
    for (int d = 0; d <= n; ++d) {
      Vec xu = x, xd = x;
      double vu = v, vd = v;
      if (d < n) {
        xu[d] += h;
        xd[d] -= h;
      } else {
        vu += h;
        vd -= h;
      }
      ab.eval(xu, vu, 0, up);
      ab.eval(xd, vd, 0, dn);
      CHECK(j.a.d(d) == doctest::Approx((up.a.value() - dn.a.value()) / (2 * h)).epsilon(1e-6));
      for (int i = 0; i < n; ++i) {
        CHECK(j.b[i].d(d) == doctest::Approx((up.b[i].value() - dn.b[i].value()) / (2 * h)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("derived pairs satisfy both PDE systems") {
  Rng rng(33);
  for (int s = 0; s < 20; ++s) {
    const int n = 2 + s % 3;
    const auto hw = random_pair(rng, n);
    const DerivedAB ab(hw);
    const Vec x = rng.point(n, -1.0, 1.0);
    const double v = rng.uniform(0.5, 2.0);
    const Matrix R = closedness_residual(ab, x, v);
    const Vec r = normalizing_residual(ab, x, v);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(r[i]) < 1e-10);
      for (int k = 0; k < n; ++k) CHECK(std::abs(R(i, k)) < 1e-10);
    }
    CHECK(collinearity_defect(ab, hw->W_expr(), x, v) < 1e-10);
  }
}

TEST_CASE("residuals of hand-computed non-solutions") {
  // b = (x2 v, 0): R_12 = d_2 b_1 - d_1 b_2 = v.
  const ABFields twisted(2, E("1"), Es({"x2*v", "0"}));
  const Matrix R = closedness_residual(twisted, Vec{0.3, -0.2}, 1.7);
  CHECK(R(0, 1) == doctest::Approx(1.7));
  CHECK(R(1, 0) == doctest::Approx(-1.7));
  CHECK(R(0, 0) == 0.0);
  // a = 1, b = (-v/2, 0): r_1 = -(d_v b_1) a = 1/2.
  const ABFields broken(2, E("1"), Es({"-0.5*v", "0"}));
  const Vec r = normalizing_residual(broken, Vec{0.0, 0.0}, 1.0);
  CHECK(r[0] == 0.5);
  CHECK(r[1] == 0.0);
  // a W_v = (1 + x1) e^{x1/2} is not a function of W = v e^{x1/2}.
  const ABFields skewed(2, E("1 + 0.5*x1"), Es({"-0.5*v", "0"}));
  CHECK(collinearity_defect(skewed, E("v*exp(0.5*x1)"), Vec{0.2, 0.1}, 1.0) > 1e-2);
}

TEST_CASE("force splits into a along the velocity and -v b across it") {
  Rng rng(34);
  const auto m = geometry::MetricSpec::conformal(3, E("0.2*x1 - 0.1*x2*x3"));
  for (int s = 0; s < 30; ++s) {
    const auto hw = random_pair(rng, 3);
    const Vec x = rng.point(3, -1.0, 1.0);
    const Matrix g = m.metric_at(x);
    const double v = rng.uniform(0.5, 2.0);
    const Vec xdot = rng.velocity(g, v);
    const Vec F = force_hw(*hw, m, x, xdot);
    const Vec b = b_from_W(*hw, x, v);
    const double a = a_from_hW(*hw, x, v);
    Vec N = xdot;
    for (auto& c : N) c /= v;
    // g(F, N) = a + v b(N)
    CHECK(inner(g, F, N) == doctest::Approx(a + v * dot(b, N)).epsilon(1e-12));
    // The part of g F orthogonal to N equals -v (b - b(N) g N).
    const Vec gF = g.apply(F), gN = g.apply(N);
    const double FN = inner(g, F, N), bN = dot(b, N);
    for (int k = 0; k < 3; ++k) {
      CHECK(gF[k] - FN * gN[k] == doctest::Approx(-v * (b[k] - bN * gN[k])).epsilon(1e-10));
    }
  }
}

TEST_CASE("closed-form force matches the (h, W) force with h = 1") {
  Rng rng(35);
  const auto m = geometry::MetricSpec::euclidean(2);
  auto hw = std::make_shared<HWPair>(2, E("v*exp(0.4*x1 - 0.3*x2) + 0.1*x1"), E("1"));
  for (int s = 0; s < 20; ++s) {
    const Vec x = rng.point(2, -1.0, 1.0);
    const double v = rng.uniform(0.5, 2.0);
    const Vec xdot = rng.velocity(Matrix::identity(2), v);
    expr::DenseJet W;
    hw->W(x, v, 1, W);
    const Vec omega = {W.d(0), W.d(1), W.d(2)};
    const Vec a = force_closed_form(omega, m, x, xdot);
    const Vec b = force_hw(*hw, m, x, xdot);
    CHECK(testing_support::max_abs_diff(a, b) < 1e-13);
  }
}

TEST_CASE("force fields dispatch to their source") {
  const auto m = geometry::MetricSpec::euclidean(2);
  auto hw = std::make_shared<HWPair>(2, E("v*exp(0.5*x1)"), E("w"));
  const auto f_hw = ForceField::from_hw(hw, m);
  const auto f_ab = ForceField::from_ab(std::make_shared<DerivedAB>(hw), m);
  const Vec x = {0.3, -0.4}, xdot = {0.6, 0.9};
  CHECK(testing_support::max_abs_diff(f_hw(x, xdot), f_ab(x, xdot)) < 1e-14);
  CHECK(f_hw.source() == ForceField::Source::HW);
  const auto custom = ForceField::custom(Es({"x1 + xdot2", "v"}), m);
  const Vec F = custom(x, xdot);
  CHECK(F[0] == doctest::Approx(1.2));
  CHECK(F[1] == doctest::Approx(std::hypot(0.6, 0.9)));
  CHECK_THROWS_AS(ForceField::custom(Es({"x3", "0"}), m), InvalidArgument);
}
