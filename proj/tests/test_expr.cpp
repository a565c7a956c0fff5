#include <doctest.h>

#include <cmath>

#include "nshift/expr.hpp"
#include "support.hpp"

using namespace nshift;
using namespace nshift::expr;
using testing_support::ExprGen;
using testing_support::Rng;

namespace {

double value_of(const char* s, const Env& env = {}) { return eval(FieldExpr::parse(s), env); }

}  // namespace

TEST_CASE("operator precedence and associativity") {
  CHECK(value_of("2*3+4") == 10.0);
  CHECK(value_of("2+3*4") == 14.0);
  CHECK(value_of("8/4/2") == 1.0);
  CHECK(value_of("8-4-2") == 2.0);
  CHECK(value_of("2^3^2") == 64.0);  // left-associative
  CHECK(value_of("-2^2") == 4.0);    // unary minus binds tighter than ^
  CHECK(value_of("-(2^2)") == -4.0);
  CHECK(value_of("2*-3") == -6.0);
  CHECK(value_of("pi") == M_PI);
  CHECK(value_of("1.5e2 + .5") == 150.5);
  CHECK(value_of("pow(2, 10)") == 1024.0);
  CHECK(value_of("x^2 + y", {{"x", 3.0}, {"y", 1.0}}) == 10.0);
}

TEST_CASE("free variables in order of first appearance") {
  const auto e = FieldExpr::parse("v*exp(x2) + x1*v - pi");
  REQUIRE(e.free_vars().size() == 3);
  CHECK(e.free_vars()[0] == "v");
  CHECK(e.free_vars()[1] == "x2");
  CHECK(e.free_vars()[2] == "x1");
  CHECK(e.depends_on("x1"));
  CHECK_FALSE(e.depends_on("x3"));
}

TEST_CASE("parse errors carry kind and offset") {
  auto kind_of = [](const char* s) {
    try {
      FieldExpr::parse(s);
    } catch (const ParseError& e) {
      return std::make_pair(e.kind(), e.offset());
    }
    FAIL("no error for " << s);
    return std::make_pair(ParseError::Kind::Syntax, std::size_t{0});
  };
  CHECK(kind_of("1 +").first == ParseError::Kind::Syntax);
  CHECK(kind_of("1 +").second == 3);
  CHECK(kind_of("(x").first == ParseError::Kind::Syntax);
  CHECK(kind_of("x y").second == 2);
  CHECK(kind_of("foo(1)").first == ParseError::Kind::UnknownFunction);
  CHECK(kind_of("pow(1)").first == ParseError::Kind::Arity);
  CHECK(kind_of("sin(1, 2)").first == ParseError::Kind::Arity);
  CHECK(kind_of("").first == ParseError::Kind::Syntax);
  CHECK_THROWS_AS(value_of("x + 1"), UnboundVariable);
}

TEST_CASE("domain errors name the subexpression") {
  CHECK_THROWS_AS(value_of("log(0)"), DomainError);
  CHECK_THROWS_AS(value_of("sqrt(-1)"), DomainError);
  CHECK_THROWS_AS(value_of("1/(x-x)", {{"x", 2.0}}), DomainError);
  CHECK_THROWS_AS(value_of("(-2)^0.5"), DomainError);
  CHECK(value_of("(-2)^3") == -8.0);
  try {
    value_of("1 + log(x - 1)", {{"x", 1.0}});
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("unparse reparses to an identical tree") {
  Rng rng(11);
  ExprGen gen(rng, {"x1", "x2", "v"});
  for (int k = 0; k < 200; ++k) {
    const auto e = FieldExpr::parse(gen.make(4));
    const auto back = FieldExpr::parse(e.unparse());
    CHECK(structurally_equal(e, back));
    CHECK(back.unparse() == e.unparse());
  }
}

TEST_CASE("jets match finite differences on random expressions") {
  Rng rng(12);
  ExprGen gen(rng, {"x1", "x2", "v"});
  const std::vector<std::string> layout = {"x1", "x2", "v"};
  int checked = 0;
  for (int k = 0; k < 150; ++k) {
    const auto e = FieldExpr::parse(gen.make(3));
    const Program p(e, layout);
    const Vec at = rng.point(3, -0.8, 0.8);
    DenseJet j;
    try {
      p.jet(at, 3, 2, j);
    } catch (const DomainError&) {
      continue;
    }
    CHECK(j.value() == doctest::Approx(p.value(at)).epsilon(1e-14));
    const double h = 1e-5;
    for (int i = 0; i < 3; ++i) {
      Vec up = at, dn = at;
      up[i] += h;
      dn[i] -= h;
      const DenseJet ju = p.jet(up, 3, 1), jd = p.jet(dn, 3, 1);
      const double fd = (ju.value() - jd.value()) / (2 * h);
      CHECK(std::abs(j.d(i) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
      for (int q = 0; q < 3; ++q) {
        const double fd2 = (ju.d(q) - jd.d(q)) / (2 * h);
        CHECK(std::abs(j.d2(i, q) - fd2) <= 1e-6 * std::max(1.0, std::abs(fd2)));
      }
    }
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("jets are exact on closed-form derivatives") {
  const auto e = FieldExpr::parse("exp(x)*sin(y) + x^3*y - sqrt(x*x + 1)");
  const double x = 0.7, y = -0.4;
  const auto j = eval_jet(e, {{"x", x}, {"y", y}}, {"x", "y"});
  const double s = std::sqrt(x * x + 1);
  CHECK(j.d("x") == doctest::Approx(std::exp(x) * std::sin(y) + 3 * x * x * y - x / s).epsilon(1e-15));
  CHECK(j.d("y") == doctest::Approx(std::exp(x) * std::cos(y) + x * x * x).epsilon(1e-15));
  CHECK(j.d2("x", "x") ==
        doctest::Approx(std::exp(x) * std::sin(y) + 6 * x * y - 1 / (s * s * s)).epsilon(1e-14));
  CHECK(j.d2("x", "y") == doctest::Approx(std::exp(x) * std::cos(y) + 3 * x * x).epsilon(1e-15));
  CHECK(j.d2("y", "x") == j.d2("x", "y"));
  CHECK(j.d2("y", "y") == doctest::Approx(-std::exp(x) * std::sin(y)).epsilon(1e-15));
}

TEST_CASE("powers with real exponents differentiate in both arguments") {
  const auto j = eval_jet(FieldExpr::parse("x^y"), {{"x", 2.0}, {"y", 1.5}}, {"x", "y"});
  CHECK(j.value == doctest::Approx(std::pow(2.0, 1.5)));
  CHECK(j.d("x") == doctest::Approx(1.5 * std::pow(2.0, 0.5)));
  CHECK(j.d("y") == doctest::Approx(std::pow(2.0, 1.5) * std::log(2.0)));
  CHECK(j.d2("x", "y") == doctest::Approx(std::pow(2.0, 0.5) * (1 + 1.5 * std::log(2.0))));
  int k = 0;
  CHECK(is_integer_exponent(FieldExpr::parse("-3").root(), &k));
  CHECK(k == -3);
  CHECK_FALSE(is_integer_exponent(FieldExpr::parse("0.5").root()));
}

TEST_CASE("constants and derivative order") {
  const Program p(FieldExpr::parse("3 + 4"), std::vector<std::string>{});
  CHECK(p.is_constant());
  CHECK(p.value({}) == 7.0);
  const std::vector<std::string> layout = {"a"};
  const Program q(FieldExpr::parse("a*a"), layout);
  const double at[] = {3.0};
  const auto j1 = q.jet(at, 1, 1);
  CHECK(j1.order() == 1);
  CHECK(j1.d(0) == 6.0);
  CHECK_THROWS_AS(q.jet(at, 2, 2), InvalidArgument);
}
