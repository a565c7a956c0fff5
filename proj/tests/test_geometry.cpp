#include <doctest.h>

#include <cmath>

#include "nshift/geometry.hpp"
#include "support.hpp"

using namespace nshift;
using namespace nshift::geometry;
using testing_support::Rng;

namespace {

expr::FieldExpr E(const char* s) { return expr::FieldExpr::parse(s); }

// Christoffel symbols from central differences of the metric.
Christoffel christoffel_fd(const MetricSpec& m, const Vec& x) {
  const int n = m.dimension();
  const double h = 1e-5;
  std::vector<Matrix> dg;
  for (int k = 0; k < n; ++k) {
    Vec up = x, dn = x;
    up[k] += h;
    dn[k] -= h;
    const Matrix gu = m.metric_at(up), gd = m.metric_at(dn);
    Matrix d(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d(i, j) = (gu(i, j) - gd(i, j)) / (2 * h);
    dg.push_back(d);
  }
  const Matrix gi = spd_inverse(m.metric_at(x));
  Christoffel c{n, std::vector<double>(static_cast<std::size_t>(n) * n * n, 0.0)};
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += 0.5 * gi(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        c.data[(static_cast<std::size_t>(k) * n + i) * n + j] = s;
      }
  return c;
}

MetricSpec explicit_metric() {
  return MetricSpec::explicit_matrix(
      3, {E("2 + sin(x1)"), E("0.3*x2"), E("0"), E("0.3*x2"), E("1 + x1*x1"), E("0.1*x3"), E("0"),
          E("0.1*x3"), E("exp(0.2*x2)")});
}

}  // namespace

TEST_CASE("Christoffel symbols match differences of the metric") {
  Rng rng(21);
  const std::vector<MetricSpec> metrics = {
      MetricSpec::conformal(3, E("0.3*x1 - 0.2*sin(x2*x3)")), explicit_metric(),
      MetricSpec::conformal(2, E("0.5*log(1 + x1*x1 + x2*x2)"))};
  for (const auto& m : metrics) {
    for (int s = 0; s < 20; ++s) {
      const Vec x = rng.point(m.dimension(), -0.7, 0.7);
      const auto c = christoffel(m, x);
      const auto fd = christoffel_fd(m, x);
      for (std::size_t k = 0; k < c.data.size(); ++k) CHECK(c.data[k] == doctest::Approx(fd.data[k]).epsilon(1e-7));
      const int n = m.dimension();
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) CHECK(c(k, i, j) == c(k, j, i));
    }
  }
  const auto flat = christoffel(MetricSpec::euclidean(3), Vec{0.1, 0.2, 0.3});
  for (double v : flat.data) CHECK(v == 0.0);
}

TEST_CASE("metric validation") {
  const auto bad = MetricSpec::conformal(2, E("x1"));
  CHECK_NOTHROW(bad.metric_at(Vec{1.0, 0.0}));
  const auto indefinite = MetricSpec::explicit_matrix(2, {E("1"), E("2"), E("2"), E("1")});
  CHECK_THROWS_AS(indefinite.metric_at(Vec{0.0, 0.0}), DomainError);
  CHECK_THROWS_AS(MetricSpec::explicit_matrix(2, {E("1"), E("x1"), E("0"), E("1")}), InvalidArgument);
  CHECK_THROWS_AS(MetricSpec::conformal(2, E("x3")), InvalidArgument);
  CHECK_THROWS(MetricSpec::euclidean(1));
}

TEST_CASE("lowering and raising are inverse") {
  Rng rng(22);
  const auto m = explicit_metric();
  for (int s = 0; s < 20; ++s) {
    const TangentVector t{rng.point(3, -0.5, 0.5), rng.point(3, -2.0, 2.0)};
    const auto back = raise(m, lower(m, t));
    for (int i = 0; i < 3; ++i) CHECK(back.components[i] == doctest::Approx(t.components[i]).epsilon(1e-13));
    CHECK(inner(m.metric_at(t.base), t.components, t.components) ==
          doctest::Approx(dot(lower(m, t).components, t.components)));
  }
}

TEST_CASE("generator words") {
  const auto w = parse_word("g1 g2^-2*g1^3");
  REQUIRE(w.size() == 3);
  CHECK(w[1].generator == 1);
  CHECK(w[1].power == -2);
  CHECK(parse_word(format_word(w)).size() == 3);
  CHECK(format_word(parse_word(format_word(w))) == format_word(w));
  CHECK(parse_word("").empty());
  CHECK(parse_word("e").empty());
  CHECK_THROWS_AS(parse_word("h1"), InvalidArgument);
  CHECK_THROWS_AS(parse_word("g0"), InvalidArgument);
  CHECK_THROWS_AS(parse_word("g1^"), InvalidArgument);
}

TEST_CASE("deck translations") {
  const CoveringManifold torus(MetricSpec::euclidean(2), {{2.0, 0.0}, {0.0, 3.0}});
  const Vec x = {0.25, -0.5};
  const auto y = deck_apply(torus, parse_word("g1 g2^-1"), x);
  CHECK(y[0] == 2.25);
  CHECK(y[1] == -3.5);
  const auto back = deck_apply(torus, parse_word("g1 g2^-1 g2 g1^-1"), x);
  CHECK(back == x);
  CHECK(torus.translation(parse_word("g1 g1^-1"))[0] == 0.0);
  CHECK_THROWS_AS(deck_apply(torus, parse_word("g3"), x), InvalidArgument);
  // Generators must preserve the metric.
  CHECK_THROWS_AS(CoveringManifold(MetricSpec::conformal(2, E("0.1*x1")), {{1.0, 0.0}}), InvalidArgument);
  CHECK_NOTHROW(CoveringManifold(MetricSpec::conformal(2, E("0.1*sin(x1)")), {{2 * M_PI, 0.0}}));
}

TEST_CASE("grid indexing round trip") {
  const Hypersurface s(4, {E("u1"), E("u2"), E("u3"), E("u1*u2*u3")},
                       {{0.0, 1.0, 3, false}, {0.0, 1.0, 4, true}, {-1.0, 1.0, 5, false}}, {0.0, 0.0, 0.0}, 1);
  CHECK(s.node_count() == 60);
  for (std::size_t f = 0; f < s.node_count(); ++f) {
    const auto idx = s.node_index(f);
    CHECK(s.flat_index(idx) == f);
  }
  CHECK(s.node_index(1)[2] == 1);  // last axis varies fastest
  CHECK(s.axes()[1].spacing() == 0.25);  // closed axes omit the endpoint
  CHECK(s.axes()[0].spacing() == 0.5);
  CHECK(s.axes()[2].at(4) == 1.0);
}

TEST_CASE("tangents, normals and orientation") {
  auto sphere = [](int orientation) {
    return Hypersurface(3, {E("sin(u1)*cos(u2)"), E("sin(u1)*sin(u2)"), E("cos(u1)")},
                        {{0.2, 2.9, 8, false}, {0.0, 2 * M_PI, 12, true}}, {1.5, 0.0}, orientation);
  };
  const auto m = MetricSpec::euclidean(3);
  for (int orientation : {1, -1}) {
    const auto s = sphere(orientation);
    const auto frames = surface_frames(s, m);
    REQUIRE(frames.size() == s.node_count());
    for (const auto& f : frames) {
      for (int i = 0; i < 3; ++i) CHECK(f.normal[i] == doctest::Approx(orientation * f.x[i]).epsilon(1e-13));
      for (const auto& t : f.tangents) CHECK(std::abs(dot(t, f.normal)) < 1e-14);
    }
  }
  // Exact tangents against differences of the embedding.
  const auto s = sphere(1);
  Vec x;
  std::vector<Vec> t;
  const Vec u = {0.9, 1.3};
  s.embed_with_tangents(u, x, t);
  for (int k = 0; k < 2; ++k) {
    Vec up = u, dn = u;
    up[k] += 1e-6;
    dn[k] -= 1e-6;
    const Vec a = s.embed(up), b = s.embed(dn);
    for (int i = 0; i < 3; ++i) CHECK(t[k][i] == doctest::Approx((a[i] - b[i]) / 2e-6).epsilon(1e-8));
  }
}

TEST_CASE("unit normal on a curved metric") {
  Rng rng(23);
  const auto m = explicit_metric();
  for (int s = 0; s < 20; ++s) {
    const Vec x = rng.point(3, -0.5, 0.5);
    const Matrix g = m.metric_at(x);
    const std::vector<Vec> tangents = {rng.point(3, -1, 1), rng.point(3, -1, 1)};
    const Vec nrm = unit_normal(g, spd_inverse(g), tangents, 1);
    CHECK(inner(g, nrm, nrm) == doctest::Approx(1.0).epsilon(1e-13));
    for (const auto& t : tangents) CHECK(std::abs(inner(g, nrm, t)) < 1e-12);
    Matrix frame(3);
    for (int i = 0; i < 3; ++i) frame(i, 0) = tangents[0][i], frame(i, 1) = tangents[1][i], frame(i, 2) = nrm[i];
    CHECK(determinant(frame) > 0.0);
  }
  const Matrix g = Matrix::identity(3);
  CHECK(gram_determinant(g, {{1, 0, 0}, {0, 2, 0}}) == doctest::Approx(4.0));
  CHECK_THROWS_AS(unit_normal(g, g, {{1, 0, 0}, {2, 0, 0}}, 1), DomainError);
}
