#pragma once

// Riemannian metric evaluation, Christoffel symbols, translation deck groups
// on R^n charts, and parametric hypersurfaces with tangent and normal frames.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nshift/expr.hpp"
#include "nshift/linalg.hpp"

namespace nshift::geometry {

// "x1".."xn"
std::vector<std::string> coordinate_names(int n);
// "u1".."u(n-1)"
std::vector<std::string> parameter_names(int n);

// Gamma^k_ij stored as data[(k * n + i) * n + j].
struct Christoffel {
  int n = 0;
  std::vector<double> data;

  double operator()(int k, int i, int j) const {
    return data[(static_cast<std::size_t>(k) * n + i) * n + j];
  }
  // Gamma^k_ij a^i b^j for every k.
  Vec contract(std::span<const double> a, std::span<const double> b) const;
};

struct LocalGeometry {
  Matrix g;
  Matrix g_inv;
  Christoffel gamma;  // empty unless requested
};

class MetricSpec {
 public:
  enum class Kind { Euclidean, Conformal, Explicit };

  MetricSpec() = default;
  static MetricSpec euclidean(int n);
  // g_ij = exp(2 lambda) delta_ij, lambda a function of x1..xn.
  static MetricSpec conformal(int n, const expr::FieldExpr& lambda);
  // Row-major n*n entries of x1..xn; mirrored entries must be identical.
  static MetricSpec explicit_matrix(int n, const std::vector<expr::FieldExpr>& entries);

  int dimension() const { return n_; }
  Kind kind() const { return kind_; }
  const expr::FieldExpr& conformal_factor() const { return lambda_.expression(); }
  const std::vector<expr::FieldExpr>& entries() const { return entry_exprs_; }

  // Throws DomainError naming the first non-positive leading minor.
  Matrix metric_at(std::span<const double> x) const;
  LocalGeometry local(std::span<const double> x, bool with_christoffel) const;

 private:
  // g and, when dg != nullptr, dg[k](i, j) = d g_ij / d x^k.
  void evaluate(std::span<const double> x, Matrix& g, std::vector<Matrix>* dg) const;

  int n_ = 0;
  Kind kind_ = Kind::Euclidean;
  expr::Program lambda_;
  std::vector<expr::FieldExpr> entry_exprs_;
  std::vector<expr::Program> upper_;  // entries (i <= j), row by row
};

Matrix metric_at(const MetricSpec& m, std::span<const double> x);
Christoffel christoffel(const MetricSpec& m, std::span<const double> x);

struct TangentVector {
  Vec base;
  Vec components;  // contravariant
};

struct Covector {
  Vec base;
  Vec components;  // covariant
};

Covector lower(const MetricSpec& m, const TangentVector& v);
TangentVector raise(const MetricSpec& m, const Covector& c);

// ---------------------------------------------------------------------------
// Deck transformations.

struct DeckLetter {
  int generator = 0;  // 0-based
  int power = 1;
};
using GeneratorWord = std::vector<DeckLetter>;

// Words are letters g1, g2, ... separated by whitespace or '*', each with an
// optional integer exponent: "g1 g1^-1", "g1*g2^2". "" and "e" are the
// identity.
GeneratorWord parse_word(std::string_view text);
std::string format_word(const GeneratorWord& word);

class CoveringManifold {
 public:
  CoveringManifold() = default;
  // Checks that every generator preserves the metric on a sample grid.
  CoveringManifold(MetricSpec metric, std::vector<Vec> generators);

  const MetricSpec& metric() const { return metric_; }
  const std::vector<Vec>& generators() const { return generators_; }
  int dimension() const { return metric_.dimension(); }

  // Net translation of the word. Translations commute, so only the exponent
  // sum per generator matters; an identity word yields exact zeros.
  Vec translation(const GeneratorWord& word) const;
  Vec deck_apply(const GeneratorWord& word, std::span<const double> x) const;

  // max |g_ij(gen(x)) - g_ij(x)| over generators and sample points.
  double metric_invariance_defect(std::span<const Vec> samples) const;

 private:
  MetricSpec metric_;
  std::vector<Vec> generators_;
};

inline Vec deck_apply(const CoveringManifold& m, const GeneratorWord& word,
                      std::span<const double> x) {
  return m.deck_apply(word, x);
}

// ---------------------------------------------------------------------------
// Parametric hypersurfaces.

struct ParamAxis {
  double lo = 0.0;
  double hi = 1.0;
  int nodes = 2;
  bool closed = false;  // closed axes omit the endpoint hi (== lo on the loop)

  double spacing() const;
  double at(int i) const;
};

class Hypersurface {
 public:
  Hypersurface() = default;
  // `embedding` holds n expressions of u1..u(n-1); `orientation` is +1 or -1
  // and fixes the sign of det[tau_1 .. tau_{n-1}, n] at the base point.
  Hypersurface(int n, std::vector<expr::FieldExpr> embedding, std::vector<ParamAxis> axes,
               Vec base, int orientation);

  int dimension() const { return n_; }
  int parameter_count() const { return n_ - 1; }
  const std::vector<ParamAxis>& axes() const { return axes_; }
  const Vec& base() const { return base_; }
  int orientation() const { return orientation_; }
  const std::vector<expr::FieldExpr>& embedding() const { return embedding_; }

  std::size_t node_count() const;
  std::vector<int> node_index(std::size_t flat) const;  // first axis varies slowest
  std::size_t flat_index(std::span<const int> index) const;
  Vec node_parameters(std::size_t flat) const;

  Vec embed(std::span<const double> u) const;
  // x(u) and tangents[k] = dx/du^k, exact.
  void embed_with_tangents(std::span<const double> u, Vec& x, std::vector<Vec>& tangents) const;

 private:
  int n_ = 0;
  std::vector<expr::FieldExpr> embedding_;
  std::vector<expr::Program> programs_;
  std::vector<ParamAxis> axes_;
  Vec base_;
  int orientation_ = 1;
};

struct SurfaceFrame {
  Vec x;
  std::vector<Vec> tangents;
  Vec normal;  // contravariant, unit in g
};

// Unit normal g-orthogonal to the tangent covectors built from the cofactor
// covector of [tau_1 .. tau_{n-1}, .]; the sign follows the orientation.
// Throws DomainError when the Gram determinant of the tangents is <= 1e-10.
Vec unit_normal(const Matrix& g, const Matrix& g_inv, const std::vector<Vec>& tangents,
                int orientation);
double gram_determinant(const Matrix& g, const std::vector<Vec>& vectors);

SurfaceFrame surface_frame(const Hypersurface& s, const MetricSpec& m,
                           std::span<const double> u);
// Frames at every grid node; orientation fixed at the node nearest the base
// point and carried to the rest of the grid by neighbour continuity.
std::vector<SurfaceFrame> surface_frames(const Hypersurface& s, const MetricSpec& m);

}  // namespace nshift::geometry
