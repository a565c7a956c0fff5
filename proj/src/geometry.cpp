#include "nshift/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <sstream>

#include "nshift/error.hpp"

namespace nshift::geometry {

std::vector<std::string> coordinate_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> parameter_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i < n; ++i) names.push_back("u" + std::to_string(i));
  return names;
}

namespace {

std::string format_point(std::span<const double> x) {
  std::ostringstream s;
  s.precision(17);
  s << "(";
  for (std::size_t i = 0; i < x.size(); ++i) s << (i ? ", " : "") << x[i];
  s << ")";
  return s.str();
}

expr::Program bind_coordinates(const expr::FieldExpr& e, int n, const char* what) {
  const auto names = coordinate_names(n);
  try {
    return expr::Program(e, names);
  } catch (const expr::UnboundVariable& err) {
    throw InvalidArgument(std::string(what) + " '" + e.source() + "' uses variable '" +
                          err.name() + "' outside x1..x" + std::to_string(n));
  }
}

void check_dimension(int n) {
  if (n < 2 || n > expr::kMaxDirections - 1) {
    throw InvalidArgument("dimension must be in [2, " + std::to_string(expr::kMaxDirections - 1) +
                          "], got " + std::to_string(n));
  }
}

}  // namespace

Vec Christoffel::contract(std::span<const double> a, std::span<const double> b) const {
  Vec out(n, 0.0);
  if (data.empty()) return out;
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) s += (*this)(k, i, j) * a[i] * b[j];
    }
    out[k] = s;
  }
  return out;
}

MetricSpec MetricSpec::euclidean(int n) {
  check_dimension(n);
  MetricSpec m;
  m.n_ = n;
  m.kind_ = Kind::Euclidean;
  return m;
}

MetricSpec MetricSpec::conformal(int n, const expr::FieldExpr& lambda) {
  check_dimension(n);
  MetricSpec m;
  m.n_ = n;
  m.kind_ = Kind::Conformal;
  m.lambda_ = bind_coordinates(lambda, n, "conformal factor");
  return m;
}

MetricSpec MetricSpec::explicit_matrix(int n, const std::vector<expr::FieldExpr>& entries) {
  check_dimension(n);
  if (entries.size() != static_cast<std::size_t>(n) * n) {
    throw InvalidArgument("explicit metric needs " + std::to_string(n * n) + " entries");
  }
  MetricSpec m;
  m.n_ = n;
  m.kind_ = Kind::Explicit;
  m.entry_exprs_ = entries;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const auto& e = entries[static_cast<std::size_t>(i) * n + j];
      if (!expr::structurally_equal(e, entries[static_cast<std::size_t>(j) * n + i])) {
        throw InvalidArgument("explicit metric is not symmetric at (" + std::to_string(i + 1) +
                              "," + std::to_string(j + 1) + ")");
      }
      m.upper_.push_back(bind_coordinates(e, n, "metric entry"));
    }
  }
  return m;
}

void MetricSpec::evaluate(std::span<const double> x, Matrix& g, std::vector<Matrix>* dg) const {
  const int n = n_;
  g = Matrix(n);
  if (dg) dg->assign(n, Matrix(n));
  switch (kind_) {
    case Kind::Euclidean:
      g = Matrix::identity(n);
      return;
    case Kind::Conformal: {
      const int order = dg ? 1 : 0;
      const expr::DenseJet lam = lambda_.jet(x, n, order);
      const double e = std::exp(2.0 * lam.value());
      for (int i = 0; i < n; ++i) g(i, i) = e;
      if (dg) {
        for (int k = 0; k < n; ++k) {
          const double d = 2.0 * e * lam.d(k);
          for (int i = 0; i < n; ++i) (*dg)[k](i, i) = d;
        }
      }
      return;
    }
    case Kind::Explicit: {
      const int order = dg ? 1 : 0;
      std::size_t idx = 0;
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j, ++idx) {
          const expr::DenseJet e = upper_[idx].jet(x, n, order);
          g(i, j) = g(j, i) = e.value();
          if (dg) {
            for (int k = 0; k < n; ++k) (*dg)[k](i, j) = (*dg)[k](j, i) = e.d(k);
          }
        }
      }
      return;
    }
  }
}

Matrix MetricSpec::metric_at(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_) throw InvalidArgument("point has wrong dimension");
  Matrix g;
  evaluate(x, g, nullptr);
  if (kind_ != Kind::Euclidean) {
    Matrix l;
    if (const int bad = cholesky(g, l)) {
      throw DomainError("metric is not positive-definite at " + format_point(x) +
                        ": leading principal minor " + std::to_string(bad) + " is not positive");
    }
  }
  return g;
}

LocalGeometry MetricSpec::local(std::span<const double> x, bool with_christoffel) const {
  if (static_cast<int>(x.size()) != n_) throw InvalidArgument("point has wrong dimension");
  LocalGeometry out;
  const int n = n_;
  if (kind_ == Kind::Euclidean) {
    out.g = Matrix::identity(n);
    out.g_inv = Matrix::identity(n);
    if (with_christoffel) {
      out.gamma.n = n;
      out.gamma.data.assign(static_cast<std::size_t>(n) * n * n, 0.0);
    }
    return out;
  }
  std::vector<Matrix> dg;
  evaluate(x, out.g, with_christoffel ? &dg : nullptr);
  if (kind_ == Kind::Conformal) {
    const double inv = 1.0 / out.g(0, 0);
    out.g_inv = Matrix(n);
    for (int i = 0; i < n; ++i) out.g_inv(i, i) = inv;
  } else {
    try {
      out.g_inv = spd_inverse(out.g);
    } catch (const DomainError& e) {
      throw DomainError(std::string("metric at ") + format_point(x) + ": " + e.what());
    }
  }
  if (!with_christoffel) return out;

  // Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
  Christoffel& gam = out.gamma;
  gam.n = n;
  gam.data.assign(static_cast<std::size_t>(n) * n * n, 0.0);
  Vec lowered(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      for (int l = 0; l < n; ++l) lowered[l] = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
      for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += out.g_inv(k, l) * lowered[l];
        gam.data[(static_cast<std::size_t>(k) * n + i) * n + j] = s;
        gam.data[(static_cast<std::size_t>(k) * n + j) * n + i] = s;
      }
    }
  }
  return out;
}

Matrix metric_at(const MetricSpec& m, std::span<const double> x) { return m.metric_at(x); }

Christoffel christoffel(const MetricSpec& m, std::span<const double> x) {
  return m.local(x, true).gamma;
}

Covector lower(const MetricSpec& m, const TangentVector& v) {
  return {v.base, m.metric_at(v.base).apply(v.components)};
}

TangentVector raise(const MetricSpec& m, const Covector& c) {
  return {c.base, m.local(c.base, false).g_inv.apply(c.components)};
}

// ---------------------------------------------------------------------------

GeneratorWord parse_word(std::string_view text) {
  GeneratorWord word;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) -> void {
    throw InvalidArgument("malformed generator word '" + std::string(text) + "' at offset " +
                          std::to_string(i) + ": " + why);
  };
  auto skip = [&] {
    while (i < text.size() &&
           (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == '*')) {
      ++i;
    }
  };
  skip();
  if (text.substr(i) == "e") return word;
  while (i < text.size()) {
    if (text[i] != 'g') fail("expected 'g'");
    ++i;
    std::size_t start = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) fail("expected generator number");
    const int gen = std::stoi(std::string(text.substr(start, i - start)));
    if (gen < 1) fail("generators are numbered from 1");
    int power = 1;
    if (i < text.size() && text[i] == '^') {
      ++i;
      start = i;
      if (i < text.size() && (text[i] == '-' || text[i] == '+')) ++i;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
      if (i == start || (i == start + 1 && !std::isdigit(static_cast<unsigned char>(text[start])))) {
        fail("expected integer exponent");
      }
      power = std::stoi(std::string(text.substr(start, i - start)));
    }
    if (power != 0) word.push_back({gen - 1, power});
    skip();
  }
  return word;
}

std::string format_word(const GeneratorWord& word) {
  if (word.empty()) return "e";
  std::string s;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (i) s += " ";
    s += "g" + std::to_string(word[i].generator + 1);
    if (word[i].power != 1) s += "^" + std::to_string(word[i].power);
  }
  return s;
}

CoveringManifold::CoveringManifold(MetricSpec metric, std::vector<Vec> generators)
    : metric_(std::move(metric)), generators_(std::move(generators)) {
  const int n = metric_.dimension();
  for (const auto& g : generators_) {
    if (static_cast<int>(g.size()) != n) {
      throw InvalidArgument("deck generator has wrong dimension");
    }
  }
  if (generators_.empty() || metric_.kind() == MetricSpec::Kind::Euclidean) return;
  // 3^n sample grid on [-1, 1]^n.
  std::vector<Vec> samples;
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= 3;
  for (std::size_t f = 0; f < total; ++f) {
    Vec p(n);
    std::size_t r = f;
    for (int i = 0; i < n; ++i) {
      p[i] = static_cast<double>(r % 3) - 1.0;
      r /= 3;
    }
    samples.push_back(std::move(p));
  }
  const double defect = metric_invariance_defect(samples);
  if (defect > 1e-12) {
    throw InvalidArgument("deck generators do not preserve the metric (defect " +
                          std::to_string(defect) + ")");
  }
}

Vec CoveringManifold::translation(const GeneratorWord& word) const {
  const int n = dimension();
  std::vector<long long> count(generators_.size(), 0);
  for (const auto& letter : word) {
    if (letter.generator < 0 || letter.generator >= static_cast<int>(generators_.size())) {
      throw InvalidArgument("word uses generator g" + std::to_string(letter.generator + 1) +
                            " but only " + std::to_string(generators_.size()) + " are defined");
    }
    count[letter.generator] += letter.power;
  }
  Vec t(n, 0.0);
  for (std::size_t k = 0; k < generators_.size(); ++k) {
    if (count[k] == 0) continue;
    for (int i = 0; i < n; ++i) t[i] += static_cast<double>(count[k]) * generators_[k][i];
  }
  return t;
}

Vec CoveringManifold::deck_apply(const GeneratorWord& word, std::span<const double> x) const {
  const Vec t = translation(word);
  Vec y(x.begin(), x.end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += t[i];
  return y;
}

double CoveringManifold::metric_invariance_defect(std::span<const Vec> samples) const {
  double worst = 0.0;
  const int n = dimension();
  for (const auto& p : samples) {
    const Matrix g0 = metric_.metric_at(p);
    for (const auto& gen : generators_) {
      Vec q = p;
      for (int i = 0; i < n; ++i) q[i] += gen[i];
      const Matrix g1 = metric_.metric_at(q);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const double scale = std::max(1.0, std::abs(g0(i, j)));
          worst = std::max(worst, std::abs(g1(i, j) - g0(i, j)) / scale);
        }
      }
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

double ParamAxis::spacing() const {
  if (closed) return (hi - lo) / nodes;
  return nodes > 1 ? (hi - lo) / (nodes - 1) : 0.0;
}

double ParamAxis::at(int i) const { return lo + i * spacing(); }

Hypersurface::Hypersurface(int n, std::vector<expr::FieldExpr> embedding,
                           std::vector<ParamAxis> axes, Vec base, int orientation)
    : n_(n),
      embedding_(std::move(embedding)),
      axes_(std::move(axes)),
      base_(std::move(base)),
      orientation_(orientation) {
  check_dimension(n);
  if (static_cast<int>(embedding_.size()) != n) {
    throw InvalidArgument("hypersurface embedding needs " + std::to_string(n) + " expressions");
  }
  if (static_cast<int>(axes_.size()) != n - 1 || static_cast<int>(base_.size()) != n - 1) {
    throw InvalidArgument("hypersurface needs " + std::to_string(n - 1) +
                          " parameter axes and base coordinates");
  }
  if (orientation_ != 1 && orientation_ != -1) throw InvalidArgument("orientation must be +1 or -1");
  for (const auto& a : axes_) {
    if (a.nodes < 1 || !(a.hi > a.lo)) throw InvalidArgument("parameter axis needs hi > lo and nodes >= 1");
  }
  const auto names = parameter_names(n);
  for (const auto& e : embedding_) {
    try {
      programs_.emplace_back(e, names);
    } catch (const expr::UnboundVariable& err) {
      throw InvalidArgument("embedding '" + e.source() + "' uses variable '" + err.name() +
                            "' outside u1..u" + std::to_string(n - 1));
    }
  }
}

std::size_t Hypersurface::node_count() const {
  std::size_t total = 1;
  for (const auto& a : axes_) total *= static_cast<std::size_t>(a.nodes);
  return total;
}

std::vector<int> Hypersurface::node_index(std::size_t flat) const {
  std::vector<int> idx(axes_.size());
  for (int k = static_cast<int>(axes_.size()) - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(flat % axes_[k].nodes);
    flat /= axes_[k].nodes;
  }
  return idx;
}

std::size_t Hypersurface::flat_index(std::span<const int> index) const {
  std::size_t flat = 0;
  for (std::size_t k = 0; k < axes_.size(); ++k) flat = flat * axes_[k].nodes + index[k];
  return flat;
}

Vec Hypersurface::node_parameters(std::size_t flat) const {
  const auto idx = node_index(flat);
  Vec u(axes_.size());
  for (std::size_t k = 0; k < axes_.size(); ++k) u[k] = axes_[k].at(idx[k]);
  return u;
}

Vec Hypersurface::embed(std::span<const double> u) const {
  Vec x(n_);
  for (int i = 0; i < n_; ++i) x[i] = programs_[i].value(u);
  return x;
}

void Hypersurface::embed_with_tangents(std::span<const double> u, Vec& x,
                                       std::vector<Vec>& tangents) const {
  const int m = n_ - 1;
  x.assign(n_, 0.0);
  tangents.assign(m, Vec(n_, 0.0));
  expr::DenseJet j;
  for (int i = 0; i < n_; ++i) {
    programs_[i].jet(u, m, 1, j);
    x[i] = j.value();
    for (int k = 0; k < m; ++k) tangents[k][i] = j.d(k);
  }
}

double gram_determinant(const Matrix& g, const std::vector<Vec>& vectors) {
  const int m = static_cast<int>(vectors.size());
  Matrix gram(m);
  for (int a = 0; a < m; ++a) {
    for (int b = a; b < m; ++b) gram(a, b) = gram(b, a) = inner(g, vectors[a], vectors[b]);
  }
  return determinant(gram);
}

Vec unit_normal(const Matrix& g, const Matrix& g_inv, const std::vector<Vec>& tangents,
                int orientation) {
  const int n = g.size();
  const double gram = gram_determinant(g, tangents);
  if (!(gram > 1e-10)) {
    throw DomainError("degenerate tangent frame (Gram determinant " + std::to_string(gram) + ")");
  }
  // c_j = det[tau_1 .. tau_{n-1}, e_j]
  Vec c(n);
  Matrix cols(n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n - 1; ++k) {
      for (int i = 0; i < n; ++i) cols(i, k) = tangents[k][i];
    }
    for (int i = 0; i < n; ++i) cols(i, n - 1) = i == j ? 1.0 : 0.0;
    c[j] = determinant(cols);
  }
  Vec normal = g_inv.apply(c);
  const double norm = std::sqrt(dot(c, normal));
  for (auto& v : normal) v *= orientation / norm;
  return normal;
}

SurfaceFrame surface_frame(const Hypersurface& s, const MetricSpec& m, std::span<const double> u) {
  SurfaceFrame f;
  s.embed_with_tangents(u, f.x, f.tangents);
  const LocalGeometry geo = m.local(f.x, false);
  try {
    f.normal = unit_normal(geo.g, geo.g_inv, f.tangents, s.orientation());
  } catch (const DomainError& e) {
    throw DomainError(std::string(e.what()) + " at u=" + format_point(u));
  }
  return f;
}

std::vector<SurfaceFrame> surface_frames(const Hypersurface& s, const MetricSpec& m) {
  const std::size_t count = s.node_count();
  std::vector<SurfaceFrame> frames(count);
  std::vector<Matrix> metrics(count);
  for (std::size_t f = 0; f < count; ++f) {
    const Vec u = s.node_parameters(f);
    frames[f] = surface_frame(s, m, u);
    metrics[f] = m.metric_at(frames[f].x);
  }
  // Start from the node nearest the base point.
  const auto& axes = s.axes();
  std::vector<int> start(axes.size());
  for (std::size_t k = 0; k < axes.size(); ++k) {
    int best = 0;
    double best_d = INFINITY;
    for (int i = 0; i < axes[k].nodes; ++i) {
      double d = std::abs(axes[k].at(i) - s.base()[k]);
      if (axes[k].closed) d = std::min(d, std::abs(d - (axes[k].hi - axes[k].lo)));
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    start[k] = best;
  }
  std::vector<char> seen(count, 0);
  std::deque<std::size_t> queue;
  const std::size_t root = s.flat_index(start);
  seen[root] = 1;
  queue.push_back(root);
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    const auto idx = s.node_index(cur);
    for (std::size_t k = 0; k < axes.size(); ++k) {
      for (int step : {-1, 1}) {
        auto nb = idx;
        nb[k] += step;
        if (nb[k] < 0 || nb[k] >= axes[k].nodes) {
          if (!axes[k].closed) continue;
          nb[k] = (nb[k] + axes[k].nodes) % axes[k].nodes;
        }
        const std::size_t f = s.flat_index(nb);
        if (seen[f]) continue;
        seen[f] = 1;
        if (inner(metrics[cur], frames[cur].normal, frames[f].normal) < 0.0) {
          for (auto& v : frames[f].normal) v = -v;
        }
        queue.push_back(f);
      }
    }
  }
  return frames;
}

}  // namespace nshift::geometry
