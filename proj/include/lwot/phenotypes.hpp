#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lwot/error.hpp"
#include "lwot/layerwise.hpp"
#include "lwot/measures.hpp"
#include "lwot/ot1d.hpp"
#include "lwot/util.hpp"

namespace lwot::phenotypes {

inline constexpr double kProbabilityTol = 1e-9;

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

// ---------------------------------------------------------------------------
// Atomic measures

inline double vertical_mean(const AtomicMeasure& mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu.w(i) * mu.y(i);
  return s / mu.total_mass();
}

inline double vertical_variance(const AtomicMeasure& mu) {
  const double m = vertical_mean(mu);
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu.w(i) * (mu.y(i) - m) * (mu.y(i) - m);
  return s / mu.total_mass();
}

inline void require_level(double l) {
  if (!(l > 0.0 && l <= 1.0)) throw Error(ErrorCode::InvalidQuantile, "quantile level must lie in (0, 1]");
}

/// Left-continuous vertical quantile; l = 1 gives the rooting depth.
inline double vertical_quantile(const AtomicMeasure& mu, double l) {
  require_level(l);
  return vertical_marginal(mu).quantile(l);
}

/// Integral over levels of the horizontal variance of each slice.
inline double layer_variance_integral(const AtomicMeasure& mu) {
  const auto lm = rescale(mu);
  double s = 0.0;
  for (std::size_t k = 0; k < lm.interval_count(); ++k) {
    const auto& sl = lm.slices()[k];
    std::vector<double> mean(sl.dim(), 0.0);
    for (std::size_t i = 0; i < sl.size(); ++i)
      for (std::size_t c = 0; c < sl.dim(); ++c) mean[c] += sl.weight(i) * sl.point(i)[c];
    double v = 0.0;
    for (std::size_t i = 0; i < sl.size(); ++i)
      v += sl.weight(i) * squared_distance(sl.point(i).data(), mean.data(), sl.dim());
    s += (lm.breakpoints()[k + 1] - lm.breakpoints()[k]) * v;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Gridded measures

struct EntropyReport {
  double total = 0.0;
  double layer_integral = 0.0;
  double vertical = 0.0;
};

inline void require_normalized(const GriddedMeasure& g) {
  if (std::abs(g.total_mass() - 1.0) > kProbabilityTol)
    throw Error(ErrorCode::NotProbability, "grid mass " + std::to_string(g.total_mass()) + " is not 1");
}

/// Vertical marginal density per layer.
inline std::vector<double> vertical_density(const GriddedMeasure& g) {
  std::vector<double> fv(g.layer_count(), 0.0);
  for (std::size_t j = 0; j < g.layer_count(); ++j)
    for (std::size_t h = 0; h < g.horizontal_cell_count(); ++h) fv[j] += g.at(j, h) * g.horizontal_volume(h);
  return fv;
}

/// Entropy in the convention S = integral of f log f, with 0 log 0 = 0.
inline EntropyReport shannon_entropy(const GriddedMeasure& g) {
  require_normalized(g);
  const auto fv = vertical_density(g);
  EntropyReport r;
  for (std::size_t j = 0; j < g.layer_count(); ++j) {
    const double dy = g.layer_height(j);
    double slice = 0.0;
    for (std::size_t h = 0; h < g.horizontal_cell_count(); ++h) {
      const double f = g.at(j, h), vol = g.horizontal_volume(h);
      r.total += xlogx(f) * vol * dy;
      if (fv[j] > 0.0) slice += xlogx(f / fv[j]) * vol;
    }
    r.layer_integral += fv[j] * dy * slice;
    r.vertical += xlogx(fv[j]) * dy;
  }
  return r;
}

inline void require_exponent(double r) {
  if (!(r >= 1.0) || !std::isfinite(r)) throw Error(ErrorCode::InvalidExponent, "internal energy needs r >= 1");
}

/// Integral of (f^V)^r over height.
inline double vertical_internal_energy(const GriddedMeasure& g, double r) {
  require_exponent(r);
  require_normalized(g);
  const auto fv = vertical_density(g);
  double s = 0.0;
  for (std::size_t j = 0; j < fv.size(); ++j)
    if (fv[j] > 0.0) s += std::pow(fv[j], r) * g.layer_height(j);
  return s;
}

/// Quantile function of an absolutely continuous 1D law with piecewise
/// constant density, stored as linear pieces u in [u0, u1] -> [q0, q1].
class PiecewiseQuantile {
 public:
  struct Piece {
    double u0, u1, q0, q1;
  };

  PiecewiseQuantile() = default;
  explicit PiecewiseQuantile(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw Error(ErrorCode::EmptyMeasure, "empty quantile function");
  }

  /// From a histogram with the given cell edges and cell masses.
  static PiecewiseQuantile from_histogram(const std::vector<double>& edges, const std::vector<double>& masses) {
    double total = 0.0;
    for (double m : masses) total += m;
    if (!(total > 0.0)) throw Error(ErrorCode::EmptyMeasure, "histogram has zero mass");
    std::vector<Piece> p;
    double u = 0.0;
    for (std::size_t k = 0; k < masses.size(); ++k) {
      if (!(masses[k] > 0.0)) continue;
      const double next = u + masses[k] / total;
      p.push_back({u, next, edges[k], edges[k + 1]});
      u = next;
    }
    p.back().u1 = 1.0;
    return PiecewiseQuantile(std::move(p));
  }

  const std::vector<Piece>& pieces() const noexcept { return pieces_; }

  std::vector<double> breakpoints() const {
    std::vector<double> b{0.0};
    for (const auto& p : pieces_) b.push_back(p.u1);
    return b;
  }

  /// Value at level u, left-continuous.
  double operator()(double u) const {
    for (const auto& p : pieces_)
      if (u <= p.u1) return p.q0 + (std::max(u, p.u0) - p.u0) / (p.u1 - p.u0) * (p.q1 - p.q0);
    return pieces_.back().q1;
  }
  double right_limit(double u) const {
    for (const auto& p : pieces_)
      if (u < p.u1) return p.q0 + (std::max(u, p.u0) - p.u0) / (p.u1 - p.u0) * (p.q1 - p.q0);
    return pieces_.back().q1;
  }

  double mean() const {
    double s = 0.0;
    for (const auto& p : pieces_) s += (p.u1 - p.u0) * 0.5 * (p.q0 + p.q1);
    return s;
  }
  double variance() const {
    double s = 0.0;
    for (const auto& p : pieces_) s += (p.u1 - p.u0) * (p.q0 * p.q0 + p.q0 * p.q1 + p.q1 * p.q1) / 3.0;
    const double m = mean();
    return std::max(0.0, s - m * m);
  }
  /// Integral of f log f of the underlying density.
  double entropy() const {
    double s = 0.0;
    for (const auto& p : pieces_) {
      const double du = p.u1 - p.u0, dq = p.q1 - p.q0;
      s += du * std::log(du / dq);
    }
    return s;
  }
  /// Integral of f^r of the underlying density.
  double internal_energy(double r) const {
    require_exponent(r);
    double s = 0.0;
    for (const auto& p : pieces_) {
      const double du = p.u1 - p.u0, dq = p.q1 - p.q0;
      s += std::pow(du, r) / std::pow(dq, r - 1.0);
    }
    return s;
  }

 private:
  std::vector<Piece> pieces_;
};

/// Quantile averaging on the common refinement of the pieces.
inline PiecewiseQuantile average(const std::vector<PiecewiseQuantile>& qs, const std::vector<double>& lambda) {
  if (qs.empty()) throw Error(ErrorCode::EmptyInput, "no quantile functions");
  ot1d::require_barycentric_weights(lambda, qs.size());
  std::vector<double> u;
  for (const auto& q : qs) {
    auto b = q.breakpoints();
    u.insert(u.end(), b.begin(), b.end());
  }
  u = merge_breakpoints(std::move(u));
  u.front() = 0.0;
  u.back() = 1.0;
  std::vector<PiecewiseQuantile::Piece> out;
  for (std::size_t k = 0; k + 1 < u.size(); ++k) {
    double q0 = 0.0, q1 = 0.0;
    for (std::size_t a = 0; a < qs.size(); ++a) {
      q0 += lambda[a] * qs[a].right_limit(u[k]);
      q1 += lambda[a] * qs[a](u[k + 1]);
    }
    out.push_back({u[k], u[k + 1], q0, q1});
  }
  return PiecewiseQuantile(std::move(out));
}

inline PiecewiseQuantile vertical_quantile_function(const GriddedMeasure& g) {
  require_normalized(g);
  const auto fv = vertical_density(g);
  std::vector<double> vm(fv.size());
  for (std::size_t j = 0; j < fv.size(); ++j) vm[j] = fv[j] * g.layer_height(j);
  return PiecewiseQuantile::from_histogram(g.vertical_edges(), vm);
}

/// Layerwise view of a gridded measure with one horizontal axis: vertical
/// quantile plus one slice quantile per level interval. Barycenters of such
/// measures stay in this class and are computed exactly.
struct QuantileLayers {
  PiecewiseQuantile vertical;
  std::vector<double> levels;              // 0 = l_0 < ... < l_K = 1
  std::vector<PiecewiseQuantile> slices;   // slice on (l_k, l_{k+1}]

  static QuantileLayers from_grid(const GriddedMeasure& g) {
    if (g.dim() != 1) throw Error(ErrorCode::UnsupportedDim, "exact gridded barycenters need one horizontal axis");
    require_normalized(g);
    const auto fv = vertical_density(g);
    std::vector<double> vm(fv.size());
    for (std::size_t j = 0; j < fv.size(); ++j) vm[j] = fv[j] * g.layer_height(j);
    QuantileLayers q;
    q.vertical = PiecewiseQuantile::from_histogram(g.vertical_edges(), vm);
    q.levels = q.vertical.breakpoints();
    for (std::size_t j = 0; j < fv.size(); ++j) {
      if (!(vm[j] > 0.0)) continue;
      std::vector<double> cm(g.horizontal_cell_count());
      for (std::size_t h = 0; h < cm.size(); ++h) cm[h] = g.at(j, h) * g.horizontal_volume(h);
      q.slices.push_back(PiecewiseQuantile::from_histogram(g.axes()[0], cm));
    }
    return q;
  }

  const PiecewiseQuantile& slice_at(double l) const { return slices[interval_index(levels, l)]; }

  EntropyReport entropy() const {
    EntropyReport r;
    for (std::size_t k = 0; k < slices.size(); ++k) r.layer_integral += (levels[k + 1] - levels[k]) * slices[k].entropy();
    r.vertical = vertical.entropy();
    r.total = r.layer_integral + r.vertical;
    return r;
  }
};

inline QuantileLayers quantile_barycenter(const std::vector<QuantileLayers>& ms, const std::vector<double>& lambda) {
  if (ms.empty()) throw Error(ErrorCode::EmptyInput, "no measures");
  ot1d::require_barycentric_weights(lambda, ms.size());
  QuantileLayers out;
  std::vector<PiecewiseQuantile> v;
  std::vector<double> l;
  for (const auto& m : ms) {
    v.push_back(m.vertical);
    l.insert(l.end(), m.levels.begin(), m.levels.end());
  }
  out.vertical = average(v, lambda);
  out.levels = merge_breakpoints(std::move(l));
  out.levels.front() = 0.0;
  out.levels.back() = 1.0;
  for (std::size_t k = 0; k + 1 < out.levels.size(); ++k) {
    const double mid = 0.5 * (out.levels[k] + out.levels[k + 1]);
    std::vector<PiecewiseQuantile> s;
    for (const auto& m : ms) s.push_back(m.slice_at(mid));
    out.slices.push_back(average(s, lambda));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registered functionals and the convexity harness

struct Phenotype {
  enum class Kind { Entropy, VMean, VVar, VEnergy, VQuantile, LayerVar } kind = Kind::VMean;
  double param = 0.0;

  std::string name() const {
    switch (kind) {
      case Kind::Entropy: return "entropy";
      case Kind::VMean: return "vmean";
      case Kind::VVar: return "vvar";
      case Kind::VEnergy: return "venergy:" + format_double(param);
      case Kind::VQuantile: return "vq:" + format_double(param);
      case Kind::LayerVar: return "lvar";
    }
    return "";
  }

 private:
  static std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
};

inline Phenotype parse_phenotype(const std::string& s) {
  using K = Phenotype::Kind;
  auto param = [&](std::size_t pos) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s.substr(pos), &used);
      if (used != s.size() - pos) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad phenotype parameter in '" + s + "'");
    }
  };
  if (s == "entropy") return {K::Entropy, 0.0};
  if (s == "vmean") return {K::VMean, 0.0};
  if (s == "vvar") return {K::VVar, 0.0};
  if (s == "lvar") return {K::LayerVar, 0.0};
  if (s.rfind("venergy:", 0) == 0) {
    const double r = param(8);
    require_exponent(r);
    return {K::VEnergy, r};
  }
  if (s.rfind("vq:", 0) == 0) {
    const double l = param(3);
    require_level(l);
    return {K::VQuantile, l};
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown phenotype '" + s + "' (expected entropy, vmean, vvar, lvar, venergy:r, vq:l)");
}

inline double evaluate(const Phenotype& p, const AtomicMeasure& mu) {
  using K = Phenotype::Kind;
  switch (p.kind) {
    case K::VMean: return vertical_mean(mu);
    case K::VVar: return vertical_variance(mu);
    case K::VQuantile: return vertical_quantile(mu, p.param);
    case K::LayerVar: return layer_variance_integral(mu);
    case K::Entropy:
    case K::VEnergy: break;
  }
  throw Error(ErrorCode::InvalidArgument, p.name() + " needs a density; use gridded input");
}

inline double evaluate(const Phenotype& p, const PiecewiseQuantile& v) {
  using K = Phenotype::Kind;
  switch (p.kind) {
    case K::VMean: return v.mean();
    case K::VVar: return v.variance();
    case K::VEnergy: return v.internal_energy(p.param);
    case K::VQuantile: return v(p.param);
    case K::Entropy:
    case K::LayerVar: break;
  }
  throw Error(ErrorCode::InvalidArgument, p.name() + " is not a function of the vertical marginal");
}

inline bool is_vertical(const Phenotype& p) {
  return p.kind != Phenotype::Kind::Entropy && p.kind != Phenotype::Kind::LayerVar;
}

inline double evaluate(const Phenotype& p, const QuantileLayers& q);

/// Densities are used exactly: vertical functionals through the vertical
/// quantile, the rest through the layer decomposition.
inline double evaluate(const Phenotype& p, const GriddedMeasure& g) {
  if (p.kind == Phenotype::Kind::Entropy) return shannon_entropy(g).total;
  if (is_vertical(p)) return evaluate(p, vertical_quantile_function(g));
  return evaluate(p, QuantileLayers::from_grid(g));
}

inline double evaluate(const Phenotype& p, const QuantileLayers& q) {
  using K = Phenotype::Kind;
  switch (p.kind) {
    case K::Entropy: return q.entropy().total;
    case K::VMean: return q.vertical.mean();
    case K::VVar: return q.vertical.variance();
    case K::VEnergy: return q.vertical.internal_energy(p.param);
    case K::VQuantile: return q.vertical(p.param);
    case K::LayerVar: {
      double s = 0.0;
      for (std::size_t k = 0; k < q.slices.size(); ++k) s += (q.levels[k + 1] - q.levels[k]) * q.slices[k].variance();
      return s;
    }
  }
  return 0.0;
}

struct ConvexityReport {
  std::string functional;
  double value_at_barycenter = 0.0;
  double mean_of_values = 0.0;
  double gap = 0.0;  // mean_of_values - value_at_barycenter
};

inline ConvexityReport make_report(const Phenotype& p, double at_bar, double mean) {
  return {p.name(), at_bar, mean, mean - at_bar};
}

/// Jensen gap along the atomic layerwise barycenter.
inline ConvexityReport convexity_check(const Phenotype& p, const std::vector<AtomicMeasure>& ms,
                                       const std::vector<double>& lambda, const LwOptions& opts = {}) {
  const auto bar = lw_barycenter(ms, lambda, opts);
  double mean = 0.0;
  for (std::size_t a = 0; a < ms.size(); ++a) mean += lambda[a] * evaluate(p, normalize(ms[a]));
  return make_report(p, evaluate(p, bar), mean);
}

/// Jensen gap along the exact barycenter of gridded measures. Entropy and
/// lvar need one horizontal axis.
inline ConvexityReport convexity_check(const Phenotype& p, const std::vector<GriddedMeasure>& gs,
                                       const std::vector<double>& lambda) {
  if (gs.empty()) throw Error(ErrorCode::EmptyInput, "no measures");
  ot1d::require_barycentric_weights(lambda, gs.size());
  double mean = 0.0;
  for (std::size_t a = 0; a < gs.size(); ++a) mean += lambda[a] * evaluate(p, gs[a]);
  if (is_vertical(p)) {
    std::vector<PiecewiseQuantile> vs;
    for (const auto& g : gs) vs.push_back(vertical_quantile_function(g));
    return make_report(p, evaluate(p, average(vs, lambda)), mean);
  }
  std::vector<QuantileLayers> qs;
  for (const auto& g : gs) qs.push_back(QuantileLayers::from_grid(g));
  return make_report(p, evaluate(p, quantile_barycenter(qs, lambda)), mean);
}

}  // namespace lwot::phenotypes
