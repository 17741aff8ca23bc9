#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <tuple>
#include <vector>

#include "lwot/discrete_ot.hpp"
#include "lwot/error.hpp"
#include "lwot/measures.hpp"
#include "lwot/ot1d.hpp"
#include "lwot/util.hpp"

namespace lwot {

struct LwOptions {
  discrete_ot::LpOptions lp;
};

struct IntervalCost {
  double lo = 0.0;
  double hi = 0.0;
  double cost = 0.0;  // W2^2 between the two slices on (lo, hi]
};

struct LwDistanceReport {
  double total_sq = 0.0;
  double vertical_sq = 0.0;
  double horizontal_sq = 0.0;
  std::vector<IntervalCost> per_interval;
};

/// Vertically rescaled measure: slice i is the normalized conditional at
/// the i-th distinct height and lives on (F(y_{i-1}), F(y_i)].
inline LayeredMeasure rescale(const AtomicMeasure& mu) {
  if (mu.size() == 0) throw Error(ErrorCode::EmptyMeasure, "cannot rescale an empty measure");
  const VerticalProfile prof = vertical_marginal(mu);
  std::vector<DiscreteMeasure> slices;
  std::size_t i = 0;
  for (std::size_t level = 0; level < prof.size(); ++level) {
    std::vector<double> pos, w;
    for (; i < mu.size() && mu.y(i) == prof.heights()[level]; ++i) {
      pos.insert(pos.end(), mu.x(i).begin(), mu.x(i).end());
      w.push_back(mu.w(i) / prof.masses()[level]);
    }
    slices.push_back(DiscreteMeasure::canonical(mu.dim(), pos, w));
  }
  return LayeredMeasure(prof.breakpoints(), std::move(slices));
}

/// Inverse of `rescale` for a given quantile function: every interval is
/// placed at height q(midpoint) with mass equal to its length.
template <typename Quantile>
AtomicMeasure unrescale(const LayeredMeasure& lm, Quantile&& q) {
  std::vector<Atom> atoms;
  const auto& bp = lm.breakpoints();
  for (std::size_t k = 0; k < lm.interval_count(); ++k) {
    const double len = bp[k + 1] - bp[k];
    const double y = q(0.5 * (bp[k] + bp[k + 1]));
    const auto& s = lm.slices()[k];
    for (std::size_t i = 0; i < s.size(); ++i)
      atoms.push_back(Atom{std::vector<double>(s.point(i).begin(), s.point(i).end()), y, s.weight(i) * len});
  }
  return AtomicMeasure(lm.dim(), atoms);
}

namespace detail {

inline std::vector<double> common_refinement(const std::vector<const LayeredMeasure*>& lms) {
  std::vector<double> all;
  for (const auto* lm : lms) all.insert(all.end(), lm->breakpoints().begin(), lm->breakpoints().end());
  auto bp = merge_breakpoints(std::move(all));
  bp.front() = 0.0;
  bp.back() = 1.0;
  return bp;
}

inline ot1d::Discrete1D to_1d(const DiscreteMeasure& s) { return ot1d::Discrete1D(s.positions(), s.weights()); }

inline double slice_cost(const DiscreteMeasure& a, const DiscreteMeasure& b, const LwOptions& opts) {
  if (a.dim() == 1) return ot1d::w2sq_1d(to_1d(a), to_1d(b));
  // Fixed argument order keeps the distance bitwise symmetric.
  const bool swap = std::tie(b.positions(), b.weights()) < std::tie(a.positions(), a.weights());
  return swap ? discrete_ot::transport_lp(b, a, opts.lp).cost : discrete_ot::transport_lp(a, b, opts.lp).cost;
}

inline void require_same_dim(const AtomicMeasure& a, const AtomicMeasure& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimMismatch, "measures have different horizontal dimensions");
}

}  // namespace detail

inline LwDistanceReport lw_distance(const AtomicMeasure& mu, const AtomicMeasure& nu, const LwOptions& opts = {}) {
  detail::require_same_dim(mu, nu);
  if (mu.size() == 0 || nu.size() == 0) throw Error(ErrorCode::EmptyMeasure, "empty measure");
  LwDistanceReport rep;
  rep.vertical_sq = ot1d::w2sq_1d(ot1d::Discrete1D::from_profile(vertical_marginal(mu)),
                                  ot1d::Discrete1D::from_profile(vertical_marginal(nu)));
  const LayeredMeasure a = rescale(mu), b = rescale(nu);
  const auto bp = detail::common_refinement({&a, &b});
  const std::size_t n = bp.size() - 1;
  rep.per_interval.resize(n);
  parallel_for(n, [&](std::size_t k) {
    const double mid = 0.5 * (bp[k] + bp[k + 1]);
    rep.per_interval[k] = {bp[k], bp[k + 1], detail::slice_cost(a.slice_at(mid), b.slice_at(mid), opts)};
  });
  for (const auto& iv : rep.per_interval) rep.horizontal_sq += (iv.hi - iv.lo) * iv.cost;
  rep.total_sq = rep.vertical_sq + rep.horizontal_sq;
  return rep;
}

/// LW distance augmented by the squared difference of total masses.
inline double lw_distance_extended(const AtomicMeasure& mu, const AtomicMeasure& nu, const LwOptions& opts = {}) {
  const double dm = mu.total_mass() - nu.total_mass();
  return lw_distance(mu, nu, opts).total_sq + dm * dm;
}

inline AtomicMeasure lw_barycenter(const std::vector<AtomicMeasure>& ms, const std::vector<double>& lambda,
                                   const LwOptions& opts = {}) {
  if (ms.empty()) throw Error(ErrorCode::EmptyInput, "no measures");
  ot1d::require_barycentric_weights(lambda, ms.size());
  for (const auto& mu : ms) detail::require_same_dim(ms.front(), mu);
  const std::size_t m = ms.size();
  const std::size_t d = ms.front().dim();

  std::vector<VerticalProfile> prof;
  std::vector<LayeredMeasure> lms;
  std::vector<const LayeredMeasure*> ptrs;
  for (const auto& mu : ms) {
    prof.push_back(vertical_marginal(mu));
    lms.push_back(rescale(mu));
  }
  for (const auto& lm : lms) ptrs.push_back(&lm);
  const auto bp = detail::common_refinement(ptrs);
  const std::size_t n = bp.size() - 1;

  std::vector<DiscreteMeasure> slices(n);
  std::vector<double> heights(n);
  parallel_for(n, [&](std::size_t k) {
    const double mid = 0.5 * (bp[k] + bp[k + 1]);
    std::vector<DiscreteMeasure> here;
    double y = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      here.push_back(lms[a].slice_at(mid));
      y += lambda[a] * prof[a].quantile(mid);
    }
    heights[k] = y;
    if (d == 1) {
      std::vector<ot1d::Discrete1D> one;
      for (const auto& s : here) one.push_back(detail::to_1d(s));
      const auto bar = ot1d::barycenter_1d(one, lambda);
      slices[k] = DiscreteMeasure(1, bar.positions(), bar.weights());
    } else {
      slices[k] = discrete_ot::w_barycenter(here, lambda, opts.lp);
    }
  });

  std::vector<Atom> atoms;
  for (std::size_t k = 0; k < n; ++k) {
    const double len = bp[k + 1] - bp[k];
    for (std::size_t i = 0; i < slices[k].size(); ++i)
      atoms.push_back(Atom{std::vector<double>(slices[k].point(i).begin(), slices[k].point(i).end()), heights[k],
                           slices[k].weight(i) * len});
  }
  return AtomicMeasure(d, atoms);
}

inline double lw_barycenter_objective(const AtomicMeasure& candidate, const std::vector<AtomicMeasure>& ms,
                                      const std::vector<double>& lambda, const LwOptions& opts = {}) {
  ot1d::require_barycentric_weights(lambda, ms.size());
  double s = 0.0;
  for (std::size_t a = 0; a < ms.size(); ++a) s += lambda[a] * lw_distance(candidate, ms[a], opts).total_sq;
  return s;
}

// ---------------------------------------------------------------------------
// Horizontal rotations

/// Rotates the horizontal part of a d = 2 measure by theta (counterclockwise).
inline AtomicMeasure rotate(const AtomicMeasure& mu, double theta) {
  if (mu.dim() != 2) throw Error(ErrorCode::UnsupportedDim, "rotation needs horizontal dimension 2");
  const double c = std::cos(theta), s = std::sin(theta);
  auto atoms = mu.atoms();
  for (auto& a : atoms) {
    const double x = a.x[0], y = a.x[1];
    a.x[0] = c * x - s * y;
    a.x[1] = s * x + c * y;
  }
  return AtomicMeasure(2, atoms);
}

struct RotationOptions {
  std::size_t grid = 64;
  double angle_tol = 1e-6;
  std::size_t refine_candidates = 3;  // grid local minima refined by golden section
  LwOptions lw;
};

struct RotationSearchResult {
  double angle = 0.0;
  double distance_sq = 0.0;
  std::vector<std::pair<double, double>> trace;  // probed (angle, value)
};

inline double wrap_angle(double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  t = std::fmod(t, two_pi);
  if (t < 0.0) t += two_pi;
  if (t >= two_pi) t = 0.0;
  return t;
}

/// min over rotations R of d_LW^2(R mu, nu); `angle` is the rotation applied to mu.
inline RotationSearchResult symmetrized_distance(const AtomicMeasure& mu, const AtomicMeasure& nu,
                                                 const RotationOptions& opts = {}) {
  detail::require_same_dim(mu, nu);
  RotationSearchResult res;
  if (mu.dim() == 1) {
    res.distance_sq = lw_distance(mu, nu, opts.lw).total_sq;
    res.trace.push_back({0.0, res.distance_sq});
    return res;
  }
  if (mu.dim() != 2) throw Error(ErrorCode::UnsupportedDim, "rotation search is implemented for d <= 2");
  if (opts.grid < 3) throw Error(ErrorCode::InvalidArgument, "rotation grid needs at least 3 angles");

  auto f = [&](double t) {
    t = wrap_angle(t);
    const double v = lw_distance(rotate(mu, t), nu, opts.lw).total_sq;
    res.trace.push_back({t, v});
    return v;
  };

  const std::size_t K = opts.grid;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(K);
  std::vector<double> grid(K);
  for (std::size_t k = 0; k < K; ++k) grid[k] = f(step * static_cast<double>(k));

  std::vector<std::size_t> minima;
  for (std::size_t k = 0; k < K; ++k)
    if (grid[k] <= grid[(k + K - 1) % K] && grid[k] <= grid[(k + 1) % K]) minima.push_back(k);
  std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) { return grid[a] < grid[b]; });
  if (minima.size() > opts.refine_candidates) minima.resize(opts.refine_candidates);

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (std::size_t k : minima) {
    double lo = step * (static_cast<double>(k) - 1.0), hi = step * (static_cast<double>(k) + 1.0);
    double c = hi - invphi * (hi - lo), d = lo + invphi * (hi - lo);
    double fc = f(c), fd = f(d);
    while (hi - lo > opts.angle_tol) {
      if (fc <= fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - invphi * (hi - lo);
        fc = f(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + invphi * (hi - lo);
        fd = f(d);
      }
    }
    f(0.5 * (lo + hi));
  }

  res.distance_sq = std::numeric_limits<double>::infinity();
  for (const auto& [t, v] : res.trace)
    if (v < res.distance_sq) {
      res.distance_sq = v;
      res.angle = t;
    }
  return res;
}

struct SymBarycenterOptions {
  std::size_t starts = 8;
  std::size_t max_iterations = 50;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  RotationOptions rotation;
};

struct SymBarycenterResult {
  AtomicMeasure barycenter;
  std::vector<double> angles;  // rotation applied to each input
  double objective = 0.0;
  std::size_t iterations = 0;  // of the winning start
};

/// Block-coordinate descent over per-measure rotations; a local search
/// started from the identity and from seeded random rotations.
inline SymBarycenterResult symmetrized_barycenter(const std::vector<AtomicMeasure>& ms,
                                                  const std::vector<double>& lambda,
                                                  const SymBarycenterOptions& opts = {}) {
  if (ms.empty()) throw Error(ErrorCode::EmptyInput, "no measures");
  ot1d::require_barycentric_weights(lambda, ms.size());
  for (const auto& mu : ms)
    if (mu.dim() != 2) throw Error(ErrorCode::UnsupportedDim, "symmetrized barycenter needs d = 2");
  const std::size_t m = ms.size();
  const LwOptions& lw = opts.rotation.lw;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);

  SymBarycenterResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < std::max<std::size_t>(1, opts.starts); ++s) {
    std::vector<double> angles(m, 0.0);
    if (s > 0)
      for (std::size_t a = 1; a < m; ++a) angles[a] = unif(rng);
    std::vector<AtomicMeasure> rotated(m);
    auto rebuild = [&] {
      for (std::size_t a = 0; a < m; ++a) rotated[a] = rotate(ms[a], angles[a]);
    };
    rebuild();
    AtomicMeasure bar = lw_barycenter(rotated, lambda, lw);
    double obj = lw_barycenter_objective(bar, rotated, lambda, lw);
    std::size_t it = 0;
    while (it < opts.max_iterations) {
      ++it;
      std::vector<double> next(m);
      for (std::size_t a = 0; a < m; ++a) next[a] = symmetrized_distance(ms[a], bar, opts.rotation).angle;
      const auto saved = angles;
      angles = next;
      rebuild();
      AtomicMeasure cand = lw_barycenter(rotated, lambda, lw);
      const double cobj = lw_barycenter_objective(cand, rotated, lambda, lw);
      if (!(cobj < obj)) {
        angles = saved;
        rebuild();
        break;
      }
      const double gain = obj - cobj;
      bar = std::move(cand);
      obj = cobj;
      if (gain < opts.tol) break;
    }
    if (obj < best.objective) {
      best.barycenter = bar;
      best.angles = angles;
      best.objective = obj;
      best.iterations = it;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Layerwise (Knothe-Rosenblatt) coupling, d = 1

struct CouplingFragment {
  double x = 0.0, y = 0.0;    // source
  double x2 = 0.0, y2 = 0.0;  // target
  double mass = 0.0;
};

struct LayerwiseCoupling {
  std::vector<CouplingFragment> fragments;
  double cost = 0.0;
};

/// Monotone matching of vertical levels, then monotone matching of
/// horizontal positions inside each common level interval. Masses refer
/// to the normalized measures.
inline LayerwiseCoupling layerwise_coupling(const AtomicMeasure& mu, const AtomicMeasure& nu) {
  detail::require_same_dim(mu, nu);
  if (mu.dim() != 1) throw Error(ErrorCode::UnsupportedDim, "layerwise coupling is defined for d = 1");
  const VerticalProfile pm = vertical_marginal(mu), pn = vertical_marginal(nu);
  const LayeredMeasure a = rescale(mu), b = rescale(nu);
  const auto bp = detail::common_refinement({&a, &b});

  std::map<std::tuple<double, double, double, double>, double> acc;
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    const double len = bp[k + 1] - bp[k];
    const double mid = 0.5 * (bp[k] + bp[k + 1]);
    const double y = pm.quantile(mid), y2 = pn.quantile(mid);
    const auto s = detail::to_1d(a.slice_at(mid)), t = detail::to_1d(b.slice_at(mid));
    std::size_t i = 0, j = 0;
    double ri = s.weights()[0], rj = t.weights()[0];
    while (i < s.size() && j < t.size()) {
      const double step = std::min(ri, rj);
      if (step > 0.0) acc[{s.positions()[i], y, t.positions()[j], y2}] += step * len;
      ri -= step;
      rj -= step;
      if (ri <= ot1d::kSweepEps && ++i < s.size()) ri += s.weights()[i];
      if (rj <= ot1d::kSweepEps && ++j < t.size()) rj += t.weights()[j];
    }
  }
  LayerwiseCoupling out;
  for (const auto& [key, mass] : acc) {
    const auto [x, y, x2, y2] = key;
    out.fragments.push_back({x, y, x2, y2, mass});
    out.cost += mass * ((x - x2) * (x - x2) + (y - y2) * (y - y2));
  }
  return out;
}

}  // namespace lwot
