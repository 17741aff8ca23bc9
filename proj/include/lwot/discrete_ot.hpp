#pragma once

#include <cmath>
#include <cstddef>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "lwot/discrete_measure.hpp"
#include "lwot/error.hpp"
#include "lwot/ot1d.hpp"
#include "lwot/simplex.hpp"
#include "lwot/util.hpp"

namespace lwot::discrete_ot {

struct LpOptions {
  /// Upper bound on the number of product-support columns.
  std::size_t column_cap = 200000;
  /// When set, every LP instance is written here before it is solved.
  std::ostream* dump = nullptr;
};

struct TransportEntry {
  std::size_t i = 0;  // source atom
  std::size_t j = 0;  // target atom
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<TransportEntry> entries;
  double cost = 0.0;
  double duality_gap = 0.0;
  double dual_infeasibility = 0.0;
};

struct CouplingEntry {
  std::vector<std::size_t> indices;  // one atom index per marginal
  double mass = 0.0;
};

struct MultiCoupling {
  std::vector<CouplingEntry> entries;
  double cost = 0.0;
  double duality_gap = 0.0;
  double dual_infeasibility = 0.0;
};

namespace detail {

inline void check_cap(std::size_t columns, const LpOptions& opts, std::size_t m) {
  if (columns > opts.column_cap)
    throw Error(ErrorCode::ProblemTooLarge,
                std::to_string(columns) + " product columns exceed the cap of " +
                    std::to_string(opts.column_cap) + " for " + std::to_string(m) +
                    " marginals; thin the layers (fewer atoms per slice) or raise the cap");
}

inline void maybe_dump(const lp::MarginalSimplex& solver, const LpOptions& opts) {
  if (!opts.dump) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  solver.dump(*opts.dump);
}

inline std::size_t product_size(const std::vector<DiscreteMeasure>& ms, const LpOptions& opts) {
  std::size_t n = 1;
  for (const auto& mu : ms) {
    n *= mu.size();
    check_cap(n, opts, ms.size());
  }
  check_cap(n, opts, ms.size());
  return n;
}

inline void require_same_dim(const std::vector<DiscreteMeasure>& ms) {
  for (const auto& mu : ms)
    if (mu.dim() != ms.front().dim())
      throw Error(ErrorCode::DimMismatch, "measures live in different dimensions");
}

}  // namespace detail

/// Optimal vertex plan of the transportation LP with cost |x - y|^2.
inline TransportPlan transport_lp(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                  const LpOptions& opts = {}) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimMismatch, "transport between different dimensions");
  a.require_probability("transport_lp");
  b.require_probability("transport_lp");
  const std::size_t n = detail::product_size({a, b}, opts);
  std::vector<double> cost(n);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      cost[i * b.size() + j] = squared_distance(a.point(i).data(), b.point(j).data(), a.dim());
  lp::MarginalSimplex solver({a.weights(), b.weights()}, std::move(cost));
  detail::maybe_dump(solver, opts);
  const auto res = solver.solve();
  TransportPlan plan;
  for (std::size_t k = 0; k < res.tuples.size(); ++k)
    plan.entries.push_back({res.tuples[k][0], res.tuples[k][1], res.masses[k]});
  plan.cost = res.cost;
  plan.duality_gap = res.duality_gap;
  plan.dual_infeasibility = res.dual_infeasibility;
  return plan;
}

/// Cost of one tuple under sum_{a,b} lambda_a lambda_b |x_a - x_b|^2
/// (ordered pairs).
inline double multimarginal_cost(const std::vector<DiscreteMeasure>& ms,
                                 const std::vector<double>& lambda,
                                 const std::vector<std::size_t>& tuple) {
  const std::size_t d = ms.front().dim();
  double c = 0.0;
  for (std::size_t a = 0; a < ms.size(); ++a)
    for (std::size_t b = a + 1; b < ms.size(); ++b)
      c += 2.0 * lambda[a] * lambda[b] *
           squared_distance(ms[a].point(tuple[a]).data(), ms[b].point(tuple[b]).data(), d);
  return c;
}

/// Optimal vertex coupling of the multi-marginal problem over the full
/// product support.
inline MultiCoupling multimarginal_lp(const std::vector<DiscreteMeasure>& ms,
                                      const std::vector<double>& lambda,
                                      const LpOptions& opts = {}) {
  if (ms.size() < 2) throw Error(ErrorCode::InvalidArgument, "multi-marginal problem needs m >= 2");
  ot1d::require_barycentric_weights(lambda, ms.size());
  detail::require_same_dim(ms);
  for (const auto& mu : ms) mu.require_probability("multimarginal_lp");
  const std::size_t n = detail::product_size(ms, opts);
  const std::size_t m = ms.size();

  std::vector<double> cost(n);
  std::vector<std::size_t> t(m, 0);
  for (std::size_t col = 0; col < n; ++col) {
    cost[col] = multimarginal_cost(ms, lambda, t);
    for (std::size_t a = m; a-- > 0;) {
      if (++t[a] < ms[a].size()) break;
      t[a] = 0;
    }
  }
  std::vector<std::vector<double>> marginals;
  for (const auto& mu : ms) marginals.push_back(mu.weights());
  lp::MarginalSimplex solver(std::move(marginals), std::move(cost));
  detail::maybe_dump(solver, opts);
  const auto res = solver.solve();
  MultiCoupling out;
  for (std::size_t k = 0; k < res.tuples.size(); ++k)
    out.entries.push_back({res.tuples[k], res.masses[k]});
  out.cost = res.cost;
  out.duality_gap = res.duality_gap;
  out.dual_infeasibility = res.dual_infeasibility;
  return out;
}

/// Coordinates are rounded to this grid before coincident barycenter
/// points are merged.
inline constexpr double kMergeGrid = 1e-12;

inline double round_to_grid(double v) { return std::nearbyint(v / kMergeGrid) * kMergeGrid; }

/// Push a coupling forward by (x_1..x_m) -> sum_a lambda_a x_a.
inline DiscreteMeasure barycenter_from_coupling(const MultiCoupling& gamma,
                                                const std::vector<DiscreteMeasure>& ms,
                                                const std::vector<double>& lambda) {
  if (gamma.entries.empty()) throw Error(ErrorCode::EmptyInput, "empty coupling");
  const std::size_t d = ms.front().dim();
  std::vector<double> pos;
  std::vector<double> w;
  for (const auto& e : gamma.entries) {
    for (std::size_t k = 0; k < d; ++k) {
      double v = 0.0;
      for (std::size_t a = 0; a < ms.size(); ++a) v += lambda[a] * ms[a].point(e.indices[a])[k];
      pos.push_back(round_to_grid(v));
    }
    w.push_back(e.mass);
  }
  return DiscreteMeasure::canonical(d, pos, w);
}

/// Wasserstein barycenter of discrete measures via the multi-marginal LP.
inline DiscreteMeasure w_barycenter(const std::vector<DiscreteMeasure>& ms,
                                    const std::vector<double>& lambda,
                                    const LpOptions& opts = {}) {
  if (ms.empty()) throw Error(ErrorCode::EmptyInput, "no measures");
  ot1d::require_barycentric_weights(lambda, ms.size());
  if (ms.size() == 1) {
    ms.front().require_probability("w_barycenter");
    return DiscreteMeasure::canonical(ms.front().dim(), ms.front().positions(), ms.front().weights());
  }
  return barycenter_from_coupling(multimarginal_lp(ms, lambda, opts), ms, lambda);
}

/// Barycenter objective sum_a lambda_a W_2^2(bar, mu_a).
inline double barycenter_objective(const DiscreteMeasure& bar,
                                   const std::vector<DiscreteMeasure>& ms,
                                   const std::vector<double>& lambda,
                                   const LpOptions& opts = {}) {
  double s = 0.0;
  for (std::size_t a = 0; a < ms.size(); ++a) s += lambda[a] * transport_lp(bar, ms[a], opts).cost;
  return s;
}

}  // namespace lwot::discrete_ot
