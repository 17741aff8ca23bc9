#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "lwot/skeleton.hpp"
#include "support/random_measures.hpp"

namespace testgen {

namespace sk = lwot::skeleton;

inline std::vector<sk::Knot> random_path(Rng& rng, double y0, double y1, std::vector<double> x0, std::size_t segments) {
  std::vector<sk::Knot> ks{{y0, x0}};
  for (std::size_t s = 1; s <= segments; ++s) {
    const double y = y0 + (y1 - y0) * static_cast<double>(s) / static_cast<double>(segments);
    const double dy = y - ks.back().y;
    auto x = ks.back().x;
    for (auto& v : x) v += uniform(rng, -1.0, 1.0) * dy;
    ks.push_back({y, std::move(x)});
  }
  return ks;
}

/// Vertical density bounds computed from the pieces.
inline sk::Bounds exact_bounds(const sk::SkeletalRootMeasure& skm) {
  const auto e = skm.density_breaks();
  sk::Bounds b{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t k = 0; k + 1 < e.size(); ++k) {
    const double f = skm.vertical_density(0.5 * (e[k] + e[k + 1]));
    b.lower = std::min(b.lower, f);
    b.upper = std::max(b.upper, f);
  }
  return b;
}

/// Random strong skeletal root measure with at most max_limbs limbs,
/// normalized, with exact vertical density bounds declared.
inline sk::SkeletalRootMeasure random_strong_skeleton(Rng& rng, std::size_t dim, std::size_t max_limbs) {
  for (;;) {
    const double depth = uniform(rng, 1.0, 2.0);
    const std::size_t n = uniform_int(rng, 1, max_limbs);
    std::vector<std::vector<sk::Knot>> paths;
    std::vector<std::optional<std::size_t>> parents;
    std::vector<double> dens;
    paths.push_back(random_path(rng, 0.0, depth, std::vector<double>(dim, 0.0), uniform_int(rng, 1, 3)));
    parents.push_back(std::nullopt);
    for (std::size_t i = 1; i < n; ++i) {
      const std::size_t p = uniform_int(rng, 0, i - 1);
      const double lo = paths[p].front().y, hi = paths[p].back().y;
      const double ya = lo + (hi - lo) * uniform(rng, 0.15, 0.85);
      const double yb = ya + (depth - ya) * uniform(rng, 0.3, 1.0);
      sk::Limb tmp(paths[p], {});
      paths.push_back(random_path(rng, ya, yb, tmp.position(ya), uniform_int(rng, 1, 2)));
      parents.push_back(p);
    }
    std::vector<double> m(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = uniform(rng, 0.5, 2.0);
      total += m[i] * (paths[i].back().y - paths[i].front().y);
    }
    std::vector<sk::Limb> limbs;
    for (std::size_t i = 0; i < n; ++i)
      limbs.emplace_back(paths[i], std::vector<sk::DensityPiece>{{paths[i].front().y, paths[i].back().y, m[i] / total}},
                         parents[i]);
    sk::SkeletalRootMeasure skm(std::move(limbs), depth);
    skm.set_bounds(exact_bounds(skm));
    if (sk::validate(skm).strength == sk::Strength::Strong) return skm;
  }
}

}  // namespace testgen
