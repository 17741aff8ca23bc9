#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lwot/discrete_measure.hpp"
#include "lwot/error.hpp"
#include "lwot/util.hpp"

namespace lwot {

struct Atom {
  std::vector<double> x;  // horizontal position, length d
  double y = 0.0;         // height (depth), >= 0
  double w = 0.0;         // mass, > 0
};

/// Finite weighted point set in R^d x R>=0. Atoms are kept sorted by
/// (y, x) and exactly coincident atoms are merged on construction.
class AtomicMeasure {
 public:
  AtomicMeasure() = default;

  AtomicMeasure(std::size_t dim, const std::vector<Atom>& atoms) : dim_(dim) {
    if (dim == 0) throw Error(ErrorCode::InvalidArgument, "horizontal dimension must be positive");
    if (atoms.empty()) throw Error(ErrorCode::EmptyMeasure, "measure has no atoms");
    for (const Atom& a : atoms) {
      if (a.x.size() != dim) throw Error(ErrorCode::DimMismatch, "atom has wrong horizontal dimension");
      if (!(a.w > 0.0) || !std::isfinite(a.w))
        throw Error(ErrorCode::InvalidArgument, "atom mass must be positive and finite");
      if (!(a.y >= 0.0) || !std::isfinite(a.y))
        throw Error(ErrorCode::InvalidArgument, "atom height must be finite and nonnegative");
      for (double v : a.x)
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite coordinate");
    }
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (atoms[a].y != atoms[b].y) return atoms[a].y < atoms[b].y;
      return atoms[a].x < atoms[b].x;
    });
    for (std::size_t idx : order) {
      const Atom& a = atoms[idx];
      const std::size_t n = ws_.size();
      if (n > 0 && ys_.back() == a.y &&
          std::equal(a.x.begin(), a.x.end(), xs_.begin() + static_cast<long>((n - 1) * dim_))) {
        ws_.back() += a.w;
        continue;
      }
      xs_.insert(xs_.end(), a.x.begin(), a.x.end());
      ys_.push_back(a.y);
      ws_.push_back(a.w);
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ws_.size(); }
  std::span<const double> x(std::size_t i) const { return {xs_.data() + i * dim_, dim_}; }
  double y(std::size_t i) const { return ys_[i]; }
  double w(std::size_t i) const { return ws_[i]; }
  double total_mass() const { return std::accumulate(ws_.begin(), ws_.end(), 0.0); }

  std::vector<Atom> atoms() const {
    std::vector<Atom> out(size());
    for (std::size_t i = 0; i < size(); ++i) {
      out[i].x.assign(x(i).begin(), x(i).end());
      out[i].y = ys_[i];
      out[i].w = ws_[i];
    }
    return out;
  }

  friend bool operator==(const AtomicMeasure&, const AtomicMeasure&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<double> ws_;
};

/// Piecewise-constant density on a tensor grid. Densities are stored
/// row-major with the vertical layer outermost: index
/// ((j * n_1 + i_1) * n_2 + i_2) ... for layer j and horizontal cells i_k.
class GriddedMeasure {
 public:
  GriddedMeasure() = default;

  GriddedMeasure(std::vector<std::vector<double>> axes, std::vector<double> vertical_edges,
                 std::vector<double> density)
      : axes_(std::move(axes)), vedges_(std::move(vertical_edges)), density_(std::move(density)) {
    if (axes_.empty()) throw Error(ErrorCode::InvalidArgument, "grid needs at least one horizontal axis");
    auto check_edges = [](const std::vector<double>& e, const char* what) {
      if (e.size() < 2) throw Error(ErrorCode::InvalidArgument, std::string(what) + ": need >= 2 edges");
      for (std::size_t k = 0; k < e.size(); ++k) {
        if (!std::isfinite(e[k])) throw Error(ErrorCode::InvalidArgument, std::string(what) + ": non-finite edge");
        if (k > 0 && !(e[k] > e[k - 1]))
          throw Error(ErrorCode::InvalidArgument, std::string(what) + ": edges must be strictly increasing");
      }
    };
    for (const auto& a : axes_) check_edges(a, "horizontal axis");
    check_edges(vedges_, "vertical edges");
    if (vedges_.front() < 0.0) throw Error(ErrorCode::InvalidArgument, "vertical edges must be >= 0");
    if (density_.size() != layer_count() * horizontal_cell_count())
      throw Error(ErrorCode::InvalidArgument, "density array size does not match the grid");
    for (double f : density_)
      if (!(f >= 0.0) || !std::isfinite(f))
        throw Error(ErrorCode::InvalidArgument, "densities must be finite and nonnegative");
  }

  std::size_t dim() const noexcept { return axes_.size(); }
  const std::vector<std::vector<double>>& axes() const noexcept { return axes_; }
  const std::vector<double>& vertical_edges() const noexcept { return vedges_; }
  const std::vector<double>& density() const noexcept { return density_; }

  std::size_t layer_count() const { return vedges_.size() - 1; }
  std::size_t horizontal_cell_count() const {
    std::size_t n = 1;
    for (const auto& a : axes_) n *= a.size() - 1;
    return n;
  }
  double layer_height(std::size_t j) const { return vedges_[j + 1] - vedges_[j]; }

  /// Multi-index of horizontal cell h (last axis fastest).
  std::vector<std::size_t> horizontal_index(std::size_t h) const {
    std::vector<std::size_t> idx(dim());
    for (std::size_t k = dim(); k-- > 0;) {
      const std::size_t n = axes_[k].size() - 1;
      idx[k] = h % n;
      h /= n;
    }
    return idx;
  }
  double horizontal_volume(std::size_t h) const {
    const auto idx = horizontal_index(h);
    double v = 1.0;
    for (std::size_t k = 0; k < dim(); ++k) v *= axes_[k][idx[k] + 1] - axes_[k][idx[k]];
    return v;
  }
  std::vector<double> horizontal_center(std::size_t h) const {
    const auto idx = horizontal_index(h);
    std::vector<double> c(dim());
    for (std::size_t k = 0; k < dim(); ++k) c[k] = 0.5 * (axes_[k][idx[k]] + axes_[k][idx[k] + 1]);
    return c;
  }
  double at(std::size_t layer, std::size_t h) const {
    return density_[layer * horizontal_cell_count() + h];
  }

  double total_mass() const {
    double s = 0.0;
    for (std::size_t j = 0; j < layer_count(); ++j)
      for (std::size_t h = 0; h < horizontal_cell_count(); ++h)
        s += at(j, h) * horizontal_volume(h) * layer_height(j);
    return s;
  }

  GriddedMeasure normalized() const {
    const double t = total_mass();
    if (!(t > 0.0)) throw Error(ErrorCode::EmptyMeasure, "grid has zero mass");
    std::vector<double> f(density_);
    for (double& v : f) v /= t;
    return GriddedMeasure(axes_, vedges_, std::move(f));
  }

 private:
  std::vector<std::vector<double>> axes_;
  std::vector<double> vedges_;
  std::vector<double> density_;
};

/// Vertical marginal as a step CDF with its left-continuous quantile.
class VerticalProfile {
 public:
  VerticalProfile() = default;

  VerticalProfile(std::vector<double> heights, std::vector<double> masses)
      : heights_(std::move(heights)), masses_(std::move(masses)) {
    if (heights_.empty()) throw Error(ErrorCode::EmptyMeasure, "empty vertical profile");
    if (heights_.size() != masses_.size())
      throw Error(ErrorCode::InvalidArgument, "heights and masses differ in length");
    for (std::size_t i = 0; i < heights_.size(); ++i) {
      if (!(masses_[i] > 0.0)) throw Error(ErrorCode::InvalidArgument, "profile masses must be positive");
      if (i > 0 && !(heights_[i] > heights_[i - 1]))
        throw Error(ErrorCode::InvalidArgument, "profile heights must be strictly increasing");
    }
    total_ = std::accumulate(masses_.begin(), masses_.end(), 0.0);
    cumulative_.resize(masses_.size());
    double run = 0.0;
    for (std::size_t i = 0; i < masses_.size(); ++i) {
      run += masses_[i];
      cumulative_[i] = run / total_;
    }
    cumulative_.back() = 1.0;
  }

  std::size_t size() const noexcept { return heights_.size(); }
  const std::vector<double>& heights() const noexcept { return heights_; }
  const std::vector<double>& masses() const noexcept { return masses_; }
  /// F(y_i) for each atom height; the last entry is exactly 1.
  const std::vector<double>& cumulative() const noexcept { return cumulative_; }
  double total_mass() const noexcept { return total_; }

  /// Right-continuous CDF of the normalized profile.
  double cdf(double y) const {
    auto it = std::upper_bound(heights_.begin(), heights_.end(), y);
    if (it == heights_.begin()) return 0.0;
    return cumulative_[static_cast<std::size_t>(it - heights_.begin()) - 1];
  }

  /// Left-continuous generalized inverse: smallest y_i with F(y_i) >= l.
  double quantile(double l) const { return heights_[quantile_index(l)]; }

  std::size_t quantile_index(double l) const {
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), l);
    if (it == cumulative_.end()) return size() - 1;
    return static_cast<std::size_t>(it - cumulative_.begin());
  }

  /// Breakpoints 0 = F_0 < F(y_1) < ... < F(y_k) = 1.
  std::vector<double> breakpoints() const {
    std::vector<double> bp{0.0};
    bp.insert(bp.end(), cumulative_.begin(), cumulative_.end());
    return bp;
  }

 private:
  std::vector<double> heights_;
  std::vector<double> masses_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

/// Piecewise-constant-in-l family of horizontal probability slices:
/// slice k lives on (breakpoints[k], breakpoints[k+1]].
class LayeredMeasure {
 public:
  LayeredMeasure() = default;

  LayeredMeasure(std::vector<double> breakpoints, std::vector<DiscreteMeasure> slices)
      : breakpoints_(std::move(breakpoints)), slices_(std::move(slices)) {
    if (slices_.empty() || breakpoints_.size() != slices_.size() + 1)
      throw Error(ErrorCode::InvalidArgument, "layered measure needs one slice per interval");
    if (breakpoints_.front() != 0.0 || breakpoints_.back() != 1.0)
      throw Error(ErrorCode::InvalidArgument, "layer breakpoints must span [0, 1]");
    for (std::size_t k = 1; k < breakpoints_.size(); ++k)
      if (!(breakpoints_[k] > breakpoints_[k - 1]))
        throw Error(ErrorCode::InvalidArgument, "layer breakpoints must increase");
    for (const auto& s : slices_) s.require_probability("layer slice");
  }

  std::size_t dim() const { return slices_.front().dim(); }
  std::size_t interval_count() const noexcept { return slices_.size(); }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<DiscreteMeasure>& slices() const noexcept { return slices_; }

  /// Slice governing level l, i.e. the k with l in (l_k, l_{k+1}].
  const DiscreteMeasure& slice_at(double l) const {
    return slices_[interval_index(breakpoints_, l)];
  }

 private:
  std::vector<double> breakpoints_;
  std::vector<DiscreteMeasure> slices_;
};

/// One atom per nonzero cell at the cell center, mass density x volume.
inline AtomicMeasure from_grid(const GriddedMeasure& g) {
  std::vector<Atom> atoms;
  const std::size_t nh = g.horizontal_cell_count();
  for (std::size_t j = 0; j < g.layer_count(); ++j) {
    const double yc = 0.5 * (g.vertical_edges()[j] + g.vertical_edges()[j + 1]);
    for (std::size_t h = 0; h < nh; ++h) {
      const double f = g.at(j, h);
      if (f == 0.0) continue;
      atoms.push_back(Atom{g.horizontal_center(h), yc, f * g.horizontal_volume(h) * g.layer_height(j)});
    }
  }
  if (atoms.empty()) throw Error(ErrorCode::EmptyMeasure, "grid density is identically zero");
  return AtomicMeasure(g.dim(), atoms);
}

inline VerticalProfile vertical_marginal(const AtomicMeasure& mu) {
  std::vector<double> heights;
  std::vector<double> masses;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!heights.empty() && heights.back() == mu.y(i)) {
      masses.back() += mu.w(i);
    } else {
      heights.push_back(mu.y(i));
      masses.push_back(mu.w(i));
    }
  }
  return VerticalProfile(std::move(heights), std::move(masses));
}

inline AtomicMeasure normalize(const AtomicMeasure& mu) {
  const double total = mu.total_mass();
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyMeasure, "measure has zero mass");
  auto atoms = mu.atoms();
  for (auto& a : atoms) a.w /= total;
  return AtomicMeasure(mu.dim(), atoms);
}

}  // namespace lwot
