#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lwot/discrete_ot.hpp"
#include "lwot/error.hpp"
#include "lwot/measures.hpp"
#include "lwot/ot1d.hpp"
#include "lwot/util.hpp"

namespace lwot::skeleton {

/// Tolerance for limb coincidence (S2 attachment, S3 and W3 checks).
inline constexpr double kCoincidenceTol = 1e-9;
inline constexpr double kMassTol = 1e-10;

struct Knot {
  double y = 0.0;
  std::vector<double> x;
};

/// Constant mass per unit height m on [y_lo, y_hi].
struct DensityPiece {
  double y_lo = 0.0;
  double y_hi = 0.0;
  double m = 0.0;
};

class Limb {
 public:
  Limb() = default;
  Limb(std::vector<Knot> polyline, std::vector<DensityPiece> density,
       std::optional<std::size_t> parent = std::nullopt, std::optional<double> attach_y = std::nullopt)
      : knots_(std::move(polyline)), density_(std::move(density)), parent_(parent), attach_y_(attach_y) {
    if (knots_.size() < 2) throw Error(ErrorCode::MalformedLimb, "a limb needs at least two control points");
    const std::size_t d = knots_.front().x.size();
    if (d == 0) throw Error(ErrorCode::MalformedLimb, "control points need horizontal coordinates");
    for (std::size_t k = 0; k < knots_.size(); ++k) {
      if (knots_[k].x.size() != d) throw Error(ErrorCode::MalformedLimb, "control points differ in dimension");
      if (!std::isfinite(knots_[k].y)) throw Error(ErrorCode::MalformedLimb, "non-finite control height");
      for (double v : knots_[k].x)
        if (!std::isfinite(v)) throw Error(ErrorCode::MalformedLimb, "non-finite control coordinate");
      if (k > 0 && !(knots_[k].y > knots_[k - 1].y))
        throw Error(ErrorCode::MalformedLimb, "control heights must be strictly increasing");
    }
    std::sort(density_.begin(), density_.end(),
              [](const DensityPiece& a, const DensityPiece& b) { return a.y_lo < b.y_lo; });
    for (std::size_t k = 0; k < density_.size(); ++k) {
      const auto& p = density_[k];
      if (!std::isfinite(p.m) || p.m < 0.0) throw Error(ErrorCode::MalformedLimb, "density must be finite and >= 0");
      if (!(p.y_hi > p.y_lo)) throw Error(ErrorCode::MalformedLimb, "density piece must have positive length");
      if (p.y_lo < y_lo() - 1e-12 || p.y_hi > y_hi() + 1e-12)
        throw Error(ErrorCode::MalformedLimb, "density piece outside the limb domain");
      if (k > 0 && p.y_lo < density_[k - 1].y_hi - 1e-12)
        throw Error(ErrorCode::MalformedLimb, "density pieces overlap");
    }
  }

  std::size_t dim() const { return knots_.front().x.size(); }
  double y_lo() const { return knots_.front().y; }
  double y_hi() const { return knots_.back().y; }
  const std::vector<Knot>& knots() const noexcept { return knots_; }
  const std::vector<DensityPiece>& density() const noexcept { return density_; }
  std::optional<std::size_t> parent() const noexcept { return parent_; }
  std::optional<double> attach_y() const noexcept { return attach_y_; }

  /// Polyline position, clamped to the domain.
  std::vector<double> position(double y) const {
    if (y <= y_lo()) return knots_.front().x;
    if (y >= y_hi()) return knots_.back().x;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), y, [](double v, const Knot& k) { return v < k.y; });
    const Knot& b = *it;
    const Knot& a = *(it - 1);
    const double t = (y - a.y) / (b.y - a.y);
    std::vector<double> x(dim());
    for (std::size_t k = 0; k < dim(); ++k) x[k] = a.x[k] + t * (b.x[k] - a.x[k]);
    return x;
  }

  /// Density on the open piece containing y (0 outside every piece).
  double density_at(double y) const {
    for (const auto& p : density_)
      if (p.y_lo < y && y < p.y_hi) return p.m;
    return 0.0;
  }

  /// Density of the piece immediately below y (exact left limit).
  double density_left(double y) const {
    for (const auto& p : density_)
      if (p.y_lo < y - 1e-12 && y <= p.y_hi + 1e-12) return p.m;
    return 0.0;
  }

  double mass() const {
    double s = 0.0;
    for (const auto& p : density_) s += p.m * (p.y_hi - p.y_lo);
    return s;
  }

  double lipschitz() const {
    double c = 0.0;
    for (std::size_t k = 1; k < knots_.size(); ++k) c = std::max(c, segment_slope(k));
    return c;
  }

  /// Arclength of the graph over [a, b] intersected with the domain.
  double arclength(double a, double b) const {
    double s = 0.0;
    for (std::size_t k = 1; k < knots_.size(); ++k) {
      const double lo = std::max(a, knots_[k - 1].y), hi = std::min(b, knots_[k].y);
      if (hi > lo) s += (hi - lo) * std::sqrt(1.0 + segment_slope(k) * segment_slope(k));
    }
    return s;
  }

  bool fully_charged() const {
    double covered = 0.0;
    for (const auto& p : density_) {
      if (!(p.m > 0.0)) return false;
      covered += p.y_hi - p.y_lo;
    }
    return std::abs(covered - (y_hi() - y_lo())) <= 1e-12 * std::max(1.0, y_hi());
  }

 private:
  double segment_slope(std::size_t k) const {
    const double dy = knots_[k].y - knots_[k - 1].y;
    double s = 0.0;
    for (std::size_t c = 0; c < dim(); ++c) {
      const double dx = knots_[k].x[c] - knots_[k - 1].x[c];
      s += dx * dx;
    }
    return std::sqrt(s) / dy;
  }

  std::vector<Knot> knots_;
  std::vector<DensityPiece> density_;
  std::optional<std::size_t> parent_;
  std::optional<double> attach_y_;
};

struct Bounds {
  double lower = 0.0;  // L
  double upper = 0.0;  // U
};

class SkeletalRootMeasure {
 public:
  SkeletalRootMeasure() = default;
  SkeletalRootMeasure(std::vector<Limb> limbs, std::optional<double> depth = std::nullopt,
                      std::optional<Bounds> bounds = std::nullopt)
      : limbs_(std::move(limbs)), bounds_(bounds) {
    if (limbs_.empty()) throw Error(ErrorCode::MalformedLimb, "skeleton has no limbs");
    double top = 0.0;
    for (std::size_t i = 0; i < limbs_.size(); ++i) {
      if (limbs_[i].dim() != limbs_.front().dim())
        throw Error(ErrorCode::MalformedLimb, "limbs differ in horizontal dimension");
      if (limbs_[i].y_lo() < 0.0) throw Error(ErrorCode::MalformedLimb, "limb starts above height 0");
      if (auto p = limbs_[i].parent(); p && *p >= i)
        throw Error(ErrorCode::MalformedLimb, "parent index must refer to an earlier limb");
      top = std::max(top, limbs_[i].y_hi());
    }
    depth_ = depth.value_or(top);
    if (depth_ < top - 1e-12) throw Error(ErrorCode::MalformedLimb, "limb extends below the declared depth");
    if (bounds_ && !(bounds_->lower > 0.0 && bounds_->upper >= bounds_->lower))
      throw Error(ErrorCode::InvalidArgument, "bounds need 0 < L <= U");
  }

  std::size_t dim() const { return limbs_.front().dim(); }
  const std::vector<Limb>& limbs() const noexcept { return limbs_; }
  double depth() const noexcept { return depth_; }
  const std::optional<Bounds>& bounds() const noexcept { return bounds_; }
  void set_bounds(std::optional<Bounds> b) { bounds_ = b; }

  double total_mass() const {
    double s = 0.0;
    for (const auto& l : limbs_) s += l.mass();
    return s;
  }

  /// Vertical marginal density f^V(y) at a point inside a constant piece.
  double vertical_density(double y) const {
    double s = 0.0;
    for (const auto& l : limbs_) s += l.density_at(y);
    return s;
  }

  /// Heights where f^V may change: 0, depth, all density piece ends.
  std::vector<double> density_breaks() const {
    std::vector<double> e{0.0, depth_};
    for (const auto& l : limbs_)
      for (const auto& p : l.density()) {
        e.push_back(p.y_lo);
        e.push_back(p.y_hi);
      }
    return merge_breakpoints(std::move(e));
  }

 private:
  std::vector<Limb> limbs_;
  double depth_ = 0.0;
  std::optional<Bounds> bounds_;
};

// ---------------------------------------------------------------------------
// Validation

enum class Strength { Strong, Weak, Invalid };

inline const char* to_string(Strength s) {
  switch (s) {
    case Strength::Strong: return "strong";
    case Strength::Weak: return "weak";
    case Strength::Invalid: return "invalid";
  }
  return "invalid";
}

struct Violation {
  std::string rule;  // S1, S2, S3, W3, mass, bounds
  std::size_t limb_a = 0;
  std::size_t limb_b = 0;
  double y = 0.0;
  std::string detail;
};

struct ValidationReport {
  Strength strength = Strength::Invalid;
  bool s1 = true, s2 = true, s3 = true, w3 = true;
  bool mass_ok = true, bounds_ok = true, full_support = true;
  std::vector<std::optional<std::size_t>> parents;  // resolved attachment per limb
  std::vector<Violation> violations;
};

namespace detail {

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
  return std::sqrt(squared_distance(a.data(), b.data(), a.size()));
}

/// Heights in (lo, hi] of the common domain where two limbs coincide.
/// A limb pair that coincides along a whole segment reports its midpoint
/// and right end.
inline std::vector<double> coincidences(const Limb& a, const Limb& b, double tol = kCoincidenceTol) {
  const double lo = std::max(a.y_lo(), b.y_lo()), hi = std::min(a.y_hi(), b.y_hi());
  std::vector<double> out;
  if (!(hi > lo)) return out;
  std::vector<double> ks{lo, hi};
  for (const auto* l : {&a, &b})
    for (const auto& k : l->knots())
      if (k.y > lo && k.y < hi) ks.push_back(k.y);
  ks = merge_breakpoints(std::move(ks));
  for (std::size_t s = 0; s + 1 < ks.size(); ++s) {
    const double u = ks[s], v = ks[s + 1];
    const auto pu = a.position(u), qu = b.position(u), pv = a.position(v), qv = b.position(v);
    std::vector<double> d0(pu.size()), d1(pu.size());
    double dd = 0.0, dp = 0.0;
    for (std::size_t c = 0; c < pu.size(); ++c) {
      d0[c] = pu[c] - qu[c];
      d1[c] = (pv[c] - qv[c]) - d0[c];
      dd += d1[c] * d1[c];
      dp += d0[c] * d1[c];
    }
    const double n0 = std::sqrt(std::inner_product(d0.begin(), d0.end(), d0.begin(), 0.0));
    const double n1 = dist(pv, qv);
    if (n0 <= tol && n1 <= tol) {
      out.push_back(0.5 * (u + v));
      out.push_back(v);
      continue;
    }
    const double t = dd > 0.0 ? std::clamp(-dp / dd, 0.0, 1.0) : 0.0;
    double m = 0.0;
    for (std::size_t c = 0; c < d0.size(); ++c) m += (d0[c] + t * d1[c]) * (d0[c] + t * d1[c]);
    if (std::sqrt(m) > tol) continue;
    const double y = u + t * (v - u);
    if (y <= lo + 1e-12) continue;  // open left end of the common domain
    out.push_back(y);
  }
  return merge_breakpoints(std::move(out));
}

}  // namespace detail

inline ValidationReport validate(const SkeletalRootMeasure& skm) {
  ValidationReport rep;
  const auto& limbs = skm.limbs();
  const std::size_t n = limbs.size();
  auto add = [&](const char* rule, std::size_t a, std::size_t b, double y, std::string detail) {
    rep.violations.push_back({rule, a, b, y, std::move(detail)});
  };

  // S1
  if (std::abs(limbs[0].y_lo()) > 1e-12) {
    rep.s1 = false;
    add("S1", 0, 0, limbs[0].y_lo(), "first limb does not start at height 0");
  }
  for (std::size_t i = 1; i < n; ++i)
    if (!(limbs[i].y_lo() > 0.0)) {
      rep.s1 = false;
      add("S1", i, i, limbs[i].y_lo(), "only the first limb may start at height 0");
    }

  // S2
  rep.parents.assign(n, std::nullopt);
  auto attaches = [&](std::size_t i, std::size_t j) {
    const double y = limbs[i].y_lo();
    return y > limbs[j].y_lo() && y < limbs[j].y_hi() &&
           detail::dist(limbs[i].position(y), limbs[j].position(y)) <= kCoincidenceTol;
  };
  for (std::size_t i = 1; i < n; ++i) {
    if (auto a = limbs[i].attach_y(); a && std::abs(*a - limbs[i].y_lo()) > 1e-12) {
      rep.s2 = false;
      add("S2", i, i, *a, "attach height differs from the limb's first control height");
      continue;
    }
    if (auto p = limbs[i].parent()) {
      if (attaches(i, *p)) {
        rep.parents[i] = *p;
      } else {
        rep.s2 = false;
        add("S2", i, *p, limbs[i].y_lo(), "limb does not emerge from the interior of its declared parent");
      }
      continue;
    }
    for (std::size_t j = 0; j < i && !rep.parents[i]; ++j)
      if (attaches(i, j)) rep.parents[i] = j;
    if (!rep.parents[i]) {
      rep.s2 = false;
      add("S2", i, i, limbs[i].y_lo(), "no older limb passes through the attachment point");
    }
  }

  // S3 and W3
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (double y : detail::coincidences(limbs[i], limbs[j])) {
        rep.s3 = false;
        add("S3", i, j, y, "limbs meet");
        // Probe just below y to find which limbs share each point on the left.
        double prev = std::max(limbs[i].y_lo(), limbs[j].y_lo());
        for (const auto* l : {&limbs[i], &limbs[j]}) {
          for (const auto& k : l->knots())
            if (k.y < y - 1e-12) prev = std::max(prev, k.y);
          for (const auto& p : l->density())
            for (double e : {p.y_lo, p.y_hi})
              if (e < y - 1e-12) prev = std::max(prev, e);
        }
        const double z = 0.5 * (prev + y);
        auto left_mass = [&](std::size_t a) {
          double s = 0.0;
          const auto ga = limbs[a].position(z), gy = limbs[a].position(y);
          for (std::size_t k = 0; k < n; ++k) {
            if (!(limbs[k].y_lo() < z && z < limbs[k].y_hi())) continue;
            if (detail::dist(limbs[k].position(z), ga) <= kCoincidenceTol &&
                detail::dist(limbs[k].position(y), gy) <= kCoincidenceTol)
              s += limbs[k].density_left(y);
          }
          return s;
        };
        if (left_mass(i) > 0.0 && left_mass(j) > 0.0) {
          rep.w3 = false;
          add("W3", i, j, y, "both limbs carry mass on approach from above");
        }
      }

  // Mass, bounds, support.
  const double total = skm.total_mass();
  if (std::abs(total - 1.0) > kMassTol) {
    rep.mass_ok = false;
    add("mass", 0, 0, 0.0, "total mass " + std::to_string(total));
  }
  for (const auto& l : limbs)
    if (!l.fully_charged()) rep.full_support = false;
  if (const auto& b = skm.bounds()) {
    const auto e = skm.density_breaks();
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
      const double f = skm.vertical_density(0.5 * (e[k] + e[k + 1]));
      if (f < b->lower - 1e-12 || f > b->upper + 1e-12) {
        rep.bounds_ok = false;
        add("bounds", 0, 0, e[k], "vertical density " + std::to_string(f) + " outside [L, U]");
      }
    }
  }

  const bool base = rep.s1 && rep.s2 && rep.mass_ok && rep.bounds_ok;
  if (base && rep.s3 && rep.full_support)
    rep.strength = Strength::Strong;
  else if (base && rep.w3)
    rep.strength = Strength::Weak;
  else
    rep.strength = Strength::Invalid;
  return rep;
}

// ---------------------------------------------------------------------------
// Discretization and phenotypes

/// Equal-height slabs; per slab one atom per charged limb at the slab's
/// mass-median height.
inline AtomicMeasure to_atomic(const SkeletalRootMeasure& skm, std::size_t n_slabs) {
  if (n_slabs == 0) throw Error(ErrorCode::InvalidArgument, "n_slabs must be positive");
  const double depth = skm.depth();
  const auto breaks = skm.density_breaks();
  std::vector<Atom> atoms;
  for (std::size_t s = 0; s < n_slabs; ++s) {
    const double a = depth * static_cast<double>(s) / static_cast<double>(n_slabs);
    const double b = s + 1 == n_slabs ? depth : depth * static_cast<double>(s + 1) / static_cast<double>(n_slabs);
    std::vector<double> e{a, b};
    for (double v : breaks)
      if (v > a && v < b) e.push_back(v);
    std::sort(e.begin(), e.end());
    std::vector<double> cell_mass(e.size() - 1);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
      cell_mass[k] = skm.vertical_density(0.5 * (e[k] + e[k + 1])) * (e[k + 1] - e[k]);
      total += cell_mass[k];
    }
    if (!(total > 0.0)) continue;
    double run = 0.0, median = b;
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
      if (cell_mass[k] > 0.0 && run + cell_mass[k] >= 0.5 * total) {
        median = e[k] + (0.5 * total - run) / cell_mass[k] * (e[k + 1] - e[k]);
        break;
      }
      run += cell_mass[k];
    }
    for (const auto& limb : skm.limbs()) {
      double m = 0.0;
      for (const auto& p : limb.density()) m += p.m * std::max(0.0, std::min(b, p.y_hi) - std::max(a, p.y_lo));
      if (m > 0.0) atoms.push_back(Atom{limb.position(median), median, m});
    }
  }
  if (atoms.empty()) throw Error(ErrorCode::EmptyMeasure, "skeleton carries no mass");
  return AtomicMeasure(skm.dim(), atoms);
}

/// Arclength of the charged part of the skeleton.
inline double root_length(const SkeletalRootMeasure& skm) {
  double r = 0.0;
  for (const auto& limb : skm.limbs())
    for (const auto& p : limb.density())
      if (p.m > 0.0) r += limb.arclength(p.y_lo, p.y_hi);
  return r;
}

struct RootLengthBounds {
  double C = 0.0;  // sup of limb slopes
  double C_tilde = 0.0;
  double K = 0.0, k = 0.0;
  double C0 = 0.0, C1 = 0.0, C2 = 0.0;
  std::vector<double> lower;  // C0 * R(mu_beta) for each beta
  double upper = 0.0;         // C1 * (C2 * sum R - (m - 1))
};

inline RootLengthBounds root_length_bounds(const std::vector<SkeletalRootMeasure>& skms, std::optional<Bounds> bounds) {
  if (skms.empty()) throw Error(ErrorCode::EmptyInput, "no skeletons");
  Bounds b;
  if (bounds) {
    b = *bounds;
  } else {
    bool have = true;
    b.lower = std::numeric_limits<double>::infinity();
    b.upper = 0.0;
    for (const auto& s : skms) {
      if (!s.bounds()) {
        have = false;
        break;
      }
      b.lower = std::min(b.lower, s.bounds()->lower);
      b.upper = std::max(b.upper, s.bounds()->upper);
    }
    if (!have) throw Error(ErrorCode::BoundsUnavailable, "vertical density bounds L, U are not declared");
  }
  if (!(b.lower > 0.0) || !(b.upper >= b.lower)) throw Error(ErrorCode::BoundsUnavailable, "bounds need 0 < L <= U");
  RootLengthBounds r;
  for (const auto& s : skms)
    for (const auto& l : s.limbs()) r.C = std::max(r.C, l.lipschitz());
  r.C_tilde = r.C / b.lower;
  r.K = std::max(1.0 / b.lower, 1.0);
  r.k = std::min(1.0 / b.upper, 1.0);
  const double g = std::sqrt(1.0 + r.C_tilde * r.C_tilde);
  r.C0 = r.k / (r.K * g);
  r.C1 = r.K * g;
  r.C2 = 1.0 / r.k;
  double sum = 0.0;
  for (const auto& s : skms) {
    const double R = root_length(s);
    r.lower.push_back(r.C0 * R);
    sum += R;
  }
  r.upper = r.C1 * (r.C2 * sum - static_cast<double>(skms.size() - 1));
  return r;
}

// ---------------------------------------------------------------------------
// Rescaling of skeletal measures

namespace detail {

/// Piecewise-linear vertical CDF of a skeletal measure and its inverses.
class HeightCdf {
 public:
  explicit HeightCdf(const SkeletalRootMeasure& skm) {
    edges_ = skm.density_breaks();
    dens_.resize(edges_.size() - 1);
    cum_.assign(edges_.size(), 0.0);
    for (std::size_t k = 0; k + 1 < edges_.size(); ++k) {
      dens_[k] = skm.vertical_density(0.5 * (edges_[k] + edges_[k + 1]));
      cum_[k + 1] = cum_[k] + dens_[k] * (edges_[k + 1] - edges_[k]);
    }
    total_ = cum_.back();
    if (!(total_ > 0.0)) throw Error(ErrorCode::EmptyMeasure, "skeleton carries no mass");
    for (auto& c : cum_) c /= total_;
    cum_.back() = 1.0;
  }

  double cdf(double y) const {
    if (y <= edges_.front()) return 0.0;
    if (y >= edges_.back()) return 1.0;
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), y) - edges_.begin()) - 1;
    return cum_[k] + dens_[k] / total_ * (y - edges_[k]);
  }

  /// Smallest y with F(y) >= l.
  double quantile(double l) const {
    for (std::size_t k = 0; k + 1 < edges_.size(); ++k)
      if (dens_[k] > 0.0 && cum_[k + 1] >= l) return edges_[k] + std::max(0.0, l - cum_[k]) * total_ / dens_[k];
    return last_charged();
  }

  /// Right limit of the quantile at l.
  double quantile_right(double l) const {
    for (std::size_t k = 0; k + 1 < edges_.size(); ++k)
      if (dens_[k] > 0.0 && cum_[k + 1] > l) return edges_[k] + std::max(0.0, l - cum_[k]) * total_ / dens_[k];
    return last_charged();
  }

  double total() const { return total_; }

 private:
  double last_charged() const {
    for (std::size_t k = dens_.size(); k-- > 0;)
      if (dens_[k] > 0.0) return edges_[k + 1];
    return edges_.back();
  }

  std::vector<double> edges_, dens_, cum_;
  double total_ = 0.0;
};

struct Family {
  const std::vector<SkeletalRootMeasure>* skms = nullptr;
  std::vector<double> lambda;
  std::vector<HeightCdf> cdfs;
  std::vector<std::vector<std::optional<std::size_t>>> parents;

  Family(const std::vector<SkeletalRootMeasure>& s, std::vector<double> lam) : skms(&s), lambda(std::move(lam)) {
    if (s.empty()) throw Error(ErrorCode::EmptyInput, "no skeletons");
    ot1d::require_barycentric_weights(lambda, s.size());
    for (const auto& skm : s) {
      if (skm.dim() != s.front().dim()) throw Error(ErrorCode::DimMismatch, "skeletons differ in dimension");
      cdfs.emplace_back(skm);
      parents.push_back(validate(skm).parents);
    }
  }

  std::size_t m() const { return skms->size(); }
  std::size_t dim() const { return skms->front().dim(); }
  const Limb& limb(std::size_t a, std::size_t i) const { return (*skms)[a].limbs()[i]; }

  /// Levels F_a of every knot, density end and limb end of every measure.
  std::vector<double> base_levels() const {
    std::vector<double> l{0.0, 1.0};
    for (std::size_t a = 0; a < m(); ++a) {
      for (double e : (*skms)[a].density_breaks()) l.push_back(cdfs[a].cdf(e));
      for (const auto& limb : (*skms)[a].limbs())
        for (const auto& k : limb.knots()) l.push_back(cdfs[a].cdf(k.y));
    }
    auto out = merge_breakpoints(std::move(l));
    out.front() = 0.0;
    out.back() = 1.0;
    return out;
  }

  /// True when the rescaled domain of limb i of measure a covers the level l
  /// (tested at slab midpoints, so endpoints never matter).
  bool covers(std::size_t a, std::size_t i, double l) const {
    const double y = cdfs[a].quantile(l);
    return y > limb(a, i).y_lo() && y < limb(a, i).y_hi();
  }

  double ybar(double l) const {
    double y = 0.0;
    for (std::size_t a = 0; a < m(); ++a) y += lambda[a] * cdfs[a].quantile(l);
    return y;
  }
  double ybar_right(double l) const {
    double y = 0.0;
    for (std::size_t a = 0; a < m(); ++a) y += lambda[a] * cdfs[a].quantile_right(l);
    return y;
  }

  template <bool Right>
  std::vector<double> ghost_point(const std::vector<std::size_t>& t, double l) const {
    std::vector<double> x(dim(), 0.0);
    for (std::size_t a = 0; a < m(); ++a) {
      const double y = Right ? cdfs[a].quantile_right(l) : cdfs[a].quantile(l);
      const auto p = limb(a, t[a]).position(y);
      for (std::size_t c = 0; c < dim(); ++c) x[c] += lambda[a] * p[c];
    }
    return x;
  }

  /// Polyline of the un-rescaled ghost curve over the given slabs.
  std::vector<Knot> ghost_polyline(const std::vector<std::size_t>& t, const std::vector<double>& bp,
                                   std::size_t first, std::size_t last) const {
    std::vector<Knot> ks;
    auto push = [&](double y, std::vector<double> x) {
      if (!ks.empty() && y <= ks.back().y + 1e-12) {
        ks.back().x = std::move(x);
        return;
      }
      ks.push_back({y, std::move(x)});
    };
    for (std::size_t s = first; s <= last; ++s) {
      push(ybar_right(bp[s]), ghost_point<true>(t, bp[s]));
      push(ybar(bp[s + 1]), ghost_point<false>(t, bp[s + 1]));
    }
    return ks;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Ghost

struct GhostLimb {
  std::vector<std::size_t> tuple;  // one limb index per measure
  double l_lo = 0.0, l_hi = 0.0;   // rescaled domain
  std::vector<Knot> polyline;      // un-rescaled
  std::vector<std::pair<double, double>> active;  // height intervals carrying barycenter mass
};

namespace detail {

inline std::size_t tuple_count(const Family& fam, std::size_t cap) {
  std::size_t n = 1;
  for (std::size_t a = 0; a < fam.m(); ++a) {
    n *= (*fam.skms)[a].limbs().size();
    if (n > cap)
      throw Error(ErrorCode::GhostTooLarge,
                  "ghost has more than " + std::to_string(cap) + " index tuples; reduce limbs or raise the cap");
  }
  return n;
}

inline std::vector<std::size_t> decode_tuple(const Family& fam, std::size_t code) {
  std::vector<std::size_t> t(fam.m());
  for (std::size_t a = fam.m(); a-- > 0;) {
    const std::size_t n = (*fam.skms)[a].limbs().size();
    t[a] = code % n;
    code /= n;
  }
  return t;
}

/// Slab range [first, last] over which every limb of the tuple exists.
inline std::optional<std::pair<std::size_t, std::size_t>> tuple_slabs(const Family& fam, const std::vector<std::size_t>& t,
                                                                       const std::vector<double>& bp) {
  std::optional<std::size_t> first, last;
  for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
    const double mid = 0.5 * (bp[s] + bp[s + 1]);
    bool ok = true;
    for (std::size_t a = 0; a < fam.m() && ok; ++a) ok = fam.covers(a, t[a], mid);
    if (ok) {
      if (!first) first = s;
      last = s;
    }
  }
  if (!first) return std::nullopt;
  return std::make_pair(*first, *last);
}

}  // namespace detail

inline constexpr std::size_t kDefaultGhostCap = 100000;

inline std::vector<GhostLimb> ghost(const std::vector<SkeletalRootMeasure>& skms, const std::vector<double>& lambda,
                                    std::size_t cap = kDefaultGhostCap) {
  const detail::Family fam(skms, lambda);
  const std::size_t n = detail::tuple_count(fam, cap);
  const auto bp = fam.base_levels();
  std::vector<GhostLimb> out;
  for (std::size_t code = 0; code < n; ++code) {
    auto t = detail::decode_tuple(fam, code);
    const auto range = detail::tuple_slabs(fam, t, bp);
    if (!range) continue;
    GhostLimb g;
    g.l_lo = bp[range->first];
    g.l_hi = bp[range->second + 1];
    g.polyline = fam.ghost_polyline(t, bp, range->first, range->second);
    g.tuple = std::move(t);
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Skeletal barycenter

struct SlabAtom {
  std::vector<std::size_t> tuple;
  double mass = 0.0;  // fraction of the slice
  std::vector<double> x;  // position at the slab midpoint
  double y = 0.0;
};

struct SlabDiagnostics {
  double l_lo = 0.0, l_hi = 0.0;
  double y_lo = 0.0, y_hi = 0.0;
  std::vector<std::size_t> slice_sizes;  // S_alpha
  std::vector<SlabAtom> atoms;
};

struct SkeletalBarycenterOptions {
  std::size_t n_slabs = 64;
  std::size_t ghost_cap = kDefaultGhostCap;
  std::size_t max_repair_rounds = 30;
  discrete_ot::LpOptions lp;
};

struct SkeletalBarycenterResult {
  SkeletalRootMeasure measure;
  std::vector<std::vector<std::size_t>> limb_tuples;  // tuple behind each output limb
  std::vector<SlabDiagnostics> slabs;
  std::vector<GhostLimb> active_ghost;
  std::size_t repair_rounds = 0;
};

namespace detail {

inline SlabDiagnostics solve_slab(const Family& fam, double a, double b, const discrete_ot::LpOptions& lp) {
  SlabDiagnostics sd;
  sd.l_lo = a;
  sd.l_hi = b;
  sd.y_lo = fam.ybar_right(a);
  sd.y_hi = fam.ybar(b);
  const double mid = 0.5 * (a + b);
  const std::size_t m = fam.m(), d = fam.dim();
  std::vector<DiscreteMeasure> slices;
  std::vector<std::vector<std::size_t>> tags(m);
  for (std::size_t al = 0; al < m; ++al) {
    const auto& skm = (*fam.skms)[al];
    const double y = fam.cdfs[al].quantile(mid);
    const double f = skm.vertical_density(y);
    std::vector<double> pos, w;
    for (std::size_t i = 0; i < skm.limbs().size(); ++i) {
      const double mi = skm.limbs()[i].density_at(y);
      if (!(mi > 0.0) || !fam.covers(al, i, mid)) continue;
      const auto p = skm.limbs()[i].position(y);
      pos.insert(pos.end(), p.begin(), p.end());
      w.push_back(mi / f);
      tags[al].push_back(i);
    }
    if (w.empty()) throw Error(ErrorCode::EmptyMeasure, "a layer of an input skeleton carries no mass");
    slices.emplace_back(d, pos, w);
    sd.slice_sizes.push_back(w.size());
  }
  std::vector<discrete_ot::CouplingEntry> entries;
  if (m == 1) {
    for (std::size_t i = 0; i < slices[0].size(); ++i) entries.push_back({{i}, slices[0].weight(i)});
  } else {
    entries = discrete_ot::multimarginal_lp(slices, fam.lambda, lp).entries;
  }
  const double ymid = fam.ybar(mid);
  for (const auto& e : entries) {
    SlabAtom at;
    at.mass = e.mass;
    at.y = ymid;
    at.x.assign(d, 0.0);
    for (std::size_t al = 0; al < m; ++al) {
      at.tuple.push_back(tags[al][e.indices[al]]);
      for (std::size_t c = 0; c < d; ++c) at.x[c] += fam.lambda[al] * slices[al].point(e.indices[al])[c];
    }
    sd.atoms.push_back(std::move(at));
  }
  std::sort(sd.atoms.begin(), sd.atoms.end(), [](const SlabAtom& p, const SlabAtom& q) { return p.tuple < q.tuple; });
  return sd;
}

/// Tuple of the limb this tuple's curve emerges from: every measure whose
/// limb starts at the tuple's first level switches to that limb's parent.
inline std::optional<std::vector<std::size_t>> ancestor(const Family& fam, const std::vector<std::size_t>& t,
                                                        double l_lo) {
  if (l_lo <= 0.0) return std::nullopt;
  auto p = t;
  bool changed = false;
  for (std::size_t a = 0; a < fam.m(); ++a) {
    const double start = fam.cdfs[a].cdf(fam.limb(a, t[a]).y_lo());
    if (start >= l_lo - 1e-9) {
      const auto par = fam.parents[a][t[a]];
      if (!par) return std::nullopt;
      p[a] = *par;
      changed = true;
    }
  }
  if (!changed) return std::nullopt;
  return p;
}

struct Built {
  SkeletalRootMeasure measure;
  std::vector<std::vector<std::size_t>> tuples;
  std::vector<GhostLimb> ghosts;
  std::vector<double> l_lo;
};

inline Built build_output(const Family& fam, const std::vector<double>& bp, const std::vector<SlabDiagnostics>& slabs) {
  // Charged mass per tuple per slab.
  std::map<std::vector<std::size_t>, std::map<std::size_t, double>> charge;
  for (std::size_t s = 0; s < slabs.size(); ++s)
    for (const auto& at : slabs[s].atoms) charge[at.tuple][s] += at.mass;

  std::set<std::vector<std::size_t>> wanted;
  std::vector<std::vector<std::size_t>> stack;
  for (const auto& [t, _] : charge) stack.push_back(t);
  std::map<std::vector<std::size_t>, std::pair<std::size_t, std::size_t>> ranges;
  while (!stack.empty()) {
    auto t = stack.back();
    stack.pop_back();
    if (wanted.count(t)) continue;
    const auto r = tuple_slabs(fam, t, bp);
    if (!r) continue;
    wanted.insert(t);
    ranges[t] = *r;
    if (auto p = ancestor(fam, t, bp[r->first])) stack.push_back(*p);
  }

  std::vector<std::vector<std::size_t>> order(wanted.begin(), wanted.end());
  std::stable_sort(order.begin(), order.end(), [&](const auto& p, const auto& q) { return ranges[p].first < ranges[q].first; });
  std::map<std::vector<std::size_t>, std::size_t> index;
  for (std::size_t i = 0; i < order.size(); ++i) index[order[i]] = i;

  Built out;
  std::vector<Limb> limbs;
  for (const auto& t : order) {
    const auto [first, last] = ranges[t];
    auto poly = fam.ghost_polyline(t, bp, first, last);
    std::vector<DensityPiece> dens;
    GhostLimb g;
    g.tuple = t;
    g.l_lo = bp[first];
    g.l_hi = bp[last + 1];
    if (auto it = charge.find(t); it != charge.end()) {
      for (const auto& [s, mass] : it->second) {
        const double y0 = slabs[s].y_lo, y1 = slabs[s].y_hi;
        if (!(y1 > y0)) continue;
        const double m = mass * (bp[s + 1] - bp[s]) / (y1 - y0);
        if (!dens.empty() && std::abs(dens.back().y_hi - y0) <= 1e-12 && dens.back().m == m) {
          dens.back().y_hi = y1;
        } else {
          dens.push_back({y0, y1, m});
        }
        if (!g.active.empty() && std::abs(g.active.back().second - y0) <= 1e-12)
          g.active.back().second = y1;
        else
          g.active.push_back({y0, y1});
      }
    }
    // Clip density pieces into the polyline domain against rounding.
    for (auto& p : dens) {
      p.y_lo = std::max(p.y_lo, poly.front().y);
      p.y_hi = std::min(p.y_hi, poly.back().y);
    }
    std::erase_if(dens, [](const DensityPiece& p) { return !(p.y_hi > p.y_lo); });
    std::optional<std::size_t> parent;
    if (auto p = ancestor(fam, t, bp[first]); p && index.count(*p)) parent = index[*p];
    g.polyline = poly;
    out.ghosts.push_back(g);
    out.l_lo.push_back(bp[first]);
    limbs.emplace_back(std::move(poly), std::move(dens), parent);
    out.tuples.push_back(t);
  }
  out.measure = SkeletalRootMeasure(std::move(limbs), fam.ybar(1.0));
  return out;
}

/// Rescaled level of a barycenter height.
inline double level_of(const std::vector<SlabDiagnostics>& slabs, double y) {
  for (const auto& s : slabs)
    if (y <= s.y_hi + 1e-12) {
      if (y <= s.y_lo || !(s.y_hi > s.y_lo)) return s.l_lo;
      return s.l_lo + (y - s.y_lo) / (s.y_hi - s.y_lo) * (s.l_hi - s.l_lo);
    }
  return 1.0;
}

}  // namespace detail

/// Layerwise barycenter of skeletal root measures, reconstructed as limbs
/// along the un-rescaled ghost.
inline SkeletalBarycenterResult skeletal_barycenter(const std::vector<SkeletalRootMeasure>& skms,
                                                    const std::vector<double>& lambda,
                                                    const SkeletalBarycenterOptions& opts = {}) {
  if (opts.n_slabs == 0) throw Error(ErrorCode::InvalidArgument, "n_slabs must be positive");
  const detail::Family fam(skms, lambda);
  detail::tuple_count(fam, opts.ghost_cap);

  std::vector<double> levels = fam.base_levels();
  for (std::size_t k = 1; k < opts.n_slabs; ++k)
    levels.push_back(static_cast<double>(k) / static_cast<double>(opts.n_slabs));
  levels = merge_breakpoints(std::move(levels));
  levels.front() = 0.0;
  levels.back() = 1.0;

  std::map<std::pair<double, double>, SlabDiagnostics> cache;
  SkeletalBarycenterResult res;
  for (std::size_t round = 0;; ++round) {
    const std::size_t n = levels.size() - 1;
    std::vector<SlabDiagnostics> slabs(n);
    std::vector<std::size_t> todo;
    for (std::size_t s = 0; s < n; ++s) {
      auto it = cache.find({levels[s], levels[s + 1]});
      if (it != cache.end())
        slabs[s] = it->second;
      else
        todo.push_back(s);
    }
    parallel_for(todo.size(), [&](std::size_t k) {
      const std::size_t s = todo[k];
      slabs[s] = detail::solve_slab(fam, levels[s], levels[s + 1], opts.lp);
    });
    for (std::size_t s : todo) cache[{levels[s], levels[s + 1]}] = slabs[s];

    auto built = detail::build_output(fam, levels, slabs);
    const auto report = validate(built.measure);
    std::vector<double> bad;
    for (const auto& v : report.violations)
      if (v.rule == "W3") bad.push_back(detail::level_of(slabs, v.y));
    if (bad.empty()) {
      res.measure = std::move(built.measure);
      res.limb_tuples = std::move(built.tuples);
      res.active_ghost = std::move(built.ghosts);
      res.slabs = std::move(slabs);
      res.repair_rounds = round;
      return res;
    }
    if (round >= opts.max_repair_rounds) {
      std::ostringstream os;
      os.precision(17);
      os << "barycenter violates the weak no-crossing condition after " << round << " refinement rounds;";
      for (const auto& v : report.violations)
        if (v.rule == "W3") {
          os << " limbs " << v.limb_a << " and " << v.limb_b << " at y=" << v.y << " (tuples";
          for (auto i : built.tuples[v.limb_a]) os << ' ' << i;
          os << " /";
          for (auto i : built.tuples[v.limb_b]) os << ' ' << i;
          os << ");";
        }
      os << " increase the slab count";
      throw Error(ErrorCode::W3ViolationDetected, os.str());
    }
    // Put each crossing on a slab boundary, or halve the slab just below it.
    for (double l : bad) {
      const std::size_t s = interval_index(levels, l);
      const double a = levels[s], b = levels[s + 1];
      if (l > a + 1e-12 && l < b - 1e-12)
        levels.push_back(l);
      else if (l <= a + 1e-12 && s > 0)
        levels.push_back(0.5 * (levels[s - 1] + a));
      else
        levels.push_back(0.5 * (a + b));
    }
    levels = merge_breakpoints(std::move(levels));
    levels.front() = 0.0;
    levels.back() = 1.0;
  }
}

}  // namespace lwot::skeleton
