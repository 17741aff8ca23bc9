#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "lwot/error.hpp"
#include "lwot/measures.hpp"

namespace lwot::ot1d {

/// Remaining-mass crumbs below this are treated as exhausted by the sweeps.
inline constexpr double kSweepEps = 1e-14;

/// Probability measure on the line, atoms sorted by position and merged.
class Discrete1D {
 public:
  Discrete1D() = default;

  Discrete1D(const std::vector<double>& positions, const std::vector<double>& weights) {
    if (positions.size() != weights.size())
      throw Error(ErrorCode::InvalidArgument, "positions and weights differ in length");
    if (positions.empty()) throw Error(ErrorCode::EmptyMeasure, "empty 1D measure");
    std::vector<std::size_t> order(positions.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return positions[a] < positions[b]; });
    for (std::size_t idx : order) {
      const double x = positions[idx];
      const double w = weights[idx];
      if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "non-finite position");
      if (!(w > 0.0) || !std::isfinite(w))
        throw Error(ErrorCode::InvalidArgument, "weights must be positive");
      if (!positions_.empty() && positions_.back() == x) {
        weights_.back() += w;
      } else {
        positions_.push_back(x);
        weights_.push_back(w);
      }
    }
  }

  static Discrete1D from_profile(const VerticalProfile& p) {
    std::vector<double> w(p.masses());
    for (double& v : w) v /= p.total_mass();
    return Discrete1D(p.heights(), w);
  }

  std::size_t size() const noexcept { return positions_.size(); }
  const std::vector<double>& positions() const noexcept { return positions_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double total_mass() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }
  bool is_normalized() const { return std::abs(total_mass() - 1.0) <= 1e-12; }

  /// Left-continuous quantile.
  double quantile(double l) const {
    double run = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      run += weights_[i];
      if (run >= l) return positions_[i];
    }
    return positions_.back();
  }

  friend bool operator==(const Discrete1D&, const Discrete1D&) = default;

 private:
  std::vector<double> positions_;
  std::vector<double> weights_;
};

inline void require_probability(const Discrete1D& a, const char* what) {
  if (!a.is_normalized())
    throw Error(ErrorCode::NotProbability,
                std::string(what) + ": weights sum to " + std::to_string(a.total_mass()));
}

inline void require_barycentric_weights(const std::vector<double>& lambda, std::size_t m) {
  if (lambda.size() != m)
    throw Error(ErrorCode::InvalidArgument, "need one barycentric weight per measure");
  double s = 0.0;
  for (double l : lambda) {
    if (!(l > 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::InvalidArgument, "barycentric weights must be positive");
    s += l;
  }
  if (std::abs(s - 1.0) > 1e-12)
    throw Error(ErrorCode::InvalidArgument, "barycentric weights must sum to 1");
}

/// Squared 2-Wasserstein distance, integrating |q_a - q_b|^2 exactly over
/// the merged cumulative breakpoints (monotone coupling).
inline double w2sq_1d(const Discrete1D& a, const Discrete1D& b) {
  require_probability(a, "w2sq_1d");
  require_probability(b, "w2sq_1d");
  std::size_t i = 0, j = 0;
  double ra = a.weights()[0], rb = b.weights()[0];
  double cost = 0.0;
  while (i < a.size() && j < b.size()) {
    const double step = std::min(ra, rb);
    const double diff = a.positions()[i] - b.positions()[j];
    cost += step * diff * diff;
    ra -= step;
    rb -= step;
    if (ra <= kSweepEps && ++i < a.size()) ra += a.weights()[i];
    if (rb <= kSweepEps && ++j < b.size()) rb += b.weights()[j];
  }
  return cost;
}

/// Barycenter whose quantile is the lambda-average of the input quantiles.
inline Discrete1D barycenter_1d(const std::vector<Discrete1D>& profiles,
                                const std::vector<double>& lambda) {
  if (profiles.empty()) throw Error(ErrorCode::EmptyInput, "no profiles");
  require_barycentric_weights(lambda, profiles.size());
  for (const auto& p : profiles) require_probability(p, "barycenter_1d");
  if (profiles.size() == 1) return profiles.front();

  const std::size_t m = profiles.size();
  std::vector<std::size_t> idx(m, 0);
  std::vector<double> rem(m);
  for (std::size_t a = 0; a < m; ++a) rem[a] = profiles[a].weights()[0];
  std::vector<double> pos, w;
  for (;;) {
    double step = rem[0];
    for (std::size_t a = 1; a < m; ++a) step = std::min(step, rem[a]);
    double x = 0.0;
    for (std::size_t a = 0; a < m; ++a) x += lambda[a] * profiles[a].positions()[idx[a]];
    if (step > 0.0) {
      if (!pos.empty() && pos.back() == x) {
        w.back() += step;
      } else {
        pos.push_back(x);
        w.push_back(step);
      }
    }
    bool done = false;
    for (std::size_t a = 0; a < m; ++a) {
      rem[a] -= step;
      if (rem[a] <= kSweepEps) {
        if (++idx[a] >= profiles[a].size()) {
          done = true;
        } else {
          rem[a] += profiles[a].weights()[idx[a]];
        }
      }
    }
    if (done) break;
  }
  return Discrete1D(pos, w);
}

}  // namespace lwot::ot1d
