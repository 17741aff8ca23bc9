#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lwot/error.hpp"

namespace lwot {

/// Finitely many weighted points in R^d. Positions are stored flattened,
/// point i occupies [i*d, (i+1)*d).
///
/// The plain constructor keeps atoms in the order given (the LP solvers
/// report couplings by these indices). `canonical` additionally merges
/// exactly coincident points and sorts lexicographically.
class DiscreteMeasure {
 public:
  static constexpr double kNormTol = 1e-12;

  DiscreteMeasure() = default;

  DiscreteMeasure(std::size_t dim, std::vector<double> positions,
                  std::vector<double> weights)
      : dim_(dim), positions_(std::move(positions)), weights_(std::move(weights)) {
    if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
    if (positions_.size() != dim_ * weights_.size())
      throw Error(ErrorCode::InvalidArgument, "position array does not match weights");
    if (weights_.empty()) throw Error(ErrorCode::EmptyMeasure, "no atoms");
    for (double w : weights_)
      if (!(w > 0.0) || !std::isfinite(w))
        throw Error(ErrorCode::InvalidArgument, "atom weights must be positive and finite");
    for (double p : positions_)
      if (!std::isfinite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite position");
  }

  static DiscreteMeasure canonical(std::size_t dim, const std::vector<double>& positions,
                                   const std::vector<double>& weights) {
    DiscreteMeasure raw(dim, positions, weights);
    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(raw.point(a).begin(), raw.point(a).end(),
                                          raw.point(b).begin(), raw.point(b).end());
    });
    std::vector<double> pos;
    std::vector<double> w;
    for (std::size_t idx : order) {
      auto p = raw.point(idx);
      if (!w.empty() && std::equal(p.begin(), p.end(), pos.end() - static_cast<long>(dim))) {
        w.back() += raw.weight(idx);
      } else {
        pos.insert(pos.end(), p.begin(), p.end());
        w.push_back(raw.weight(idx));
      }
    }
    return DiscreteMeasure(dim, std::move(pos), std::move(w));
  }

  static DiscreteMeasure dirac(std::vector<double> x) {
    const std::size_t d = x.size();
    return DiscreteMeasure(d, std::move(x), {1.0});
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> point(std::size_t i) const {
    return {positions_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& positions() const noexcept { return positions_; }

  double total_mass() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }
  bool is_normalized() const { return std::abs(total_mass() - 1.0) <= kNormTol; }

  DiscreteMeasure normalized() const {
    const double t = total_mass();
    std::vector<double> w(weights_);
    for (double& v : w) v /= t;
    return DiscreteMeasure(dim_, positions_, std::move(w));
  }

  void require_probability(const char* what) const {
    if (!is_normalized())
      throw Error(ErrorCode::NotProbability,
                  std::string(what) + ": weights sum to " + std::to_string(total_mass()));
  }

  friend bool operator==(const DiscreteMeasure&, const DiscreteMeasure&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> positions_;
  std::vector<double> weights_;
};

}  // namespace lwot
