#pragma once

// Primal revised simplex for linear programs whose constraints fix the
// marginals of a nonnegative tensor:
//
//   minimize  sum_t c(t) x(t)   over tuples t = (i_1, ..., i_m)
//   s.t.      sum_{t : t_a = k} x(t) = b_a[k]   for every marginal a, atom k
//             x >= 0.
//
// Each marginal sums to the same total, so one row per marginal a >= 2 is
// redundant and dropped; the remaining sum(S_a) - m + 1 rows have full rank.
// Every column has exactly one nonzero per marginal, which keeps pricing
// and column solves cheap. The basis inverse is held densely.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <vector>

#include "lwot/error.hpp"

namespace lwot::lp {

struct SimplexOptions {
  std::size_t refactor_every = 100;
  std::size_t degenerate_streak_for_bland = 50;
  double pivot_tol = 1e-11;
  double mass_threshold = 1e-13;
};

struct SimplexResult {
  std::vector<std::vector<std::size_t>> tuples;  // support of the vertex solution
  std::vector<double> masses;
  double cost = 0.0;
  double dual_objective = 0.0;
  double duality_gap = 0.0;
  double dual_infeasibility = 0.0;
  std::size_t iterations = 0;
};

class MarginalSimplex {
 public:
  MarginalSimplex(std::vector<std::vector<double>> marginals, std::vector<double> costs,
                  SimplexOptions opts = {})
      : b_(std::move(marginals)), cost_(std::move(costs)), opts_(opts) {
    m_ = b_.size();
    if (m_ < 1) throw Error(ErrorCode::EmptyInput, "no marginals");
    sizes_.resize(m_);
    n_cols_ = 1;
    for (std::size_t a = 0; a < m_; ++a) {
      sizes_[a] = b_[a].size();
      if (sizes_[a] == 0) throw Error(ErrorCode::EmptyMeasure, "empty marginal");
      n_cols_ *= sizes_[a];
    }
    if (cost_.size() != n_cols_) throw Error(ErrorCode::InvalidArgument, "cost vector size mismatch");
    row_offset_.resize(m_);
    rows_ = 0;
    for (std::size_t a = 0; a < m_; ++a) {
      row_offset_[a] = rows_;
      rows_ += (a == 0) ? sizes_[a] : sizes_[a] - 1;
    }
    rhs_.assign(rows_, 0.0);
    for (std::size_t a = 0; a < m_; ++a)
      for (std::size_t k = 0; k < sizes_[a]; ++k)
        if (long r = row_of(a, k); r >= 0) rhs_[static_cast<std::size_t>(r)] = b_[a][k];
    cost_scale_ = 1.0;
    for (double c : cost_) cost_scale_ = std::max(cost_scale_, std::abs(c));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t columns() const noexcept { return n_cols_; }

  SimplexResult solve() {
    if (!crash_basis()) {
      artificial_basis();
      run(/*phase_one=*/true);
      double infeas = 0.0;
      for (std::size_t i = 0; i < rows_; ++i)
        if (is_artificial(basis_[i])) infeas += std::max(0.0, xb_[i]);
      if (infeas > 1e-9) throw Error(ErrorCode::InvalidArgument, "marginal LP is infeasible");
    }
    run(/*phase_one=*/false);
    return extract();
  }

  /// Plain-text dump: marginal count and sizes, one weight line per
  /// marginal, then the cost of every tuple in odometer order.
  void dump(std::ostream& os) const {
    os.precision(17);
    os << "marginals " << m_ << "\nsizes";
    for (auto s : sizes_) os << ' ' << s;
    os << '\n';
    for (std::size_t a = 0; a < m_; ++a) {
      os << "weights " << a;
      for (double w : b_[a]) os << ' ' << w;
      os << '\n';
    }
    os << "costs " << n_cols_ << '\n';
    for (std::size_t j = 0; j < n_cols_; ++j) os << cost_[j] << '\n';
  }

 private:
  long row_of(std::size_t a, std::size_t k) const {
    if (a > 0 && k == sizes_[a] - 1) return -1;
    return static_cast<long>(row_offset_[a] + k);
  }
  bool is_artificial(std::size_t col) const { return col >= n_cols_; }

  std::vector<std::size_t> decode(std::size_t col) const {
    std::vector<std::size_t> t(m_);
    for (std::size_t a = m_; a-- > 0;) {
      t[a] = col % sizes_[a];
      col /= sizes_[a];
    }
    return t;
  }
  std::size_t encode(const std::vector<std::size_t>& t) const {
    std::size_t col = 0;
    for (std::size_t a = 0; a < m_; ++a) col = col * sizes_[a] + t[a];
    return col;
  }

  // Rows touched by a column (artificials touch exactly their own row).
  void column_rows(std::size_t col, std::vector<std::size_t>& out) const {
    out.clear();
    if (is_artificial(col)) {
      out.push_back(col - n_cols_);
      return;
    }
    const auto t = decode(col);
    for (std::size_t a = 0; a < m_; ++a)
      if (long r = row_of(a, t[a]); r >= 0) out.push_back(static_cast<std::size_t>(r));
  }

  double col_cost(std::size_t col, bool phase_one) const {
    if (phase_one) return is_artificial(col) ? 1.0 : 0.0;
    return is_artificial(col) ? 0.0 : cost_[col];
  }

  // North-west corner staircase advancing one marginal per step; yields
  // exactly `rows_` columns.
  bool crash_basis() {
    std::vector<std::size_t> idx(m_, 0);
    std::vector<double> rem(m_);
    for (std::size_t a = 0; a < m_; ++a) rem[a] = b_[a][0];
    basis_.clear();
    for (;;) {
      basis_.push_back(encode(idx));
      double step = std::numeric_limits<double>::infinity();
      std::size_t adv = m_;
      for (std::size_t a = 0; a < m_; ++a) {
        if (idx[a] + 1 >= sizes_[a]) continue;
        if (rem[a] < step) {
          step = rem[a];
          adv = a;
        }
      }
      if (adv == m_) break;
      for (std::size_t a = 0; a < m_; ++a) rem[a] -= step;
      ++idx[adv];
      rem[adv] += b_[adv][idx[adv]];
    }
    if (basis_.size() != rows_) return false;
    if (!refactor()) return false;
    for (double v : xb_)
      if (v < -1e-12) return false;
    return true;
  }

  void artificial_basis() {
    basis_.resize(rows_);
    for (std::size_t i = 0; i < rows_; ++i) basis_[i] = n_cols_ + i;
    refactor();
  }

  // Gauss-Jordan inversion of the basis matrix; false if singular.
  bool refactor() {
    const std::size_t r = rows_;
    std::vector<double> a(r * r, 0.0);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < r; ++i) {
      column_rows(basis_[i], rows);
      for (std::size_t k : rows) a[k * r + i] = 1.0;
    }
    binv_.assign(r * r, 0.0);
    for (std::size_t i = 0; i < r; ++i) binv_[i * r + i] = 1.0;
    for (std::size_t c = 0; c < r; ++c) {
      std::size_t piv = c;
      for (std::size_t i = c + 1; i < r; ++i)
        if (std::abs(a[i * r + c]) > std::abs(a[piv * r + c])) piv = i;
      if (std::abs(a[piv * r + c]) < 1e-12) return false;
      if (piv != c) {
        for (std::size_t k = 0; k < r; ++k) {
          std::swap(a[piv * r + k], a[c * r + k]);
          std::swap(binv_[piv * r + k], binv_[c * r + k]);
        }
      }
      const double inv = 1.0 / a[c * r + c];
      for (std::size_t k = 0; k < r; ++k) {
        a[c * r + k] *= inv;
        binv_[c * r + k] *= inv;
      }
      for (std::size_t i = 0; i < r; ++i) {
        if (i == c) continue;
        const double f = a[i * r + c];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < r; ++k) {
          a[i * r + k] -= f * a[c * r + k];
          binv_[i * r + k] -= f * binv_[c * r + k];
        }
      }
    }
    xb_.assign(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += binv_[i * r + k] * rhs_[k];
      xb_[i] = std::abs(s) < 1e-15 ? 0.0 : s;
    }
    return true;
  }

  void compute_duals(bool phase_one) {
    const std::size_t r = rows_;
    y_.assign(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      const double cb = col_cost(basis_[i], phase_one);
      if (cb == 0.0) continue;
      for (std::size_t k = 0; k < r; ++k) y_[k] += cb * binv_[i * r + k];
    }
  }

  // Reduced costs of all structural columns via an odometer over tuples.
  // Returns the entering column or n_cols_ when optimal.
  std::size_t price(bool phase_one, bool bland, double& most_negative) {
    std::vector<std::vector<double>> ya(m_);
    for (std::size_t a = 0; a < m_; ++a) {
      ya[a].resize(sizes_[a]);
      for (std::size_t k = 0; k < sizes_[a]; ++k) {
        const long r = row_of(a, k);
        ya[a][k] = r >= 0 ? y_[static_cast<std::size_t>(r)] : 0.0;
      }
    }
    const double tol = 1e-12 * (phase_one ? 1.0 : cost_scale_);
    std::vector<std::size_t> t(m_, 0);
    std::size_t best = n_cols_;
    double best_val = -tol;
    most_negative = 0.0;
    for (std::size_t col = 0; col < n_cols_; ++col) {
      double d = phase_one ? 0.0 : cost_[col];
      for (std::size_t a = 0; a < m_; ++a) d -= ya[a][t[a]];
      most_negative = std::min(most_negative, d);
      if (d < best_val) {
        best = col;
        best_val = d;
        if (bland) return best;
      }
      for (std::size_t a = m_; a-- > 0;) {
        if (++t[a] < sizes_[a]) break;
        t[a] = 0;
      }
    }
    return best;
  }

  void run(bool phase_one) {
    const std::size_t r = rows_;
    std::vector<std::size_t> rows;
    std::vector<double> dvec(r);
    std::size_t since_refactor = 0;
    std::size_t degenerate_streak = 0;
    const std::size_t max_iter = 100 * (r + 10) + 10 * n_cols_;
    for (std::size_t it = 0; it < max_iter; ++it) {
      compute_duals(phase_one);
      const bool bland = degenerate_streak >= opts_.degenerate_streak_for_bland;
      double most_negative = 0.0;
      const std::size_t enter = price(phase_one, bland, most_negative);
      if (enter == n_cols_) {
        dual_infeasibility_ = std::max(0.0, -most_negative);
        return;
      }
      column_rows(enter, rows);
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t k : rows) s += binv_[i * r + k];
        dvec[i] = s;
      }
      // Ratio test; ties go to the smallest basic column id.
      std::size_t leave = r;
      double theta = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < r; ++i) {
        double ratio;
        if (!phase_one && is_artificial(basis_[i]) && std::abs(dvec[i]) > opts_.pivot_tol) {
          ratio = 0.0;
        } else if (dvec[i] > opts_.pivot_tol) {
          ratio = std::max(0.0, xb_[i]) / dvec[i];
        } else {
          continue;
        }
        if (ratio < theta - 1e-15 ||
            (ratio <= theta + 1e-15 && leave < r && basis_[i] < basis_[leave])) {
          theta = std::min(theta, ratio);
          leave = i;
        }
      }
      if (leave == r) throw Error(ErrorCode::InvalidArgument, "marginal LP reported unbounded");
      degenerate_streak = theta <= 1e-15 ? degenerate_streak + 1 : 0;
      for (std::size_t i = 0; i < r; ++i) xb_[i] -= theta * dvec[i];
      xb_[leave] = theta;
      const double piv = dvec[leave];
      for (std::size_t k = 0; k < r; ++k) binv_[leave * r + k] /= piv;
      for (std::size_t i = 0; i < r; ++i) {
        if (i == leave || dvec[i] == 0.0) continue;
        const double f = dvec[i];
        for (std::size_t k = 0; k < r; ++k) binv_[i * r + k] -= f * binv_[leave * r + k];
      }
      basis_[leave] = enter;
      ++iterations_;
      if (++since_refactor >= opts_.refactor_every) {
        since_refactor = 0;
        if (!refactor()) throw Error(ErrorCode::InvalidArgument, "basis became singular");
      }
    }
    throw Error(ErrorCode::InvalidArgument, "simplex iteration limit exceeded");
  }

  SimplexResult extract() {
    refactor();
    compute_duals(false);
    double most_negative = 0.0;
    price(false, false, most_negative);
    SimplexResult res;
    res.dual_infeasibility = std::max(0.0, -most_negative);
    res.iterations = iterations_;
    std::vector<std::pair<std::size_t, double>> support;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (is_artificial(basis_[i])) continue;
      if (xb_[i] > opts_.mass_threshold) support.emplace_back(basis_[i], xb_[i]);
    }
    std::sort(support.begin(), support.end());
    for (auto& [col, mass] : support) {
      res.tuples.push_back(decode(col));
      res.masses.push_back(mass);
      res.cost += cost_[col] * mass;
    }
    for (std::size_t k = 0; k < rows_; ++k) res.dual_objective += rhs_[k] * y_[k];
    res.duality_gap = std::abs(res.cost - res.dual_objective);
    return res;
  }

  std::vector<std::vector<double>> b_;
  std::vector<double> cost_;
  SimplexOptions opts_;
  std::size_t m_ = 0;
  std::vector<std::size_t> sizes_;
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> row_offset_;
  std::size_t rows_ = 0;
  std::vector<double> rhs_;
  double cost_scale_ = 1.0;

  std::vector<std::size_t> basis_;
  std::vector<double> binv_;
  std::vector<double> xb_;
  std::vector<double> y_;
  std::size_t iterations_ = 0;
  double dual_infeasibility_ = 0.0;
};

}  // namespace lwot::lp
