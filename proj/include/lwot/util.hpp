#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace lwot {

/// Breakpoints closer than this are treated as one when intervals from
/// different measures are merged into a common refinement.
inline constexpr double kBreakpointSnap = 1e-12;

/// Worker count from LWOT_THREADS (0 or unset means hardware concurrency).
inline std::size_t worker_count() {
  std::size_t n = 0;
  if (const char* env = std::getenv("LWOT_THREADS")) {
    try {
      n = static_cast<std::size_t>(std::stoul(env));
    } catch (...) {
      n = 0;
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Runs fn(i) for i in [0, n). Results must be written by index so the
/// outcome does not depend on scheduling. The first exception thrown by
/// any task is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1 || n < 4) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Sorts, then drops values within `tol` of the previously kept one.
inline std::vector<double> merge_breakpoints(std::vector<double> pts,
                                             double tol = kBreakpointSnap) {
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  out.reserve(pts.size());
  for (double p : pts) {
    if (out.empty() || p - out.back() > tol) out.push_back(p);
  }
  return out;
}

/// Index of the interval (bp[k], bp[k+1]] of a sorted breakpoint list that
/// contains t, clamped to the valid range.
inline std::size_t interval_index(const std::vector<double>& bp, double t) {
  auto it = std::lower_bound(bp.begin(), bp.end(), t);
  std::size_t k = static_cast<std::size_t>(it - bp.begin());
  if (k == 0) return 0;
  return std::min(k - 1, bp.size() - 2);
}

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

}  // namespace lwot
