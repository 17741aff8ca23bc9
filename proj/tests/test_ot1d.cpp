#include <gtest/gtest.h>

#include <cmath>

#include "lwot/discrete_ot.hpp"
#include "lwot/ot1d.hpp"
#include "support/dense_simplex.hpp"
#include "support/random_measures.hpp"

using namespace lwot;
using ot1d::Discrete1D;

namespace {

DiscreteMeasure as_discrete(const Discrete1D& a) {
  return DiscreteMeasure(1, a.positions(), a.weights());
}

// min_eta sum_a lambda_a W2^2(eta, mu_a) over eta supported on `grid`,
// written as one LP with a coupling per input measure.
double grid_barycenter_lp(const std::vector<Discrete1D>& ms, const std::vector<double>& lambda,
                          const std::vector<double>& grid, std::vector<double>* eta_out) {
  const std::size_t G = grid.size();
  std::size_t nvar = G;
  std::vector<std::size_t> offset;
  for (const auto& mu : ms) {
    offset.push_back(nvar);
    nvar += G * mu.size();
  }
  std::vector<std::vector<double>> A;
  std::vector<double> b, c(nvar, 0.0);
  for (std::size_t a = 0; a < ms.size(); ++a) {
    const std::size_t K = ms[a].size();
    for (std::size_t g = 0; g < G; ++g) {
      std::vector<double> row(nvar, 0.0);
      row[g] = -1.0;
      for (std::size_t k = 0; k < K; ++k) row[offset[a] + g * K + k] = 1.0;
      A.push_back(row);
      b.push_back(0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const double diff = grid[g] - ms[a].positions()[k];
        c[offset[a] + g * K + k] = lambda[a] * diff * diff;
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> row(nvar, 0.0);
      for (std::size_t g = 0; g < G; ++g) row[offset[a] + g * K + k] = 1.0;
      A.push_back(row);
      b.push_back(ms[a].weights()[k]);
    }
  }
  auto res = oracle::solve_dense_lp(A, b, c);
  EXPECT_TRUE(res.has_value());
  if (eta_out) eta_out->assign(res->x.begin(), res->x.begin() + static_cast<long>(G));
  return res->value;
}

double objective(const Discrete1D& bar, const std::vector<Discrete1D>& ms,
                 const std::vector<double>& lambda) {
  double s = 0.0;
  for (std::size_t a = 0; a < ms.size(); ++a) s += lambda[a] * ot1d::w2sq_1d(bar, ms[a]);
  return s;
}

}  // namespace

TEST(W2sq1d, DiracShift) {
  EXPECT_DOUBLE_EQ(ot1d::w2sq_1d(Discrete1D({0.0}, {1.0}), Discrete1D({2.0}, {1.0})), 4.0);
}

TEST(W2sq1d, MonotoneUnitShift) {
  EXPECT_DOUBLE_EQ(ot1d::w2sq_1d(Discrete1D({0.0, 1.0}, {0.5, 0.5}), Discrete1D({1.0, 2.0}, {0.5, 0.5})),
                   1.0);
}

TEST(W2sq1d, MatchesTransportLp) {
  testgen::Rng rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> pa(5), pb(5);
    for (auto& v : pa) v = testgen::uniform(rng, -3, 3);
    for (auto& v : pb) v = testgen::uniform(rng, -3, 3);
    Discrete1D a(pa, testgen::random_simplex(rng, 5)), b(pb, testgen::random_simplex(rng, 5));
    const double lp = discrete_ot::transport_lp(as_discrete(a), as_discrete(b)).cost;
    EXPECT_NEAR(ot1d::w2sq_1d(a, b), lp, 1e-9);
  }
}

TEST(W2sq1d, RejectsUnnormalized) {
  try {
    ot1d::w2sq_1d(Discrete1D({0.0}, {0.5}), Discrete1D({0.0}, {1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotProbability);
  }
}

TEST(W2sq1d, MetricAxioms) {
  testgen::Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const auto a = testgen::random_1d(rng, 6), b = testgen::random_1d(rng, 6),
               c = testgen::random_1d(rng, 6);
    EXPECT_EQ(ot1d::w2sq_1d(a, b), ot1d::w2sq_1d(b, a));
    EXPECT_EQ(ot1d::w2sq_1d(a, a), 0.0);
    const double ab = std::sqrt(ot1d::w2sq_1d(a, b));
    const double bc = std::sqrt(ot1d::w2sq_1d(b, c));
    const double ac = std::sqrt(ot1d::w2sq_1d(a, c));
    EXPECT_LE(ac, ab + bc + 1e-9);
  }
}

TEST(W2sq1d, TranslationGivesSquaredShift) {
  testgen::Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = testgen::random_1d(rng, 7);
    const double h = testgen::uniform(rng, -2, 2);
    std::vector<double> shifted(a.positions());
    for (auto& v : shifted) v += h;
    const double got = ot1d::w2sq_1d(a, Discrete1D(shifted, a.weights()));
    EXPECT_NEAR(got, h * h, 1e-12);
  }
}

TEST(Barycenter1d, MidpointOfDiracs) {
  const auto bar = ot1d::barycenter_1d({Discrete1D({0.0}, {1.0}), Discrete1D({1.0}, {1.0})}, {0.5, 0.5});
  EXPECT_EQ(bar, Discrete1D({0.5}, {1.0}));
}

TEST(Barycenter1d, TwoAtomExampleMatchesGridLp) {
  std::vector<Discrete1D> ms{Discrete1D({0.0, 1.0}, {0.5, 0.5}), Discrete1D({0.0, 3.0}, {0.5, 0.5})};
  const std::vector<double> lambda{0.5, 0.5};
  const auto bar = ot1d::barycenter_1d(ms, lambda);
  EXPECT_EQ(bar, Discrete1D({0.0, 2.0}, {0.5, 0.5}));
  std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  std::vector<double> eta;
  const double best = grid_barycenter_lp(ms, lambda, grid, &eta);
  EXPECT_NEAR(objective(bar, ms, lambda), best, 1e-12);
  EXPECT_NEAR(eta[0], 0.5, 1e-12);
  EXPECT_NEAR(eta[4], 0.5, 1e-12);
}

TEST(Barycenter1d, SingleProfileIdentity) {
  const Discrete1D a({0.0, 2.0, 5.0}, {0.2, 0.3, 0.5});
  EXPECT_EQ(ot1d::barycenter_1d({a}, {1.0}), a);
}

TEST(Barycenter1d, EmptyInput) {
  try {
    ot1d::barycenter_1d({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Barycenter1d, QuantileAffinityAtBreakpoints) {
  testgen::Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = testgen::uniform_int(rng, 2, 4);
    std::vector<Discrete1D> ms;
    for (std::size_t a = 0; a < m; ++a) ms.push_back(testgen::random_1d(rng, 5));
    const auto lambda = testgen::random_simplex(rng, m);
    const auto bar = ot1d::barycenter_1d(ms, lambda);
    std::vector<double> bps;
    for (const auto& mu : ms) {
      double run = 0.0;
      for (double w : mu.weights()) bps.push_back(run += w);
    }
    for (double l : bps) {
      // Probe just inside each refinement interval on both sides.
      for (double t : {l - 1e-9, l + 1e-9}) {
        if (t <= 0.0 || t > 1.0) continue;
        double expect = 0.0;
        for (std::size_t a = 0; a < m; ++a) expect += lambda[a] * ms[a].quantile(t);
        EXPECT_NEAR(bar.quantile(t), expect, 1e-12);
      }
    }
  }
}

TEST(Barycenter1d, BeatsRandomSupportPerturbations) {
  testgen::Rng rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Discrete1D> ms{testgen::random_1d(rng, 4), testgen::random_1d(rng, 4),
                               testgen::random_1d(rng, 4)};
    const auto lambda = testgen::random_simplex(rng, 3);
    const auto bar = ot1d::barycenter_1d(ms, lambda);
    const double best = objective(bar, ms, lambda);
    for (int k = 0; k < 200; ++k) {
      std::vector<double> pos(bar.positions());
      for (auto& p : pos) p += testgen::uniform(rng, -0.3, 0.3);
      EXPECT_LE(best, objective(Discrete1D(pos, bar.weights()), ms, lambda) + 1e-12);
    }
  }
}
