#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lwot/discrete_ot.hpp"
#include "support/dense_simplex.hpp"
#include "support/random_measures.hpp"

using namespace lwot;
using namespace lwot::discrete_ot;

namespace {

// Full multi-marginal LP with every marginal row kept, solved by the dense oracle.
double oracle_multimarginal(const std::vector<DiscreteMeasure>& ms, const std::vector<double>& lambda) {
  const std::size_t m = ms.size();
  std::size_t n = 1;
  for (const auto& mu : ms) n *= mu.size();
  std::vector<std::vector<double>> A;
  std::vector<double> b;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t k = 0; k < ms[a].size(); ++k) {
      A.emplace_back(n, 0.0);
      b.push_back(ms[a].weight(k));
    }
  std::vector<double> c(n);
  std::vector<std::size_t> t(m, 0);
  for (std::size_t col = 0; col < n; ++col) {
    double cost = 0.0;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t bb = 0; bb < m; ++bb) {
        if (a == bb) continue;
        double sq = 0.0;
        for (std::size_t k = 0; k < ms[a].dim(); ++k) {
          const double diff = ms[a].point(t[a])[k] - ms[bb].point(t[bb])[k];
          sq += diff * diff;
        }
        cost += lambda[a] * lambda[bb] * sq;
      }
    c[col] = cost;
    std::size_t row = 0;
    for (std::size_t a = 0; a < m; ++a) {
      A[row + t[a]][col] = 1.0;
      row += ms[a].size();
    }
    for (std::size_t a = m; a-- > 0;) {
      if (++t[a] < ms[a].size()) break;
      t[a] = 0;
    }
  }
  auto res = oracle::solve_dense_lp(A, b, c);
  EXPECT_TRUE(res.has_value());
  return res->value;
}

double oracle_transport(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  const std::size_t n = a.size() * b.size();
  std::vector<std::vector<double>> A;
  std::vector<double> rhs, c(n);
  for (std::size_t i = 0; i < a.size(); ++i) {
    A.emplace_back(n, 0.0);
    for (std::size_t j = 0; j < b.size(); ++j) A.back()[i * b.size() + j] = 1.0;
    rhs.push_back(a.weight(i));
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    A.emplace_back(n, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) A.back()[i * b.size() + j] = 1.0;
    rhs.push_back(b.weight(j));
  }
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(); ++k) {
        const double diff = a.point(i)[k] - b.point(j)[k];
        s += diff * diff;
      }
      c[i * b.size() + j] = s;
    }
  auto res = oracle::solve_dense_lp(A, rhs, c);
  EXPECT_TRUE(res.has_value());
  return res->value;
}

void expect_marginals(const MultiCoupling& g, const std::vector<DiscreteMeasure>& ms) {
  for (std::size_t a = 0; a < ms.size(); ++a) {
    std::vector<double> got(ms[a].size(), 0.0);
    for (const auto& e : g.entries) {
      EXPECT_GT(e.mass, 0.0);
      got[e.indices[a]] += e.mass;
    }
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], ms[a].weight(k), 1e-10);
  }
}

std::size_t support_bound(const std::vector<DiscreteMeasure>& ms) {
  std::size_t s = 0;
  for (const auto& mu : ms) s += mu.size();
  return s - ms.size() + 1;
}

DiscreteMeasure segment(const std::vector<double>& dir, std::size_t n) {
  std::vector<double> pos;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = (k + 0.5) / static_cast<double>(n);
    for (double v : dir) pos.push_back(t * v);
  }
  return DiscreteMeasure(dir.size(), pos, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

}  // namespace

TEST(TransportLp, IdenticalMeasuresCostZero) {
  testgen::Rng rng(1);
  const auto a = testgen::random_discrete(rng, 2, 5);
  EXPECT_NEAR(transport_lp(a, a).cost, 0.0, 1e-14);
}

TEST(TransportLp, SinglePair) {
  const auto a = DiscreteMeasure::dirac({0.0, 0.0});
  const auto b = DiscreteMeasure::dirac({3.0, 4.0});
  EXPECT_DOUBLE_EQ(transport_lp(a, b).cost, 25.0);
}

TEST(TransportLp, ThreeByThreeMatchesPermutationEnumeration) {
  testgen::Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> pa(6), pb(6);
    for (auto& v : pa) v = testgen::uniform(rng, -2, 2);
    for (auto& v : pb) v = testgen::uniform(rng, -2, 2);
    const std::vector<double> w(3, 1.0 / 3.0);
    DiscreteMeasure a(2, pa, w), b(2, pb, w);
    std::vector<int> perm{0, 1, 2};
    double best = 1e300;
    do {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) {
        const double dx = pa[2 * i] - pb[2 * perm[i]], dy = pa[2 * i + 1] - pb[2 * perm[i] + 1];
        s += (dx * dx + dy * dy) / 3.0;
      }
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(transport_lp(a, b).cost, best, 1e-12);
  }
}

TEST(TransportLp, MatchesDenseOracleAndIsSparseFeasible) {
  testgen::Rng rng(3);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t d = testgen::uniform_int(rng, 1, 3);
    const auto a = testgen::random_discrete(rng, d, testgen::uniform_int(rng, 1, 6));
    const auto b = testgen::random_discrete(rng, d, testgen::uniform_int(rng, 1, 6));
    const auto plan = transport_lp(a, b);
    EXPECT_NEAR(plan.cost, oracle_transport(a, b), 1e-9);
    EXPECT_LE(plan.entries.size(), a.size() + b.size() - 1);
    EXPECT_LE(std::abs(plan.duality_gap), 1e-9);
    std::vector<double> ra(a.size(), 0.0), rb(b.size(), 0.0);
    for (const auto& e : plan.entries) {
      ra[e.i] += e.mass;
      rb[e.j] += e.mass;
    }
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(ra[i], a.weight(i), 1e-10);
    for (std::size_t j = 0; j < b.size(); ++j) EXPECT_NEAR(rb[j], b.weight(j), 1e-10);
  }
}

TEST(TransportLp, DimensionMismatch) {
  try {
    transport_lp(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({0.0, 1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimMismatch);
  }
}

TEST(MultimarginalLp, AllDiracsSameSinglePoint) {
  const auto x = DiscreteMeasure::dirac({1.0, -2.0});
  const auto g = multimarginal_lp({x, x, x}, {0.2, 0.3, 0.5});
  ASSERT_EQ(g.entries.size(), 1u);
  EXPECT_NEAR(g.cost, 0.0, 1e-15);
}

TEST(MultimarginalLp, TwoMarginalsAreHalfTransport) {
  testgen::Rng rng(5);
  for (int rep = 0; rep < 40; ++rep) {
    const auto a = testgen::random_discrete(rng, 2, testgen::uniform_int(rng, 1, 5));
    const auto b = testgen::random_discrete(rng, 2, testgen::uniform_int(rng, 1, 5));
    const auto g = multimarginal_lp({a, b}, {0.5, 0.5});
    const auto plan = transport_lp(a, b);
    EXPECT_NEAR(g.cost, 0.5 * plan.cost, 1e-10);
    // Same deterministic pivoting on identical data up to a cost scale.
    ASSERT_EQ(g.entries.size(), plan.entries.size());
    for (std::size_t k = 0; k < plan.entries.size(); ++k) {
      EXPECT_EQ(g.entries[k].indices[0], plan.entries[k].i);
      EXPECT_EQ(g.entries[k].indices[1], plan.entries[k].j);
    }
  }
}

TEST(MultimarginalLp, MatchesDenseOracleRandom) {
  testgen::Rng rng(6);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t m = testgen::uniform_int(rng, 2, 3);
    const std::size_t d = testgen::uniform_int(rng, 1, 2);
    std::vector<DiscreteMeasure> ms;
    for (std::size_t a = 0; a < m; ++a)
      ms.push_back(testgen::random_discrete(rng, d, testgen::uniform_int(rng, 1, 4)));
    const auto lambda = testgen::random_simplex(rng, m);
    const auto g = multimarginal_lp(ms, lambda);
    EXPECT_NEAR(g.cost, oracle_multimarginal(ms, lambda), 1e-9);
    EXPECT_LE(std::abs(g.duality_gap), 1e-9);
    EXPECT_LE(g.dual_infeasibility, 1e-9);
    EXPECT_LE(g.entries.size(), support_bound(ms));
    expect_marginals(g, ms);
  }
}

TEST(MultimarginalLp, ColumnCap) {
  testgen::Rng rng(7);
  std::vector<DiscreteMeasure> ms;
  for (int a = 0; a < 3; ++a) ms.push_back(testgen::random_discrete(rng, 1, 10));
  LpOptions opts;
  opts.column_cap = 999;
  try {
    multimarginal_lp(ms, {0.2, 0.3, 0.5}, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProblemTooLarge);
    EXPECT_NE(std::string(e.what()).find("thin"), std::string::npos);
  }
}

TEST(MultimarginalLp, OrthogonalSegmentsProductIsOptimal) {
  const std::size_t n = 20;
  std::vector<DiscreteMeasure> ms{segment({1, 0, 0}, n), segment({0, 1, 0}, n), segment({0, 0, 1}, n)};
  const std::vector<double> lambda(3, 1.0 / 3.0);
  const auto g = multimarginal_lp(ms, lambda);
  double product = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        product += multimarginal_cost(ms, lambda, {i, j, k}) / static_cast<double>(n * n * n);
  EXPECT_NEAR(g.cost, product, 1e-8);
  EXPECT_LE(g.entries.size(), support_bound(ms));
}

TEST(Pushforward, DiracTupleAndMidpoint) {
  const auto x = DiscreteMeasure::dirac({0.25, 1.5});
  MultiCoupling g;
  g.entries.push_back({{0, 0}, 1.0});
  EXPECT_EQ(barycenter_from_coupling(g, {x, x}, {0.5, 0.5}), x);
  const auto bar = w_barycenter({DiscreteMeasure::dirac({0.0, 0.0}), DiscreteMeasure::dirac({1.0, 0.0})},
                                {0.5, 0.5});
  EXPECT_EQ(bar, DiscreteMeasure::dirac({0.5, 0.0}));
}

TEST(Pushforward, TwoLimbLevelSupportWithinGrid) {
  for (double l : {0.25, 0.5, 1.0}) {
    const DiscreteMeasure a = DiscreteMeasure::dirac({0.0});
    const DiscreteMeasure b(1, {0.0, l}, {0.5, 0.5});
    const auto bar = w_barycenter({a, b}, {0.5, 0.5});
    for (std::size_t i = 0; i < bar.size(); ++i) {
      const double x = bar.point(i)[0];
      EXPECT_TRUE(std::abs(x) < 1e-12 || std::abs(x - l / 2) < 1e-12 || std::abs(x - l) < 1e-12);
    }
    EXPECT_EQ(bar, DiscreteMeasure(1, {0.0, l / 2}, {0.5, 0.5}));
  }
}

TEST(WBarycenter, SingleMeasureIsItself) {
  testgen::Rng rng(8);
  const auto a = testgen::random_discrete(rng, 2, 4);
  const auto bar = w_barycenter({a}, {1.0});
  EXPECT_EQ(bar, DiscreteMeasure::canonical(2, a.positions(), a.weights()));
}

TEST(WBarycenter, AgreesWithQuantileAveraging) {
  testgen::Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = testgen::random_1d(rng, 2), b = testgen::random_1d(rng, 2);
    const auto lambda = testgen::random_simplex(rng, 2);
    const auto lp = w_barycenter({DiscreteMeasure(1, a.positions(), a.weights()),
                                  DiscreteMeasure(1, b.positions(), b.weights())},
                                 lambda);
    const auto q = ot1d::barycenter_1d({a, b}, lambda);
    ASSERT_EQ(lp.size(), q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      EXPECT_NEAR(lp.point(i)[0], q.positions()[i], 1e-9);
      EXPECT_NEAR(lp.weight(i), q.weights()[i], 1e-9);
    }
  }
}

TEST(WBarycenter, SupportBoundRandom) {
  testgen::Rng rng(10);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = testgen::uniform_int(rng, 2, 4);
    std::vector<DiscreteMeasure> ms;
    for (std::size_t a = 0; a < m; ++a)
      ms.push_back(testgen::random_discrete(rng, 2, testgen::uniform_int(rng, 1, 4)));
    const auto bar = w_barycenter(ms, testgen::random_simplex(rng, m));
    EXPECT_LE(bar.size(), support_bound(ms));
  }
}

// Exhaustive search over vertex couplings: every extreme point of the
// coupling polytope is found by some basis, and the objective of a Delta
// image is evaluated against each input with the transport oracle.
TEST(WBarycenter, MatchesBruteForceOverCouplingImages) {
  testgen::Rng rng(11);
  for (int rep = 0; rep < 15; ++rep) {
    const std::size_t m = testgen::uniform_int(rng, 2, 3);
    std::vector<DiscreteMeasure> ms;
    for (std::size_t a = 0; a < m; ++a)
      ms.push_back(testgen::random_discrete(rng, 1 + rep % 2, testgen::uniform_int(rng, 1, 3)));
    const auto lambda = testgen::random_simplex(rng, m);
    const auto bar = w_barycenter(ms, lambda);
    const double got = barycenter_objective(bar, ms, lambda);
    // Random costs on the product support visit many vertices; the lambda
    // cost is one of them, so the minimum over images bounds from below.
    double best = 1e300;
    std::size_t n = 1;
    for (const auto& mu : ms) n *= mu.size();
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> cost(n);
      for (auto& v : cost) v = testgen::uniform(rng, 0, 1);
      std::vector<std::vector<double>> marg;
      for (const auto& mu : ms) marg.push_back(mu.weights());
      const auto res = lp::MarginalSimplex(marg, cost).solve();
      MultiCoupling g;
      for (std::size_t k = 0; k < res.tuples.size(); ++k) g.entries.push_back({res.tuples[k], res.masses[k]});
      const auto img = barycenter_from_coupling(g, ms, lambda);
      double obj = 0.0;
      for (std::size_t a = 0; a < m; ++a) obj += lambda[a] * oracle_transport(img, ms[a]);
      best = std::min(best, obj);
    }
    EXPECT_LE(got, best + 1e-8);
  }
}

TEST(LpDump, WritesReadableInstance) {
  lp::MarginalSimplex s({{0.5, 0.5}, {1.0}}, {1.0, 2.0});
  std::ostringstream os;
  s.dump(os);
  EXPECT_NE(os.str().find("marginals 2"), std::string::npos);
}

TEST(LpDump, SolverWritesEachInstanceWhenRequested) {
  std::ostringstream os;
  LpOptions opts;
  opts.dump = &os;
  const auto a = DiscreteMeasure(1, {0.0, 1.0}, {0.5, 0.5}), b = DiscreteMeasure(1, {2.0}, {1.0});
  transport_lp(a, b, opts);
  multimarginal_lp({a, b, b}, {0.2, 0.3, 0.5}, opts);
  const auto text = os.str();
  EXPECT_NE(text.find("marginals 2\nsizes 2 1\n"), std::string::npos);
  EXPECT_NE(text.find("marginals 3\nsizes 2 1 1\n"), std::string::npos);
  EXPECT_NE(text.find("costs 2\n4\n1\n"), std::string::npos);
}
