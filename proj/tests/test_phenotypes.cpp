#include <gtest/gtest.h>

#include <cmath>

#include "lwot/phenotypes.hpp"
#include "support/random_measures.hpp"

using namespace lwot;
using namespace lwot::phenotypes;

namespace {

std::vector<double> random_edges(testgen::Rng& rng, std::size_t n, double start) {
  std::vector<double> e{start};
  for (std::size_t k = 0; k < n; ++k) e.push_back(e.back() + testgen::uniform(rng, 0.1, 1.0));
  return e;
}

GriddedMeasure random_grid(testgen::Rng& rng, std::size_t nx, std::size_t ny, bool zeros = true) {
  auto ax = random_edges(rng, nx, testgen::uniform(rng, -1.0, 1.0));
  auto ve = random_edges(rng, ny, testgen::uniform(rng, 0.0, 0.5));
  std::vector<double> f(nx * ny);
  for (auto& v : f) v = (zeros && testgen::uniform(rng, 0.0, 1.0) < 0.15) ? 0.0 : testgen::uniform(rng, 0.1, 2.0);
  // Every layer keeps some mass.
  for (std::size_t j = 0; j < ny; ++j) f[j * nx] += 0.5;
  return GriddedMeasure({ax}, ve, f).normalized();
}

// Direct double sum of f log f over cells, written without the library's helpers.
double entropy_oracle(const GriddedMeasure& g) {
  const auto& ax = g.axes()[0];
  const auto& ve = g.vertical_edges();
  const std::size_t nx = ax.size() - 1;
  double s = 0.0;
  for (std::size_t j = 0; j + 1 < ve.size(); ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const double f = g.density()[j * nx + i];
      if (f > 0.0) s += f * std::log(f) * (ax[i + 1] - ax[i]) * (ve[j + 1] - ve[j]);
    }
  return s;
}

AtomicMeasure random_atomic(testgen::Rng& rng, std::size_t dim) {
  return testgen::random_atomic(rng, dim, 6);
}

}  // namespace

TEST(Entropy, UniformIsZero) {
  GriddedMeasure g({{0.0, 0.5, 1.0}}, {0.0, 0.25, 1.0}, std::vector<double>(4, 1.0));
  const auto r = shannon_entropy(g);
  EXPECT_NEAR(r.total, 0.0, 1e-15);
  EXPECT_NEAR(r.layer_integral, 0.0, 1e-15);
  EXPECT_NEAR(r.vertical, 0.0, 1e-15);
}

TEST(Entropy, ProductSeparates) {
  // f1 = (1.5, 0.5) on unit cells of [0, 2]; f2 = (0.2, 0.8) on unit layers of [0, 2].
  const std::vector<double> f1{0.75, 0.25}, f2{0.2, 0.8};
  std::vector<double> f;
  for (double b : f2)
    for (double a : f1) f.push_back(a * b);
  const GriddedMeasure g({{0.0, 1.0, 2.0}}, {0.0, 1.0, 2.0}, f);
  const auto r = shannon_entropy(g);
  EXPECT_NEAR(r.layer_integral, 0.75 * std::log(0.75) + 0.25 * std::log(0.25), 1e-14);
  EXPECT_NEAR(r.vertical, 0.2 * std::log(0.2) + 0.8 * std::log(0.8), 1e-14);
}

TEST(Entropy, DecompositionOnRandomGrids) {
  testgen::Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const auto g = random_grid(rng, 8, 8);
    const auto r = shannon_entropy(g);
    EXPECT_NEAR(r.total, entropy_oracle(g), 1e-12);
    EXPECT_NEAR(r.total, r.layer_integral + r.vertical, 1e-9);
    const auto q = QuantileLayers::from_grid(g).entropy();
    EXPECT_NEAR(q.total, r.total, 1e-9);
    EXPECT_NEAR(q.vertical, r.vertical, 1e-9);
  }
}

TEST(Entropy, TwoDimensionalGrid) {
  testgen::Rng rng(4);
  std::vector<double> f(2 * 3 * 4);
  for (auto& v : f) v = testgen::uniform(rng, 0.0, 1.0);
  const auto g = GriddedMeasure({{0.0, 1.0, 3.0}, {0.0, 0.5, 1.0, 2.0}}, {0.0, 1.0, 1.5, 2.0, 4.0}, f).normalized();
  const auto r = shannon_entropy(g);
  EXPECT_NEAR(r.total, r.layer_integral + r.vertical, 1e-12);
}

TEST(Entropy, RejectsUnnormalized) {
  GriddedMeasure g({{0.0, 1.0}}, {0.0, 1.0}, {2.0});
  try {
    shannon_entropy(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotProbability);
  }
}

TEST(VerticalMoments, Examples) {
  EXPECT_DOUBLE_EQ(vertical_mean(AtomicMeasure(1, {{{0.3}, 2.0, 1.0}})), 2.0);
  const AtomicMeasure two(1, {{{0.0}, 0.0, 0.5}, {{0.0}, 4.0, 0.5}});
  EXPECT_DOUBLE_EQ(vertical_mean(two), 2.0);
  EXPECT_DOUBLE_EQ(vertical_variance(AtomicMeasure(1, {{{0.3}, 2.0, 1.0}})), 0.0);
  EXPECT_DOUBLE_EQ(vertical_variance(AtomicMeasure(1, {{{0.0}, 0.0, 0.5}, {{1.0}, 2.0, 0.5}})), 1.0);
}

TEST(VerticalQuantile, Examples) {
  const AtomicMeasure two(1, {{{0.0}, 0.5, 0.5}, {{0.0}, 1.5, 0.5}});
  EXPECT_DOUBLE_EQ(vertical_quantile(two, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(vertical_quantile(two, 1.0), 1.5);
  std::vector<Atom> ladder;
  for (int k = 1; k <= 100; ++k) ladder.push_back({{0.0}, k / 100.0, 0.01});
  EXPECT_NEAR(vertical_quantile(AtomicMeasure(1, ladder), 0.87), 0.87, 1e-12);
  for (double bad : {0.0, -0.1, 1.1}) {
    try {
      vertical_quantile(two, bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidQuantile);
    }
  }
}

TEST(InternalEnergy, Examples) {
  const GriddedMeasure uniform({{0.0, 1.0}}, {0.0, 1.0}, {1.0});
  for (double r : {1.0, 1.5, 2.0, 3.0}) EXPECT_NEAR(vertical_internal_energy(uniform, r), 1.0, 1e-15);
  const GriddedMeasure half({{0.0, 1.0}}, {0.0, 0.5}, {2.0});
  EXPECT_NEAR(vertical_internal_energy(half, 2.0), 2.0, 1e-15);
  try {
    vertical_internal_energy(uniform, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidExponent);
  }
  testgen::Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto g = random_grid(rng, 5, 6);
    EXPECT_NEAR(vertical_quantile_function(g).internal_energy(1.7), vertical_internal_energy(g, 1.7), 1e-10);
  }
}

TEST(PiecewiseQuantile, AverageIsPointwise) {
  testgen::Rng rng(12);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<PiecewiseQuantile> qs;
    for (int a = 0; a < 3; ++a) {
      std::vector<double> m(5);
      for (auto& v : m) v = testgen::uniform(rng, 0.0, 1.0) < 0.2 ? 0.0 : testgen::uniform(rng, 0.1, 1.0);
      m[2] += 0.1;
      qs.push_back(PiecewiseQuantile::from_histogram(random_edges(rng, 5, 0.0), m));
    }
    const auto lam = testgen::random_simplex(rng, 3);
    const auto bar = average(qs, lam);
    for (int k = 0; k < 50; ++k) {
      const double u = testgen::uniform(rng, 1e-6, 1.0);
      double expect = 0.0;
      for (int a = 0; a < 3; ++a) expect += lam[a] * qs[a](u);
      EXPECT_NEAR(bar(u), expect, 1e-12);
    }
    EXPECT_NEAR(bar.mean(), lam[0] * qs[0].mean() + lam[1] * qs[1].mean() + lam[2] * qs[2].mean(), 1e-12);
  }
}

TEST(Affinity, MeanAndQuantilesAlongBarycenter) {
  testgen::Rng rng(21);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t m = 2 + rep % 2;
    std::vector<AtomicMeasure> ms;
    for (std::size_t a = 0; a < m; ++a) ms.push_back(normalize(random_atomic(rng, 1 + rep % 2)));
    const auto lam = testgen::random_simplex(rng, m);
    const auto bar = lw_barycenter(ms, lam);
    double mean = 0.0;
    for (std::size_t a = 0; a < m; ++a) mean += lam[a] * vertical_mean(ms[a]);
    EXPECT_NEAR(vertical_mean(bar), mean, 1e-9);
    for (double l : {0.13, 0.5, 0.87, 1.0}) {
      double q = 0.0;
      for (std::size_t a = 0; a < m; ++a) q += lam[a] * vertical_quantile(ms[a], l);
      EXPECT_NEAR(vertical_quantile(bar, l), q, 1e-9) << "l=" << l;
    }
  }
}

TEST(Convexity, IdenticalSamplesHaveZeroGap) {
  testgen::Rng rng(1);
  const auto mu = normalize(random_atomic(rng, 2));
  for (const char* name : {"vmean", "vvar", "vq:0.87", "lvar"}) {
    const auto r = convexity_check(parse_phenotype(name), {mu, mu}, {0.4, 0.6});
    EXPECT_NEAR(r.gap, 0.0, 1e-12) << name;
  }
  const auto g = random_grid(rng, 4, 4);
  for (const char* name : {"entropy", "venergy:2", "vvar"}) {
    const auto r = convexity_check(parse_phenotype(name), std::vector<GriddedMeasure>{g, g}, {0.4, 0.6});
    EXPECT_NEAR(r.gap, 0.0, 1e-12) << name;
  }
}

TEST(Convexity, AtomicFamilies) {
  testgen::Rng rng(77);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = 2 + rep % 2;
    std::vector<AtomicMeasure> ms;
    for (std::size_t a = 0; a < m; ++a) ms.push_back(random_atomic(rng, 1 + rep % 2));
    const auto lam = testgen::random_simplex(rng, m);
    EXPECT_NEAR(convexity_check(parse_phenotype("vmean"), ms, lam).gap, 0.0, 1e-9);
    EXPECT_GE(convexity_check(parse_phenotype("vvar"), ms, lam).gap, -1e-9);
    EXPECT_GE(convexity_check(parse_phenotype("lvar"), ms, lam).gap, -1e-9);
    EXPECT_NEAR(convexity_check(parse_phenotype("vq:0.87"), ms, lam).gap, 0.0, 1e-9);
  }
}

TEST(Convexity, GriddedFamilies) {
  testgen::Rng rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = 2 + rep % 3;
    std::vector<GriddedMeasure> gs;
    for (std::size_t a = 0; a < m; ++a) gs.push_back(random_grid(rng, 8, 8));
    const auto lam = testgen::random_simplex(rng, m);
    for (const char* name : {"entropy", "vvar", "venergy:1", "venergy:1.5", "venergy:2", "lvar"})
      EXPECT_GE(convexity_check(parse_phenotype(name), gs, lam).gap, -1e-9) << name;
    EXPECT_NEAR(convexity_check(parse_phenotype("vmean"), gs, lam).gap, 0.0, 1e-9);
  }
}

TEST(Convexity, AtomicInputCannotEvaluateDensityFunctionals) {
  testgen::Rng rng(2);
  const auto mu = normalize(random_atomic(rng, 1));
  EXPECT_THROW(convexity_check(parse_phenotype("entropy"), {mu, mu}, {0.5, 0.5}), Error);
}

TEST(Phenotype, Parsing) {
  EXPECT_EQ(parse_phenotype("venergy:1.5").param, 1.5);
  EXPECT_EQ(parse_phenotype("vq:0.87").name(), "vq:0.87");
  EXPECT_EQ(parse_phenotype("entropy").name(), "entropy");
  EXPECT_THROW(parse_phenotype("venergy:0.5"), Error);
  EXPECT_THROW(parse_phenotype("vq:0"), Error);
  EXPECT_THROW(parse_phenotype("vq:abc"), Error);
  EXPECT_THROW(parse_phenotype("height"), Error);
}
