#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "leakmap/error.hpp"
#include "leakmap/openop.hpp"
#include "leakmap/spectral.hpp"
#include "support.hpp"

using namespace leakmap;

namespace {

double inner(const std::vector<double>& a, const std::vector<double>& b, double w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i] * w;
  return s;
}

// Koopman image of a bin function: the average over bin j of g(T x), zero where T x is in the hole.
// Midpoint quadrature with 5040 nodes per bin is exact for the integer slopes of the generator.
std::vector<double> koopman(const testing::MarkovInstance& inst, const OpenTransferMatrix& m, const std::vector<double>& g) {
  const Grid& grid = m.grid();
  const std::size_t q = 5040;
  std::vector<double> out(m.dim(), 0.0);
  for (std::size_t j = 0; j < m.dim(); ++j) {
    const Interval b = grid.bin(grid.active_bins()[j]);
    double acc = 0.0;
    for (std::size_t k = 0; k < q; ++k) {
      const double y = inst.map.evaluate(b.lo + (k + 0.5) * b.length() / q);
      const auto target = static_cast<std::size_t>(std::floor(y * grid.bin_count()));
      if (auto a = grid.active_index(std::min(target, grid.bin_count() - 1))) acc += g[*a];
    }
    out[j] = acc / q;
  }
  return out;
}

}  // namespace

TEST_CASE("doubling without hole on two bins") {
  const auto m = build_markov_operator(PiecewiseMap::doubling(), HoleSet{}, 2);
  CHECK(m.exact());
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(m.entry(i, j) == 0.5);
}

TEST_CASE("golden instance: characteristic polynomial oracle") {
  const auto m = testing::golden_operator();
  REQUIRE(m.dim() == 3);
  const auto c = testing::characteristic_polynomial(testing::dense(m));
  // det(tI - M) = t (t^2 - t/2 - 1/4), i.e. 4t^2 - 2t - 1 = 0 for the nonzero roots.
  CHECK(c[0] == doctest::Approx(0.0));
  CHECK(c[1] == doctest::Approx(-0.25));
  CHECK(c[2] == doctest::Approx(-0.5));
  const double root = testing::largest_real_root(c);
  CHECK(std::abs(root - testing::kGoldenLambda) < 1e-12);
  const auto sums = m.column_sums();
  CHECK(sums[0] == 1.0);
  CHECK(sums[1] == 0.5);
  CHECK(sums[2] == 1.0);
}

TEST_CASE("hole (1/4,1/2) on four bins has leading eigenvalue 1/2") {
  const auto m = build_markov_operator(PiecewiseMap::doubling(), HoleSet({{0.25, 0.5}}), 4);
  const auto ev = testing::spectrum(testing::dense(m));
  CHECK(std::abs(ev[0] - 0.5) < 1e-12);
}

TEST_CASE("misaligned holes are rejected by the exact builder") {
  try {
    build_markov_operator(PiecewiseMap::doubling(), HoleSet({{0.1, 0.25}}), 4);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotMarkovAligned);
  }
}

TEST_CASE("Ulam operator examples") {
  SUBCASE("dyadic grids reproduce the exact operator") {
    for (std::size_t n : {16u, 32u, 64u, 256u}) {
      const auto a = build_markov_operator(PiecewiseMap::doubling(), HoleSet{}, n);
      const auto b = build_ulam_operator(PiecewiseMap::doubling(), HoleSet{}, n);
      CHECK_FALSE(b.exact());
      REQUIRE(a.nonzeros() == b.nonzeros());
      const auto ea = a.entries(), eb = b.entries();
      for (std::size_t k = 0; k < ea.size(); ++k) {
        CHECK(ea[k].row == eb[k].row);
        CHECK(ea[k].col == eb[k].col);
        CHECK(std::abs(ea[k].value - eb[k].value) <= 1e-14);
      }
    }
  }
  SUBCASE("quadratic a=4 closed map at 4096 bins") {
    const auto m = build_ulam_operator(PiecewiseMap::quadratic(4.0), HoleSet{}, 4096);
    const auto spec = leading_eigenpair(m);
    CHECK(std::abs(spec.lambda - 1.0) < 1e-3);
  }
  SUBCASE("snapping grows the hole outward") {
    const auto m = build_ulam_operator(PiecewiseMap::quadratic(4.0), HoleSet({{0.47, 0.53}}), 1000);
    CHECK(m.grid().snapped_hole_measure() == doctest::Approx(0.06).epsilon(1e-12));
  }
}

TEST_CASE("apply examples") {
  SUBCASE("identity") {
    std::vector<MatrixEntry> e{{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}};
    const OpenTransferMatrix id(Grid::uniform(3), e, true);
    const auto out = apply(id, DensityVector({1, 2, 3}, 1.0 / 3));
    CHECK(out.values() == std::vector<double>{1, 2, 3});
  }
  SUBCASE("doubling smooths to uniform") {
    const auto m = build_markov_operator(PiecewiseMap::doubling(), HoleSet{}, 2);
    CHECK(apply(m, DensityVector({2, 0}, 0.5)).values() == std::vector<double>{1, 1});
  }
  SUBCASE("golden leak of the uniform density is 5/6") {
    const auto m = testing::golden_operator();
    const DensityVector f({1, 1, 1}, 0.25);
    CHECK(apply(m, f).l1_norm() / f.l1_norm() == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  }
  SUBCASE("dimension mismatch") {
    const auto m = testing::golden_operator();
    CHECK_THROWS_AS(apply(m, DensityVector({1, 1}, 0.5)), Error);
  }
}

TEST_CASE("normalized iteration") {
  SUBCASE("closed doubling keeps the uniform density") {
    const auto m = build_markov_operator(PiecewiseMap::doubling(), HoleSet{}, 8);
    for (const auto& f : normalized_iterate(m, DensityVector::uniform(m.grid()), 10))
      for (double v : f.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("golden converges to the dense Perron vector") {
    const auto m = testing::golden_operator();
    Eigen::EigenSolver<Eigen::MatrixXd> es(testing::dense(m));
    Eigen::Index best = 0;
    es.eigenvalues().real().maxCoeff(&best);
    Eigen::VectorXd r = es.eigenvectors().col(best).real();
    r /= r.sum() * 0.25;
    const auto it = normalized_iterate(m, DensityVector::uniform(m.grid()), 200);
    double dist = 0.0;
    for (std::size_t i = 0; i < 3; ++i) dist += std::abs(it.back()[i] - r(i)) * 0.25;
    CHECK(dist < 1e-10);
  }
  SUBCASE("support that falls into the hole at once goes extinct") {
    const auto m = testing::golden_operator(8);
    std::vector<double> f(m.dim(), 0.0);
    f[*m.grid().active_index(4)] = 8.0;  // [1/2,5/8) maps onto [0,1/4)
    try {
      normalized_iterate(m, DensityVector(f, 0.125), 5);
      FAIL("no extinction");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MassExtinct);
    }
  }
}

TEST_CASE("property: mass dichotomy and positivity") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const bool holed = trial % 2;
    const auto inst = testing::random_markov_instance(rng, 8, holed);
    const auto m = build_markov_operator(inst.map, inst.hole, inst.n);
    std::vector<double> f(m.dim());
    for (double& v : f) v = u(rng);
    const DensityVector fd(f, m.grid().bin_width());
    const auto g = apply(m, fd);
    for (double v : g.values()) CHECK(v >= 0.0);
    if (holed)
      CHECK(g.l1_norm() <= fd.l1_norm() + 1e-15);
    else
      CHECK(std::abs(g.l1_norm() - fd.l1_norm()) <= 1e-12);
    for (double s : m.column_sums()) CHECK(s <= 1.0 + 1e-15);
  }
}

TEST_CASE("property: transfer operator is dual to composition") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const auto inst = testing::random_markov_instance(rng, 8, true);
    const auto m = build_markov_operator(inst.map, inst.hole, inst.n);
    std::vector<double> f(m.dim()), g(m.dim()), mf(m.dim());
    for (double& v : f) v = u(rng);
    for (double& v : g) v = u(rng) - 0.5;
    m.multiply(f, mf);
    const double w = m.grid().bin_width();
    CHECK(std::abs(inner(g, mf, w) - inner(koopman(inst, m, g), f, w)) <= 1e-12);
  }
}

TEST_CASE("property: Ulam and exact builders agree on Markov instances") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto inst = testing::random_markov_instance(rng, 16, trial % 3 != 0);
    const auto a = build_markov_operator(inst.map, inst.hole, inst.n);
    const auto b = build_ulam_operator(inst.map, inst.hole, inst.n);
    REQUIRE(a.dim() == b.dim());
    for (std::size_t i = 0; i < a.dim(); ++i)
      for (std::size_t j = 0; j < a.dim(); ++j) CHECK(std::abs(a.entry(i, j) - b.entry(i, j)) <= 1e-14);
  }
}

TEST_CASE("property: resolution-Cauchy gaps trend downward") {
  // The gaps jitter with the position of the critical point relative to the grid, so the check is on
  // the least-squares trend of log gap against log N and on the end points.
  const auto map = PiecewiseMap::quadratic(4.0);
  const HoleSet hole({{0.5 - 1.0 / 64, 0.5 + 1.0 / 64}});
  std::vector<CurvePoint> gaps;
  double prev = 0.0;
  std::size_t k = 0;
  for (std::size_t n = 256; n <= 16384; n *= 2, ++k) {
    const double lambda = leading_eigenpair(build_ulam_operator(map, hole, n)).lambda;
    if (k > 0) gaps.push_back({k, std::abs(lambda - prev)});
    prev = lambda;
  }
  CHECK(fitted_decay_rate(gaps) < 1.0);
  CHECK(gaps.back().value < gaps.front().value);
}

TEST_CASE("matrix dump round trip") {
  std::mt19937_64 rng(24);
  const auto inst = testing::random_markov_instance(rng, 16, true);
  const auto m = build_markov_operator(inst.map, inst.hole, inst.n);
  std::stringstream ss;
  m.write_dump(ss);
  const auto back = OpenTransferMatrix::read_dump(ss);
  CHECK(back.exact());
  CHECK(back.grid().active_bins() == m.grid().active_bins());
  const auto ea = m.entries(), eb = back.entries();
  REQUIRE(ea.size() == eb.size());
  for (std::size_t k = 0; k < ea.size(); ++k) CHECK(ea[k].value == eb[k].value);
}
