#include "doctest.h"

#include <cmath>
#include <random>

#include "leakmap/error.hpp"
#include "leakmap/spectral.hpp"
#include "support.hpp"

using namespace leakmap;

namespace {

OpenTransferMatrix from_dense(const std::vector<std::vector<double>>& a) {
  std::vector<MatrixEntry> e;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (a[i][j] != 0.0) e.push_back({i, j, a[i][j]});
  return OpenTransferMatrix(Grid::uniform(a.size()), e, true);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

// Left Perron vector of the dense matrix, scaled so that sum_i l_i phi_i w = 1.
Eigen::VectorXd dense_left(const OpenTransferMatrix& m, const DensityVector& phi) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(testing::dense(m).transpose());
  Eigen::Index best = 0;
  es.eigenvalues().real().maxCoeff(&best);
  Eigen::VectorXd l = es.eigenvectors().col(best).real();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.size(); ++i) s += l(i) * phi[i] * phi.bin_width();
  return l / s;
}

}  // namespace

TEST_CASE("leading eigenpair examples") {
  SUBCASE("closed doubling") {
    const auto m = build_markov_operator(PiecewiseMap::doubling(), HoleSet{}, 16);
    const auto s = leading_eigenpair(m);
    CHECK(s.lambda == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.residual < 1e-12);
    for (double v : s.phi.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("golden") {
    const auto m = testing::golden_operator();
    const auto s = leading_eigenpair(m);
    CHECK(std::abs(s.lambda - testing::kGoldenLambda) < 1e-12);
    CHECK(std::abs(s.rayleigh - s.lambda) < 1e-11);
    CHECK(s.phi.l1_norm() == doctest::Approx(1.0).epsilon(1e-14));
    Eigen::EigenSolver<Eigen::MatrixXd> es(testing::dense(m));
    Eigen::Index best = 0;
    es.eigenvalues().real().maxCoeff(&best);
    Eigen::VectorXd r = es.eigenvectors().col(best).real();
    r /= r.sum() * 0.25;
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(s.phi[i] - r(i)) < 1e-10);
  }
  SUBCASE("half identity") {
    const auto s = leading_eigenpair(from_dense({{0.5, 0, 0}, {0, 0.5, 0}, {0, 0, 0.5}}));
    CHECK(s.lambda == 0.5);
    CHECK(s.residual == 0.0);
  }
  SUBCASE("zero operator") {
    CHECK(code_of([] { leading_eigenpair(from_dense({{0, 0}, {0, 0}})); }) == ErrorCode::ZeroOperator);
  }
}

TEST_CASE("spectral gap examples") {
  SUBCASE("rank one") {
    const auto m = build_markov_operator(PiecewiseMap::doubling(), HoleSet{}, 2);
    auto s = leading_eigenpair(m);
    CHECK(spectral_gap(m, s) < 1e-12);
  }
  SUBCASE("golden") {
    const auto m = testing::golden_operator();
    auto s = leading_eigenpair(m);
    const double sigma = spectral_gap(m, s);
    const auto ev = testing::spectrum(testing::dense(m));
    CHECK(std::abs(sigma - std::abs(ev[1]) / std::abs(ev[0])) < 1e-9);
    CHECK(std::abs(sigma - testing::kGoldenSigma) < 1e-9);
  }
  SUBCASE("two invariant components") {
    const auto m = from_dense({{0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}, {0, 0, 0.5, 0.5}});
    auto s = leading_eigenpair(m);
    CHECK(code_of([&] { spectral_gap(m, s); }) == ErrorCode::DegenerateGap);
  }
  SUBCASE("period two") {
    const auto m = from_dense({{0, 0.5}, {0.5, 0}});
    auto s = leading_eigenpair(m);
    CHECK(code_of([&] { spectral_gap(m, s); }) == ErrorCode::DegenerateGap);
  }
}

TEST_CASE("left Perron vector matches the dense oracle") {
  const auto m = testing::golden_operator(8);
  const auto s = leading_eigenpair(m);
  const auto l = dense_left(m, s.phi);
  const auto left = left_perron_vector(m, s);
  for (std::size_t i = 0; i < m.dim(); ++i) CHECK(std::abs(left[i] - l(static_cast<Eigen::Index>(i))) < 1e-9);
}

TEST_CASE("convergence curves") {
  const auto m = testing::golden_operator();
  auto s = leading_eigenpair(m);
  spectral_gap(m, s);
  SUBCASE("phi is a fixed point") {
    const auto c = convergence_curve(m, s, s.phi, 50);
    for (const auto& p : c.points) CHECK(p.value < 1e-12);
  }
  SUBCASE("uniform start converges at the gap rate") {
    const auto c = convergence_curve(m, s, DensityVector::uniform(m.grid()), 200);
    CHECK(c.fit_points >= 5);
    CHECK(std::abs(c.fitted_rate - s.sigma) <= 0.1 * s.sigma);
    CHECK(c.fitted_rate <= s.sigma + 0.05);
  }
  SUBCASE("escaping support") {
    const auto m8 = testing::golden_operator(8);
    const auto s8 = leading_eigenpair(m8);
    std::vector<double> f(m8.dim(), 0.0);
    f[*m8.grid().active_index(4)] = 8.0;
    CHECK(code_of([&] { convergence_curve(m8, s8, DensityVector(f, 0.125), 20); }) == ErrorCode::MassExtinct);
  }
}

TEST_CASE("cylinder escape profiles") {
  SUBCASE("closed map, all bins") {
    const auto m = build_markov_operator(PiecewiseMap::doubling(), HoleSet{}, 8);
    const auto s = leading_eigenpair(m);
    std::vector<std::size_t> all{0, 1, 2, 3, 4, 5, 6, 7};
    for (const auto& p : cylinder_escape_profile(m, s, all, 30).points) CHECK(p.value == doctest::Approx(1.0));
  }
  SUBCASE("golden, A = [3/4,1)") {
    const auto m = testing::golden_operator();
    const auto s = leading_eigenpair(m);
    const auto prof = cylinder_escape_profile(m, s, {2}, 60);
    // The limit is <l, 1_A> with l the left vector normalized against phi.
    const double limit = dense_left(m, s.phi)(2) * 0.25;
    CHECK(std::abs(prof.points.back().value - limit) < 1e-6);
    CHECK(prof.C >= 1.0);
    CHECK(std::isfinite(prof.C));
  }
  SUBCASE("empty set") {
    const auto m = testing::golden_operator();
    const auto s = leading_eigenpair(m);
    for (const auto& p : cylinder_escape_profile(m, s, {}, 10).points) CHECK(p.value == 0.0);
  }
}

TEST_CASE("property: eigendata of random Markov instances") {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 80 && checked < 30; ++trial) {
    const bool holed = trial % 4 != 0;
    const auto inst = testing::random_markov_instance(rng, 8, holed);
    const auto m = build_markov_operator(inst.map, inst.hole, inst.n);
    const auto ev = testing::spectrum(testing::dense(m));
    // Only primitive instances: a simple dominant eigenvalue with a clear gap.
    if (std::abs(ev[0]) < 1e-6 || std::abs(ev[1]) > 0.95 * std::abs(ev[0])) continue;
    Eigen::EigenSolver<Eigen::MatrixXd> es(testing::dense(m));
    Eigen::Index best = 0;
    es.eigenvalues().real().maxCoeff(&best);
    const Eigen::VectorXd r = es.eigenvectors().col(best).real();
    if ((r.array() * r(0) <= 1e-14).any()) continue;  // Perron vector not strictly positive
    ++checked;
    auto s = leading_eigenpair(m);
    CHECK(std::abs(s.lambda - ev[0].real()) < 1e-10);
    CHECK(s.lambda <= 1.0 + 1e-12);
    if (!holed) CHECK(s.lambda == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s.bracket_lower <= s.lambda + 1e-12);
    CHECK(s.bracket_upper >= s.lambda - 1e-12);
    const double sigma = spectral_gap(m, s);
    CHECK(std::abs(sigma - std::abs(ev[1]) / std::abs(ev[0])) < 1e-6);
  }
  CHECK(checked >= 10);
}

TEST_CASE("property: holes lower the eigenvalue below one") {
  std::mt19937_64 rng(32);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto inst = testing::random_markov_instance(rng, 8, true);
    const auto m = build_markov_operator(inst.map, inst.hole, inst.n);
    // The closed map must be irreducible; otherwise an invariant piece can avoid the hole.
    if (!testing::irreducible(testing::dense(build_markov_operator(inst.map, HoleSet{}, inst.n)))) continue;
    CHECK(leading_eigenpair(m).lambda < 1.0);
    ++checked;
  }
  CHECK(checked >= 20);
}
