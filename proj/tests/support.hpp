#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "leakmap/maps.hpp"
#include "leakmap/openop.hpp"

namespace testing {

inline const double kGoldenLambda = (1.0 + std::sqrt(5.0)) / 4.0;
inline const double kGoldenSigma = (std::sqrt(5.0) - 1.0) / (std::sqrt(5.0) + 1.0);

inline leakmap::HoleSet golden_hole() { return leakmap::HoleSet({{0.0, 0.25}}); }

inline leakmap::OpenTransferMatrix golden_operator(std::size_t n = 4) {
  return leakmap::build_markov_operator(leakmap::PiecewiseMap::doubling(), golden_hole(), n);
}

// Dense copy of a small operator; the oracles below are only meant for matrices up to 64 x 64.
inline Eigen::MatrixXd dense(const leakmap::OpenTransferMatrix& m) {
  if (m.dim() > 64) throw std::invalid_argument("dense oracle limited to 64 x 64");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m.dim(), m.dim());
  for (const auto& e : m.entries()) d(e.row, e.col) = e.value;
  return d;
}

// Eigenvalues sorted by decreasing modulus.
inline std::vector<std::complex<double>> spectrum(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + a.rows());
  std::sort(ev.begin(), ev.end(), [](auto x, auto y) { return std::abs(x) > std::abs(y); });
  return ev;
}

// Characteristic polynomial coefficients c_0..c_n of det(tI - A) by Faddeev-LeVerrier.
inline std::vector<double> characteristic_polynomial(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    m = a * m + c[n - k + 1] * Eigen::MatrixXd::Identity(n, n);
    c[n - k] = -(a * m).trace() / static_cast<double>(k);
  }
  return c;
}

inline double polyval(const std::vector<double>& c, double t) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * t + *it;
  return v;
}

// Largest real root of a polynomial by bisection from above the Cauchy bound.
inline double largest_real_root(const std::vector<double>& c) {
  double bound = 0.0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) bound = std::max(bound, std::abs(c[i] / c.back()));
  double hi = 1.0 + bound, step = hi / 4096.0, lo = hi;
  while (lo > -hi && polyval(c, lo) * polyval(c, hi) > 0.0) lo -= step;
  hi = lo + step;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (polyval(c, mid) * polyval(c, hi) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

// Every state reaches every other one in the support graph of the matrix.
inline bool irreducible(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  for (Eigen::Index start = 0; start < n; ++start) {
    std::vector<bool> seen(n, false);
    std::vector<Eigen::Index> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
      const auto j = stack.back();
      stack.pop_back();
      for (Eigen::Index i = 0; i < n; ++i)
        if (a(i, j) > 0.0 && !seen[i]) {
          seen[i] = true;
          stack.push_back(i);
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
  }
  return true;
}

// Random piecewise-linear Markov map on a grid of n cells: every piece covers d cells and maps
// affinely onto s*d consecutive cells, so images of grid cells are unions of grid cells.
struct MarkovInstance {
  leakmap::PiecewiseMap map;
  leakmap::HoleSet hole;
  std::size_t n;
};

inline MarkovInstance random_markov_instance(std::mt19937_64& rng, std::size_t n, bool with_hole) {
  std::vector<leakmap::LinearPiece> pieces;
  std::size_t at = 0;
  while (at < n) {
    const std::size_t d = (n - at >= 2 && rng() % 2) ? 2 : 1;
    const std::size_t s = 2 + rng() % (n / d - 1);
    const std::size_t len = s * d;
    const std::size_t start = rng() % (n - len + 1);
    leakmap::LinearPiece p;
    p.domain = {static_cast<double>(at) / n, static_cast<double>(at + d) / n};
    p.image = {static_cast<double>(start) / n, static_cast<double>(start + len) / n};
    p.orientation = rng() % 2 ? leakmap::Orientation::Decreasing : leakmap::Orientation::Increasing;
    pieces.push_back(p);
    at += d;
  }
  std::vector<leakmap::Interval> holes;
  if (with_hole) {
    const std::size_t c = rng() % n;
    holes.push_back({static_cast<double>(c) / n, static_cast<double>(c + 1) / n});
  }
  std::vector<double> cells(n + 1);
  for (std::size_t i = 0; i <= n; ++i) cells[i] = static_cast<double>(i) / n;
  return {leakmap::PiecewiseMap::linear(leakmap::MapKind::PiecewiseLinearMarkov, pieces, cells),
          leakmap::HoleSet(holes), n};
}

// Mixed-slope Markov instances with one-cell holes, checked irreducible and aperiodic by hand.
inline std::vector<MarkovInstance> mixed_slope_instances() {
  using leakmap::Orientation;
  using leakmap::PiecewiseMap;
  auto make = [](std::vector<leakmap::LinearPiece> pieces, leakmap::Interval hole, std::size_t n) {
    return MarkovInstance{PiecewiseMap::linear(leakmap::MapKind::PiecewiseLinearMarkov, pieces),
                          leakmap::HoleSet({hole}), n};
  };
  std::vector<MarkovInstance> out;
  // Slopes 2, 4, 4 on [0,1/2), [1/2,3/4), [3/4,1), all onto [0,1); hole = cell [0,1/4).
  out.push_back(make({{{0.0, 0.5}, {0.0, 1.0}, Orientation::Increasing},
                      {{0.5, 0.75}, {0.0, 1.0}, Orientation::Increasing},
                      {{0.75, 1.0}, {0.0, 1.0}, Orientation::Increasing}},
                     {0.0, 0.25}, 4));
  // 1-2x onto [0,1), slope 4 onto [0,1), slope 2 onto [1/2,1); hole = cell [3/4,1).
  out.push_back(make({{{0.0, 0.5}, {0.0, 1.0}, Orientation::Decreasing},
                      {{0.5, 0.75}, {0.0, 1.0}, Orientation::Increasing},
                      {{0.75, 1.0}, {0.5, 1.0}, Orientation::Increasing}},
                     {0.75, 1.0}, 4));
  // Slopes 3, 6, 6, 3 on a sixth-grid; hole = cell [1/2,2/3).
  out.push_back(make({{{0.0, 1.0 / 3}, {0.0, 1.0}, Orientation::Increasing},
                      {{1.0 / 3, 0.5}, {0.0, 1.0}, Orientation::Decreasing},
                      {{0.5, 2.0 / 3}, {0.0, 1.0}, Orientation::Increasing},
                      {{2.0 / 3, 1.0}, {0.0, 1.0}, Orientation::Decreasing}},
                     {0.5, 2.0 / 3}, 6));
  return out;
}

}  // namespace testing
