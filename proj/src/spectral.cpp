#include "leakmap/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "leakmap/error.hpp"
#include "leakmap/rng.hpp"
#include "detail.hpp"

namespace leakmap {

namespace {

constexpr double kGapTol = 1e-6;
constexpr std::size_t kPeriodProbe = 16;

double weighted_dot(std::span<const double> a, std::span<const double> b, double w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * w;
}

double l1(std::span<const double> a, double w) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s * w;
}

// Normalized iterates f, L1 f, ..., L1^p f compared against f: a small distance at some p >= 2
// with a large one-step change means the iteration is cycling.
std::size_t detect_period(const OpenTransferMatrix& m, const std::vector<double>& f, double w) {
  std::vector<double> cur = f, next(f.size());
  double first_step = 0.0;
  for (std::size_t p = 1; p <= kPeriodProbe; ++p) {
    m.multiply(cur, next);
    const double mass = l1(next, w);
    if (!(mass > 0.0)) return 0;
    for (double& v : next) v /= mass;
    std::swap(cur, next);
    double dist = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) dist += std::abs(cur[i] - f[i]);
    dist *= w;
    if (p == 1) {
      first_step = dist;
    } else if (dist < 1e-6 && first_step > 1e3 * dist) {
      return p;
    }
  }
  return 0;
}

}  // namespace

SpectralData leading_eigenpair(const OpenTransferMatrix& matrix, const EigenOptions& options) {
  const std::size_t n = matrix.dim();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "operator has no active bins");
  if (!(options.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  if (matrix.nonzeros() == 0) throw Error(ErrorCode::ZeroOperator, "operator has no nonzero entries");
  const double w = matrix.grid().bin_width();

  DensityVector f = DensityVector::uniform(matrix.grid());
  std::vector<double> g(n);
  SpectralData out;
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    matrix.multiply(f.values(), g);
    const double lambda = l1(g, w);
    if (!(lambda > 0.0))
      throw Error(ErrorCode::ZeroOperator, "all mass escaped after " + std::to_string(it) + " steps");

    double residual = 0.0, lower = std::numeric_limits<double>::infinity(), upper = 0.0, fg = 0.0, ff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      residual += std::abs(g[i] - lambda * f[i]);
      fg += f[i] * g[i];
      ff += f[i] * f[i];
      if (f[i] > 0.0) {
        lower = std::min(lower, g[i] / f[i]);
        upper = std::max(upper, g[i] / f[i]);
      } else if (g[i] > 0.0) {
        upper = std::numeric_limits<double>::infinity();
      }
    }
    residual *= w;
    const double rayleigh = fg / ff;

    out.lambda = lambda;
    out.residual = residual;
    out.rayleigh = rayleigh;
    out.bracket_lower = lower;
    out.bracket_upper = upper;
    out.iterations = it;
    if (residual <= options.tol && std::abs(rayleigh - lambda) <= options.tol) {
      out.phi = std::move(f);
      return out;
    }
    for (std::size_t i = 0; i < n; ++i) f[i] = g[i] / lambda;
  }

  if (const std::size_t p = detect_period(matrix, f.values(), w); p > 1)
    throw Error(ErrorCode::DegenerateGap, "power iteration cycles with period " + std::to_string(p) +
                                              "; the peripheral spectrum holds lambda*exp(2 pi i k/" +
                                              std::to_string(p) + "), analyze M^" + std::to_string(p));
  throw Error(ErrorCode::NoConvergence, "residual " + std::to_string(out.residual) + " after " +
                                            std::to_string(options.max_iter) +
                                            " iterations; the gap may be close to 1");
}

std::vector<double> left_perron_vector(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                       const EigenOptions& options) {
  const std::size_t n = matrix.dim();
  const double w = matrix.grid().bin_width();
  std::vector<double> v(n, 1.0), u(n);
  bool converged = false;
  for (std::size_t it = 0; it < options.max_iter; ++it) {
    matrix.multiply_transpose(v, u);
    const double scale = std::accumulate(u.begin(), u.end(), 0.0);
    if (!(scale > 0.0)) throw Error(ErrorCode::ZeroOperator, "transpose iteration lost all mass");
    double residual = 0.0, size = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      residual += std::abs(u[i] - spec.lambda * v[i]);
      size += std::abs(v[i]);
    }
    const double factor = static_cast<double>(n) / scale;
    for (std::size_t i = 0; i < n; ++i) v[i] = u[i] * factor;
    if (residual <= options.tol * spec.lambda * size) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorCode::NoConvergence, "left Perron vector did not converge");
  const double pairing = weighted_dot(v, spec.phi.values(), w);
  if (!(pairing > 0.0)) throw Error(ErrorCode::DegenerateGap, "left and right Perron vectors are orthogonal");
  for (double& x : v) x /= pairing;
  return v;
}

double spectral_gap(const OpenTransferMatrix& matrix, SpectralData& spec, const EigenOptions& options) {
  const std::size_t n = matrix.dim();
  const double w = matrix.grid().bin_width();
  if (spec.left.size() != n) spec.left = left_perron_vector(matrix, spec, options);
  const auto& phi = spec.phi.values();
  const auto& left = spec.left;

  auto project_out = [&](std::vector<double>& v) {
    const double c = weighted_dot(left, v, w);
    for (std::size_t i = 0; i < n; ++i) v[i] -= c * phi[i];
  };

  const CounterRng rng(0x5eedULL);
  std::vector<double> start(n), second(n);
  for (std::size_t i = 0; i < n; ++i) {
    start[i] = 2.0 * rng.uniform(0, i) - 1.0;
    second[i] = 2.0 * rng.uniform(1, i) - 1.0;
  }
  project_out(start);
  project_out(second);

  const detail::LinearApply deflated = [&](const std::vector<double>& v, std::vector<double>& u) {
    matrix.multiply(v, u);
    const double c = spec.lambda * weighted_dot(left, v, w);
    for (std::size_t i = 0; i < n; ++i) u[i] -= c * phi[i];
    project_out(u);
  };
  const double estimate = detail::dominant_modulus(deflated, std::move(start), std::move(second), 1e-13 * spec.lambda,
                                                   std::min<std::size_t>(options.max_iter, 50000));
  const double sigma = estimate / spec.lambda;
  if (sigma >= 1.0 - kGapTol)
    throw Error(ErrorCode::DegenerateGap, "second eigenvalue modulus matches lambda (sigma=" + std::to_string(sigma) +
                                              "); the operator is reducible or periodic");
  spec.sigma = sigma;
  return sigma;
}

double fitted_decay_rate(const std::vector<CurvePoint>& points) {
  if (points.size() < 2) return 0.0;
  double xbar = 0.0, ybar = 0.0;
  for (const auto& p : points) {
    xbar += static_cast<double>(p.n);
    ybar += std::log(std::abs(p.value));
  }
  xbar /= static_cast<double>(points.size());
  ybar /= static_cast<double>(points.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& p : points) {
    const double dx = static_cast<double>(p.n) - xbar;
    sxy += dx * (std::log(std::abs(p.value)) - ybar);
    sxx += dx * dx;
  }
  return std::exp(sxy / sxx);
}

ConvergenceCurve fit_convergence(std::vector<CurvePoint> points, double noise_floor) {
  ConvergenceCurve curve;
  curve.points = std::move(points);
  // The resolved part ends before the first deviation at or below the floor.
  std::size_t end = 0;
  for (const auto& p : curve.points) {
    if (p.value <= noise_floor) break;
    end = p.n;
  }
  curve.fit_min = std::max<std::size_t>(1, (end + 2) / 3);
  curve.fit_max = end;
  std::vector<CurvePoint> fit;
  for (const auto& p : curve.points)
    if (p.n >= curve.fit_min && p.n <= curve.fit_max) fit.push_back(p);
  curve.fit_points = fit.size();
  curve.fitted_rate = fitted_decay_rate(fit);
  return curve;
}

ConvergenceCurve convergence_curve(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                   const DensityVector& f0, std::size_t horizon, double noise_floor) {
  const auto iterates = normalized_iterate(matrix, f0, horizon);
  std::vector<CurvePoint> points;
  for (std::size_t k = 0; k < iterates.size(); ++k) points.push_back({k, l1_distance(iterates[k], spec.phi)});
  return fit_convergence(std::move(points), noise_floor);
}

CylinderProfile cylinder_escape_profile(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                        const std::vector<std::size_t>& bins, std::size_t horizon) {
  const std::size_t n = matrix.dim();
  const double w = matrix.grid().bin_width();
  std::vector<double> f(n, 0.0), g(n);
  for (std::size_t b : bins) {
    if (b >= n) throw Error(ErrorCode::DimensionMismatch, "cylinder bin outside the active bins");
    f[b] = 1.0;
  }
  CylinderProfile out;
  double rescaled = l1(f, w);
  out.points.push_back({0, rescaled});
  for (std::size_t k = 1; k <= horizon && rescaled > 0.0; ++k) {
    const double before = l1(f, w);
    matrix.multiply(f, g);
    const double after = l1(g, w);
    rescaled *= after / (before * spec.lambda);
    if (after > 0.0)
      for (std::size_t i = 0; i < n; ++i) f[i] = g[i] / after;
    out.points.push_back({k, rescaled});
  }
  while (out.points.size() <= horizon) out.points.push_back({out.points.size(), 0.0});
  for (const auto& p : out.points)
    if (p.value > 0.0) out.C = std::max({out.C, p.value, 1.0 / p.value});
  return out;
}

}  // namespace leakmap
