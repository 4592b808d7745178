#pragma once

#include <cstddef>
#include <vector>

#include "leakmap/openop.hpp"

namespace leakmap {

struct SpectralData {
  double lambda = 0.0;
  DensityVector phi;            // probability density, M phi ≈ lambda phi
  std::vector<double> left;     // left Perron vector, normalized so that ∫ left·phi = 1
  double sigma = -1.0;          // |lambda_2| / lambda; negative until spectral_gap runs
  double residual = 0.0;        // |M phi - lambda phi|_1
  double rayleigh = 0.0;        // <phi, M phi> / <phi, phi>
  double bracket_lower = 0.0;   // Collatz–Wielandt bracket at the last step
  double bracket_upper = 0.0;
  std::size_t iterations = 0;
};

struct EigenOptions {
  double tol = 1e-12;
  std::size_t max_iter = 200000;
};

/// Power iteration with L1 normalization from the uniform density.
SpectralData leading_eigenpair(const OpenTransferMatrix& matrix, const EigenOptions& options = {});

/// Left Perron vector of the matrix, scaled so that sum_i left_i phi_i w = 1.
std::vector<double> left_perron_vector(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                       const EigenOptions& options = {});

/// sigma = |lambda_2| / lambda by power iteration on f -> M f - lambda phi <left, f>.
/// Fills spec.left when it is empty and stores the result in spec.sigma.
double spectral_gap(const OpenTransferMatrix& matrix, SpectralData& spec, const EigenOptions& options = {});

struct CurvePoint {
  std::size_t n;
  double value;
};

struct ConvergenceCurve {
  std::vector<CurvePoint> points;  // (n, |L_1^n f - phi|_1)
  double fitted_rate = 0.0;        // exp(slope of log deviation) over the fit window
  std::size_t fit_min = 0;
  std::size_t fit_max = 0;
  std::size_t fit_points = 0;
};

/// Fits the last two thirds of the resolved curve, i.e. of the points before the first deviation at or
/// below `noise_floor`.
ConvergenceCurve fit_convergence(std::vector<CurvePoint> points, double noise_floor);

/// Deviations of the renormalized push-forwards from phi, fitted by fit_convergence.
ConvergenceCurve convergence_curve(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                   const DensityVector& f0, std::size_t horizon, double noise_floor = 1e-10);

/// exp(least-squares slope of log|values|) over the given points; 0 with fewer than two points.
double fitted_decay_rate(const std::vector<CurvePoint>& points);

struct CylinderProfile {
  std::vector<CurvePoint> points;  // (n, lambda^{-n} m(X^n ∩ A))
  double C = 0.0;                  // smallest C with all positive values in [1/C, C]
};

/// m(X^n ∩ A) = |M^n 1_A|_1 for A a union of active bins (given as active indices).
CylinderProfile cylinder_escape_profile(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                        const std::vector<std::size_t>& bins, std::size_t horizon);

}  // namespace leakmap
