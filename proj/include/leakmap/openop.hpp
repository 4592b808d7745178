#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "leakmap/maps.hpp"

namespace leakmap {

/// Uniform partition of [0,1) into N bins; a bin is inactive iff it lies inside the (snapped) hole.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t bin_count, std::vector<bool> active);

  static Grid uniform(std::size_t bin_count);
  /// Every bin meeting a hole component is deactivated, so the hole grows outward to grid lines.
  static Grid snapped(std::size_t bin_count, const HoleSet& hole);

  std::size_t bin_count() const { return active_.size(); }
  double bin_width() const { return 1.0 / static_cast<double>(active_.size()); }
  Interval bin(std::size_t i) const;
  bool active(std::size_t bin) const { return active_[bin]; }
  std::size_t active_count() const { return active_bins_.size(); }
  const std::vector<std::size_t>& active_bins() const { return active_bins_; }
  std::optional<std::size_t> active_index(std::size_t bin) const;
  double active_measure() const;
  /// Measure of the deactivated bins.
  double snapped_hole_measure() const;
  /// Active-index list of the bins in [lo, hi) (grid-aligned endpoints).
  std::vector<std::size_t> active_indices_in(const Interval& range) const;

 private:
  std::vector<bool> active_;
  std::vector<std::size_t> active_bins_;
  std::vector<std::size_t> index_of_;  // bin -> active index, npos when inactive
};

/// Bin-averaged density on the active bins of a grid.
class DensityVector {
 public:
  DensityVector() = default;
  DensityVector(std::vector<double> values, double bin_width) : values_(std::move(values)), bin_width_(bin_width) {}

  static DensityVector uniform(const Grid& grid);

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  std::size_t size() const { return values_.size(); }
  double bin_width() const { return bin_width_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double l1_norm() const;
  /// Integral (signed) of the density.
  double mass() const;
  void scale(double factor);

 private:
  std::vector<double> values_;
  double bin_width_ = 1.0;
};

double l1_distance(const DensityVector& a, const DensityVector& b);

struct MatrixEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Transfer operator with hole on bin-averaged densities over active bins:
/// M_ij = m(B_j ∩ T^{-1} B_i) / m(B_j), column = source bin. Row-major sparse storage.
class OpenTransferMatrix {
 public:
  OpenTransferMatrix() = default;
  OpenTransferMatrix(Grid grid, std::vector<MatrixEntry> entries, bool exact);

  const Grid& grid() const { return grid_; }
  bool exact() const { return exact_; }
  std::size_t dim() const { return grid_.active_count(); }
  std::size_t nonzeros() const { return values_.size(); }

  double entry(std::size_t row, std::size_t col) const;
  std::vector<MatrixEntry> entries() const;
  std::vector<double> column_sums() const;

  void multiply(std::span<const double> x, std::span<double> y) const;
  void multiply_transpose(std::span<const double> x, std::span<double> y) const;

  void write_dump(std::ostream& os) const;
  static OpenTransferMatrix read_dump(std::istream& is);

 private:
  Grid grid_;
  bool exact_ = false;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> cols_;
  std::vector<double> values_;
};

/// Exact operator for a piecewise-linear Markov map whose branch endpoints, images and hole
/// endpoints all sit on the N-grid. Entries are computed in integer grid arithmetic.
OpenTransferMatrix build_markov_operator(const PiecewiseMap& map, const HoleSet& hole, std::size_t bin_count);

/// Ulam discretization: exact interval intersection of each monotone branch with the bins.
OpenTransferMatrix build_ulam_operator(const PiecewiseMap& map, const HoleSet& hole, std::size_t bin_count);

DensityVector apply(const OpenTransferMatrix& matrix, const DensityVector& f);

/// Outputs k = 0..steps, each M^k f / |M^k f|_1.
std::vector<DensityVector> normalized_iterate(const OpenTransferMatrix& matrix, const DensityVector& f,
                                              std::size_t steps);

}  // namespace leakmap
