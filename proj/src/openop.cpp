#include "leakmap/openop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "leakmap/error.hpp"

namespace leakmap {

namespace {

constexpr std::size_t kNpos = std::numeric_limits<std::size_t>::max();
constexpr double kGridTol = 1e-9;

// Grid coordinate of v when it sits on a grid line (within tolerance).
std::optional<long long> grid_point(double v, std::size_t n) {
  const double scaled = v * static_cast<double>(n);
  const double r = std::round(scaled);
  if (std::abs(scaled - r) > kGridTol) return std::nullopt;
  return static_cast<long long>(r);
}

void require_aligned(double v, std::size_t n, const char* what) {
  if (!grid_point(v, n)) {
    std::ostringstream os;
    os.precision(17);
    os << what << " " << v << " is not a point of the " << n << "-bin grid";
    throw Error(ErrorCode::NotMarkovAligned, os.str());
  }
}

}  // namespace

Grid::Grid(std::size_t bin_count, std::vector<bool> active) : active_(std::move(active)) {
  if (bin_count == 0 || active_.size() != bin_count)
    throw Error(ErrorCode::InvalidArgument, "grid needs a positive bin count and one flag per bin");
  index_of_.assign(bin_count, kNpos);
  for (std::size_t i = 0; i < bin_count; ++i) {
    if (active_[i]) {
      index_of_[i] = active_bins_.size();
      active_bins_.push_back(i);
    }
  }
}

Grid Grid::uniform(std::size_t bin_count) { return Grid(bin_count, std::vector<bool>(bin_count, true)); }

Grid Grid::snapped(std::size_t bin_count, const HoleSet& hole) {
  std::vector<bool> active(bin_count, true);
  const double n = static_cast<double>(bin_count);
  for (const auto& c : hole.components()) {
    const auto lo_pt = grid_point(c.lo, bin_count);
    const auto hi_pt = grid_point(c.hi, bin_count);
    const long long first = lo_pt ? *lo_pt : static_cast<long long>(std::floor(c.lo * n));
    const long long last = (hi_pt ? *hi_pt : static_cast<long long>(std::ceil(c.hi * n))) - 1;
    for (long long i = std::max(0LL, first); i <= std::min<long long>(last, static_cast<long long>(bin_count) - 1); ++i)
      active[static_cast<std::size_t>(i)] = false;
  }
  return Grid(bin_count, std::move(active));
}

Interval Grid::bin(std::size_t i) const {
  const double n = static_cast<double>(bin_count());
  return {static_cast<double>(i) / n, static_cast<double>(i + 1) / n};
}

std::optional<std::size_t> Grid::active_index(std::size_t bin) const {
  if (bin >= index_of_.size() || index_of_[bin] == kNpos) return std::nullopt;
  return index_of_[bin];
}

double Grid::active_measure() const {
  return static_cast<double>(active_count()) / static_cast<double>(bin_count());
}

double Grid::snapped_hole_measure() const {
  return static_cast<double>(bin_count() - active_count()) / static_cast<double>(bin_count());
}

std::vector<std::size_t> Grid::active_indices_in(const Interval& range) const {
  const auto lo = grid_point(range.lo, bin_count());
  const auto hi = grid_point(range.hi, bin_count());
  if (!lo || !hi) throw Error(ErrorCode::NotMarkovAligned, "range endpoints must be grid points");
  std::vector<std::size_t> out;
  for (long long b = std::max(0LL, *lo); b < std::min<long long>(*hi, static_cast<long long>(bin_count())); ++b)
    if (auto idx = active_index(static_cast<std::size_t>(b))) out.push_back(*idx);
  return out;
}

DensityVector DensityVector::uniform(const Grid& grid) {
  const double value = 1.0 / grid.active_measure();
  return DensityVector(std::vector<double>(grid.active_count(), value), grid.bin_width());
}

double DensityVector::l1_norm() const {
  double s = 0.0;
  for (double v : values_) s += std::abs(v);
  return s * bin_width_;
}

double DensityVector::mass() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s * bin_width_;
}

void DensityVector::scale(double factor) {
  for (double& v : values_) v *= factor;
}

double l1_distance(const DensityVector& a, const DensityVector& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "densities live on different grids");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s * a.bin_width();
}

OpenTransferMatrix::OpenTransferMatrix(Grid grid, std::vector<MatrixEntry> entries, bool exact)
    : grid_(std::move(grid)), exact_(exact) {
  const std::size_t n = grid_.active_count();
  std::sort(entries.begin(), entries.end(), [](const MatrixEntry& a, const MatrixEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_start_.assign(n + 1, 0);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.row >= n || e.col >= n) throw Error(ErrorCode::DimensionMismatch, "matrix entry outside the active bins");
    if (!(e.value >= 0.0)) throw Error(ErrorCode::InvalidArgument, "transfer matrix entries must be nonnegative");
    if (!cols_.empty() && k > 0 && entries[k - 1].row == e.row && entries[k - 1].col == e.col) {
      values_.back() += e.value;
      continue;
    }
    cols_.push_back(e.col);
    values_.push_back(e.value);
    ++row_start_[e.row + 1];
  }
  for (std::size_t i = 0; i < n; ++i) row_start_[i + 1] += row_start_[i];
}

double OpenTransferMatrix::entry(std::size_t row, std::size_t col) const {
  if (row >= dim() || col >= dim()) throw Error(ErrorCode::DimensionMismatch, "entry index out of range");
  auto begin = cols_.begin() + static_cast<std::ptrdiff_t>(row_start_[row]);
  auto end = cols_.begin() + static_cast<std::ptrdiff_t>(row_start_[row + 1]);
  auto it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) return 0.0;
  return values_[static_cast<std::size_t>(it - cols_.begin())];
}

std::vector<MatrixEntry> OpenTransferMatrix::entries() const {
  std::vector<MatrixEntry> out;
  out.reserve(values_.size());
  for (std::size_t i = 0; i < dim(); ++i)
    for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) out.push_back({i, cols_[k], values_[k]});
  return out;
}

std::vector<double> OpenTransferMatrix::column_sums() const {
  std::vector<double> sums(dim(), 0.0);
  for (std::size_t i = 0; i < dim(); ++i)
    for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) sums[cols_[k]] += values_[k];
  return sums;
}

void OpenTransferMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != dim() || y.size() != dim())
    throw Error(ErrorCode::DimensionMismatch, "vector length does not match the active bin count");
  for (std::size_t i = 0; i < dim(); ++i) {
    double s = 0.0;
    for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) s += values_[k] * x[cols_[k]];
    y[i] = s;
  }
}

void OpenTransferMatrix::multiply_transpose(std::span<const double> x, std::span<double> y) const {
  if (x.size() != dim() || y.size() != dim())
    throw Error(ErrorCode::DimensionMismatch, "vector length does not match the active bin count");
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < dim(); ++i)
    for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) y[cols_[k]] += values_[k] * x[i];
}

void OpenTransferMatrix::write_dump(std::ostream& os) const {
  const auto& bins = grid_.active_bins();
  os << grid_.bin_count() << ' ' << grid_.active_count() << ' ' << (exact_ ? 1 : 0) << '\n';
  char buf[64];
  for (std::size_t i = 0; i < dim(); ++i) {
    for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", values_[k]);
      os << bins[i] << ' ' << bins[cols_[k]] << ' ' << buf << '\n';
    }
  }
}

OpenTransferMatrix OpenTransferMatrix::read_dump(std::istream& is) {
  std::size_t n = 0, active_count = 0;
  int exact_flag = 0;
  if (!(is >> n >> active_count >> exact_flag) || n == 0)
    throw Error(ErrorCode::Io, "matrix dump header must read `N active_count exact_flag`");
  struct Raw {
    std::size_t i, j;
    double v;
  };
  std::vector<Raw> raw;
  std::vector<bool> active(n, false);
  std::size_t i = 0, j = 0;
  double v = 0.0;
  while (is >> i >> j >> v) {
    if (i >= n || j >= n) throw Error(ErrorCode::Io, "matrix dump index outside the grid");
    active[i] = active[j] = true;
    raw.push_back({i, j, v});
  }
  // Active bins without any entry are indistinguishable from inactive ones; pad from the left.
  std::size_t seen = static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
  for (std::size_t b = 0; b < n && seen < active_count; ++b)
    if (!active[b]) {
      active[b] = true;
      ++seen;
    }
  Grid grid(n, std::move(active));
  std::vector<MatrixEntry> entries;
  entries.reserve(raw.size());
  for (const auto& r : raw) entries.push_back({*grid.active_index(r.i), *grid.active_index(r.j), r.v});
  return OpenTransferMatrix(std::move(grid), std::move(entries), exact_flag != 0);
}

OpenTransferMatrix build_markov_operator(const PiecewiseMap& map, const HoleSet& hole, std::size_t bin_count) {
  if (bin_count == 0) throw Error(ErrorCode::InvalidArgument, "bin count must be positive");
  if (!map.all_affine()) throw Error(ErrorCode::NotMarkovAligned, "exact construction needs affine branches");
  for (const auto& c : hole.components()) {
    require_aligned(c.lo, bin_count, "hole endpoint");
    require_aligned(c.hi, bin_count, "hole endpoint");
  }
  const Grid grid = Grid::snapped(bin_count, hole);
  std::vector<MatrixEntry> entries;
  for (const auto& b : map.branches()) {
    for (double v : {b.domain().lo, b.domain().hi}) require_aligned(v, bin_count, "branch endpoint");
    for (double v : {b.image().lo, b.image().hi}) require_aligned(v, bin_count, "branch image endpoint");
    const long long p0 = *grid_point(b.domain().lo, bin_count);
    const long long p1 = *grid_point(b.domain().hi, bin_count);
    const long long q0 = *grid_point(b.image().lo, bin_count);
    const long long q1 = *grid_point(b.image().hi, bin_count);
    const long long d = p1 - p0;  // source length in bins
    const long long k = q1 - q0;  // image length in bins
    const bool increasing = b.orientation() == Orientation::Increasing;
    // In units of 1/d bin along y, source bin j covers [lo, lo + k).
    for (long long j = p0; j < p1; ++j) {
      const auto col = grid.active_index(static_cast<std::size_t>(j));
      if (!col) continue;
      const long long lo = increasing ? q0 * d + (j - p0) * k : q1 * d - (j - p0 + 1) * k;
      const long long hi = lo + k;
      for (long long i = lo / d; i * d < hi; ++i) {
        const long long overlap = std::min(hi, (i + 1) * d) - std::max(lo, i * d);
        if (overlap <= 0) continue;
        const auto row = grid.active_index(static_cast<std::size_t>(i));
        if (!row) continue;
        entries.push_back({*row, *col, static_cast<double>(overlap) / static_cast<double>(k)});
      }
    }
  }
  return OpenTransferMatrix(grid, std::move(entries), true);
}

OpenTransferMatrix build_ulam_operator(const PiecewiseMap& map, const HoleSet& hole, std::size_t bin_count) {
  if (bin_count == 0) throw Error(ErrorCode::InvalidArgument, "bin count must be positive");
  const Grid grid = Grid::snapped(bin_count, hole);
  const double n = static_cast<double>(bin_count);
  std::vector<MatrixEntry> entries;
  for (const auto& b : map.branches()) {
    const auto first = static_cast<std::size_t>(std::floor(b.domain().lo * n));
    const auto last = std::min(bin_count - 1, static_cast<std::size_t>(std::ceil(b.domain().hi * n)) - 1);
    for (std::size_t j = first; j <= last; ++j) {
      const auto col = grid.active_index(j);
      if (!col) continue;
      const double x0 = std::max(b.domain().lo, static_cast<double>(j) / n);
      const double x1 = std::min(b.domain().hi, static_cast<double>(j + 1) / n);
      if (!(x1 > x0)) continue;
      const double ya = b.eval(x0);
      const double yb = b.eval(x1);
      const double ylo = std::clamp(std::min(ya, yb), 0.0, 1.0);
      const double yhi = std::clamp(std::max(ya, yb), 0.0, 1.0);
      const auto ifirst = static_cast<std::size_t>(std::floor(ylo * n));
      const auto ilast = std::min(bin_count - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(yhi * n) - 1.0)));
      for (std::size_t i = std::min(ifirst, bin_count - 1); i <= ilast; ++i) {
        const auto row = grid.active_index(i);
        if (!row) continue;
        const double y0 = std::max(ylo, static_cast<double>(i) / n);
        const double y1 = std::min(yhi, static_cast<double>(i + 1) / n);
        if (!(y1 > y0)) continue;
        // Pull the target slice back through the branch, clipped to the source bin.
        const double u0 = std::clamp(b.inverse(y0), x0, x1);
        const double u1 = std::clamp(b.inverse(y1), x0, x1);
        const double length = std::abs(u1 - u0);
        if (length > 0.0) entries.push_back({*row, *col, length * n});
      }
    }
  }
  return OpenTransferMatrix(grid, std::move(entries), false);
}

DensityVector apply(const OpenTransferMatrix& matrix, const DensityVector& f) {
  if (f.size() != matrix.dim())
    throw Error(ErrorCode::DimensionMismatch, "density has " + std::to_string(f.size()) + " bins, operator has " +
                                                  std::to_string(matrix.dim()));
  DensityVector out(std::vector<double>(f.size()), f.bin_width());
  matrix.multiply(f.values(), out.values());
  return out;
}

std::vector<DensityVector> normalized_iterate(const OpenTransferMatrix& matrix, const DensityVector& f,
                                              std::size_t steps) {
  const double norm0 = f.l1_norm();
  if (!(norm0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "initial density has zero mass");
  for (double v : f.values())
    if (v < 0.0) throw Error(ErrorCode::InvalidArgument, "initial density must be nonnegative");
  std::vector<DensityVector> out;
  out.reserve(steps + 1);
  DensityVector current = f;
  current.scale(1.0 / norm0);
  out.push_back(current);
  double log_mass = std::log(norm0);
  const double log_floor = std::log(1e-300);
  for (std::size_t k = 1; k <= steps; ++k) {
    DensityVector next = apply(matrix, current);
    const double ratio = next.l1_norm();
    log_mass += ratio > 0.0 ? std::log(ratio) : -std::numeric_limits<double>::infinity();
    if (!(ratio > 0.0) || log_mass < log_floor)
      throw Error(ErrorCode::MassExtinct, "surviving mass vanished at step " + std::to_string(k));
    next.scale(1.0 / ratio);
    out.push_back(next);
    current = std::move(next);
  }
  return out;
}

}  // namespace leakmap
