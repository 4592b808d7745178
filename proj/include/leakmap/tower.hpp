#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "leakmap/maps.hpp"
#include "leakmap/openop.hpp"

namespace leakmap {

inline constexpr std::size_t kNoImage = std::numeric_limits<std::size_t>::max();

/// Young partition element Z_{0,j} of the base. Hole pieces carry R = level of hole entry and no image.
struct BaseCell {
  double measure = 0.0;
  std::size_t return_time = 1;
  std::size_t image_index = kNoImage;
  bool hole = false;
  Interval interval;
};

struct HoleCell {
  std::size_t level = 1;
  double measure = 0.0;
};

/// Tower data as needed by q and (H1). Built from a map or given directly.
struct TowerSpec {
  std::vector<BaseCell> base_cells;
  std::vector<double> image_measures;  // Z_0^im
  std::vector<HoleCell> hole_cells;    // H_{l,j}, l >= 1
  double beta = 0.0;
  double theta = 0.0;
  double C1 = 0.0;

  /// c0 = min m(Z') over image elements.
  double c0() const;
  /// Throws InvalidArgument for holes in the base, invalid image indices or empty image lists.
  void validate() const;
};

/// q = sum_{l>=1} m(H_l) beta^{-(l-1)}.
double q_value(const TowerSpec& spec);

/// (H1): q < (1-beta) c0 / (1+C1).
ConditionReport check_h1(const TowerSpec& spec);

/// Record per (level, piece): `level cell_index measure return_time image_index hole_flag interval_lo interval_hi`,
/// after a `beta theta C1 c0` header. Image index -1 marks hole pieces.
void write_tower_dump(const TowerSpec& spec, std::ostream& os);

/// A cylinder of the base followed for `level` steps without returning: the points of a base cell
/// with a fixed itinerary b_0..b_level through non-base cells.
struct TowerCell {
  std::size_t level = 0;
  std::size_t bin = 0;     // grid bin containing T^level of the cell
  std::size_t parent = kNoImage;
  double measure = 0.0;    // Lebesgue measure of the cell's base interval
  double log_jacobian = 0.0;  // log |(T^level)'|
  bool hole = false;       // entered the hole at this level; absorbs
  Interval base_interval;
  int orientation = 1;     // sign of (T^level)'
  std::vector<std::size_t> children;                     // next level, including hole cells
  std::vector<std::pair<std::size_t, double>> returns;   // (level-0 cell, density weight)
  double overflow = 0.0;   // measure of descendants beyond the depth cap
};

struct TowerOptions {
  std::size_t depth_cap = 40;
  double tail_tolerance = 1e-6;        // unresolved tail relative to the base measure
  double overflow_tolerance = 1e-9;    // mass crossing the cap per step, relative to the total
  std::size_t cell_budget = 2000000;
  std::optional<double> beta;
  double C1 = 0.0;
};

class Tower {
 public:
  const TowerSpec& spec() const { return spec_; }
  const std::vector<TowerCell>& cells() const { return cells_; }
  const Grid& grid() const { return grid_; }
  std::size_t level_count() const { return level_start_.size() - 1; }
  /// Cells of level l are [level_start(l), level_start(l+1)).
  std::size_t level_start(std::size_t level) const { return level_start_[level]; }
  std::size_t base_count() const { return level_start_[1]; }
  double base_mass() const { return base_mass_; }
  double unresolved_tail() const { return unresolved_; }
  double overflow_tolerance() const { return overflow_tolerance_; }
  /// Sum over pieces and unresolved tail; equals base_mass up to rounding.
  double accounted_mass() const;
  /// Measure of the non-hole cells of each level.
  std::vector<double> level_masses() const;

  friend Tower build_tower_first_return(const PiecewiseMap& map, const OpenTransferMatrix& flat,
                                        const std::vector<std::size_t>& base_bins, const TowerOptions& options);

 private:
  TowerSpec spec_;
  std::vector<TowerCell> cells_;
  std::vector<std::size_t> level_start_;
  Grid grid_;
  double base_mass_ = 0.0;
  double unresolved_ = 0.0;
  double overflow_tolerance_ = 1e-9;
};

/// First-return tower over a union of active grid bins of an exact operator. Pieces entering the
/// hole before returning become hole cells at their entry level.
Tower build_tower_first_return(const PiecewiseMap& map, const OpenTransferMatrix& flat,
                               const std::vector<std::size_t>& base_bins, const TowerOptions& options = {});

/// Cell-wise constant function on the tower with optional per-cell Lipschitz bounds (empty = 0).
struct TowerFunction {
  std::vector<double> values;
  std::vector<double> lip;
};

struct TowerStep {
  TowerFunction f;
  double hole_mass = 0.0;      // mass absorbed this step
  double overflow_mass = 0.0;  // mass carried past the depth cap
};

/// One step of the tower transfer operator with its mass ledger.
TowerStep tower_transfer_step(const Tower& tower, const TowerFunction& f);

/// One step; throws TruncationOverflow if the mass crossing the cap exceeds the tolerance.
TowerFunction tower_transfer_apply(const Tower& tower, const TowerFunction& f);

double tower_l1(const Tower& tower, const TowerFunction& f);
/// sup_{l,j} |f_{l,j}|_inf beta^l, with |f|_inf bounded by |value| + lip on each cell.
double tower_sup_norm(const Tower& tower, const TowerFunction& f, double beta);
/// sup_{l,j} Lip(f_{l,j}) beta^l.
double tower_lip_norm(const Tower& tower, const TowerFunction& f, double beta);

struct TowerEigen {
  double lambda = 0.0;
  TowerFunction phi;  // |phi|_1 = 1
  double residual = 0.0;
  std::size_t iterations = 0;
};

TowerEigen tower_leading_eigenpair(const Tower& tower, double tol = 1e-12, std::size_t max_iter = 200000);

/// P_pi f on the active bins of the flat grid.
DensityVector project(const Tower& tower, const TowerFunction& f);

/// f(x) = f~(pi x) J pi(x) on the cells up to the first level whose cells cover every active bin,
/// spread by a bin-wise partition of unity. Throws CoverageGap when no such level exists.
TowerFunction lift(const Tower& tower, const DensityVector& density);

struct LasotaYorkeReport {
  double beta = 0.0;
  double C = 0.0;             // smallest constant over all samples
  double C_certified = 0.0;   // twice the constant fitted on the first half of the samples
  double beta_eff = 0.0;      // fitted contraction of the Lipschitz norm
  std::size_t samples = 0;
  std::size_t n_max = 0;
  std::size_t violations = 0;  // samples exceeding C_certified
  bool certified = false;
};

LasotaYorkeReport lasota_yorke_check(const Tower& tower, std::size_t sample_count, std::size_t n_max,
                                     std::uint64_t seed, std::optional<double> beta = std::nullopt);

/// Per-level min/max of phi lambda^l over non-hole cells (Prop 2.2(i) profile).
struct LevelProfile {
  std::vector<double> level_min;
  std::vector<double> level_max;
  double spread = 0.0;  // max over levels of level_max / min over levels of level_min
};

LevelProfile eigenfunction_level_profile(const Tower& tower, const TowerEigen& eigen);

struct BMembership {
  double sup_norm = 0.0;  // ||phi||_inf in the weighted norm
  double log_lip = 0.0;   // cell-wise constant, so 0
  double m_lower = 0.0;   // (1+C1)/c0
  double m_upper = 0.0;   // (1-beta)/q
  bool member = false;    // some M in the interval bounds both
};

BMembership check_bm_membership(const Tower& tower, const TowerEigen& eigen, double beta);

/// Reachability of the base from the non-hole base cells Z' along tower paths of exact length n.
struct MixingReport {
  std::size_t horizon = 0;
  std::optional<std::size_t> onset;  // smallest N with every base cell reached for all N <= n <= horizon
  bool mixing_up_to_horizon = false;  // onset exists and leaves at least half the window
};

MixingReport check_mixing(const Tower& tower, std::size_t horizon);

}  // namespace leakmap
