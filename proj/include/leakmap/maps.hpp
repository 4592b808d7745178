#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace leakmap {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains_half_open(double x) const { return lo <= x && x < hi; }
  bool contains_closed(double x) const { return lo <= x && x <= hi; }
  bool contains_open(double x) const { return lo < x && x < hi; }
};

enum class Orientation { Increasing, Decreasing };

/// One monotone piece of an interval map. Affine pieces are y = slope*x + intercept;
/// quadratic pieces are y = a*x*(1-x) restricted to one side of the critical point.
class Branch {
 public:
  enum class Formula { Affine, Quadratic };

  static Branch affine(Interval domain, Interval image, Orientation orientation);
  static Branch quadratic(Interval domain, double a);

  const Interval& domain() const { return domain_; }
  /// Closure of the image of the domain.
  const Interval& image() const { return image_; }
  Formula formula() const { return formula_; }
  Orientation orientation() const { return orientation_; }
  double slope() const { return slope_; }
  double parameter() const { return a_; }

  double eval(double x) const;
  double deriv(double x) const;
  /// Preimage of y within the closure of the domain (y clamped to the image).
  double inverse(double y) const;

 private:
  Interval domain_;
  Interval image_;
  Formula formula_ = Formula::Affine;
  Orientation orientation_ = Orientation::Increasing;
  double slope_ = 0.0;
  double intercept_ = 0.0;
  double a_ = 0.0;
};

enum class MapKind { PiecewiseLinearMarkov, PiecewiseExpanding, QuadraticFamily };

const char* to_string(MapKind kind);

struct LinearPiece {
  Interval domain;
  Interval image;
  Orientation orientation = Orientation::Increasing;
};

class PiecewiseMap {
 public:
  PiecewiseMap(MapKind kind, std::vector<Branch> branches,
               std::optional<std::vector<double>> markov_partition = std::nullopt);

  static PiecewiseMap doubling();
  /// k full increasing branches of slope k.
  static PiecewiseMap full_linear(int k);
  static PiecewiseMap linear(MapKind kind, std::span<const LinearPiece> pieces,
                             std::optional<std::vector<double>> markov_partition = std::nullopt);
  /// x -> a x (1-x), split at the critical point into two monotone branches.
  static PiecewiseMap quadratic(double a);

  MapKind kind() const { return kind_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const std::optional<std::vector<double>>& markov_partition() const { return markov_partition_; }

  /// Branch whose half-open domain contains x. With closed_right, x == 1 resolves to the last branch.
  std::optional<std::size_t> branch_index(double x, bool closed_right = false) const;

  double evaluate(double x) const;
  double derivative(double x) const;
  /// Like evaluate, but the right endpoint 1 is mapped by the last branch.
  double evaluate_closed(double x) const;

  bool all_affine() const;
  /// inf |T'| over all branches (0 for the quadratic family).
  double min_expansion() const;

 private:
  MapKind kind_;
  std::vector<Branch> branches_;
  std::optional<std::vector<double>> markov_partition_;
};

struct Preimage {
  double x;
  std::size_t branch;
};

/// All x with T(x) = y, at most one per branch, sorted by branch index. A value y sitting on an
/// endpoint of a branch image is credited only to the first such branch.
std::vector<Preimage> branch_preimages(const PiecewiseMap& map, double y);

/// Finite union of disjoint open subintervals of [0,1].
class HoleSet {
 public:
  HoleSet() = default;
  explicit HoleSet(std::vector<Interval> components);

  const std::vector<Interval>& components() const { return components_; }
  double total_measure() const;
  bool contains(double x) const;
  bool empty() const { return components_.empty(); }

 private:
  std::vector<Interval> components_;
};

struct ConditionReport {
  std::string condition_id;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  std::map<std::string, double> inputs;
};

struct H2Options {
  double beta = 0.0;
  double alpha = 1.0;   // Hoelder exponent of T'
  double C3 = 0.0;      // distortion constant; 0 for piecewise-linear maps
  std::optional<double> gamma;  // overrides the computed shortest monotonicity interval
};

/// Length of the shortest interval of monotonicity of the open map: branch domains cut by the hole.
double shortest_monotonicity_interval(const PiecewiseMap& map, const HoleSet& hole);

ConditionReport check_h2(const PiecewiseMap& map, const HoleSet& hole, const H2Options& options);

struct OpenOrbit {
  bool survived = false;
  double point = 0.0;   // x_n when survived
  int escape_time = 0;  // first k with T^k(x) in the hole otherwise
};

OpenOrbit iterate_open(const PiecewiseMap& map, const HoleSet& hole, double x, int n);

struct SurvivalCurve {
  std::uint64_t samples = 0;
  std::vector<std::uint64_t> survivors;  // survivors[k] = samples still in I^k

  std::vector<double> fractions() const;
};

/// Samples Lebesgue measure on I = [0,1] minus the hole; sample i uses stream i of the seeded generator.
SurvivalCurve monte_carlo_survival(const PiecewiseMap& map, const HoleSet& hole, std::uint64_t sample_count,
                                   int horizon, std::uint64_t seed);

struct EscapeFit {
  double log_slope = 0.0;
  double standard_error = 0.0;
  int k_min = 0;
  int k_max = 0;
};

/// Least-squares slope of log s_k on [k_min, k_max]. The standard error treats the per-step
/// conditional survival counts as independent binomials.
EscapeFit fit_escape_rate(const SurvivalCurve& curve, int k_min, int k_max);

}  // namespace leakmap
