#include "leakmap/maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "leakmap/error.hpp"
#include "leakmap/rng.hpp"

namespace leakmap {

namespace {

constexpr double kEndpointTol = 1e-12;

std::string describe(const Interval& iv) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << iv.lo << ", " << iv.hi << ")";
  return os.str();
}

}  // namespace

const char* to_string(MapKind kind) {
  switch (kind) {
    case MapKind::PiecewiseLinearMarkov: return "piecewise-linear-markov";
    case MapKind::PiecewiseExpanding: return "piecewise-expanding";
    case MapKind::QuadraticFamily: return "quadratic-family";
  }
  return "unknown";
}

Branch Branch::affine(Interval domain, Interval image, Orientation orientation) {
  if (!(domain.length() > 0.0) || !(image.length() > 0.0))
    throw Error(ErrorCode::InvalidArgument, "branch domain and image must have positive length");
  Branch b;
  b.domain_ = domain;
  b.image_ = image;
  b.formula_ = Formula::Affine;
  b.orientation_ = orientation;
  const double s = image.length() / domain.length();
  if (orientation == Orientation::Increasing) {
    b.slope_ = s;
    b.intercept_ = image.lo - s * domain.lo;
  } else {
    b.slope_ = -s;
    b.intercept_ = image.hi + s * domain.lo;
  }
  return b;
}

Branch Branch::quadratic(Interval domain, double a) {
  if (!(a > 0.0 && a <= 4.0)) throw Error(ErrorCode::InvalidArgument, "quadratic parameter must lie in (0,4]");
  const bool left = domain.hi <= 0.5;
  const bool right = domain.lo >= 0.5;
  if (!left && !right)
    throw Error(ErrorCode::InvalidArgument, "quadratic branch must not straddle the critical point");
  Branch b;
  b.domain_ = domain;
  b.formula_ = Formula::Quadratic;
  b.a_ = a;
  b.orientation_ = left ? Orientation::Increasing : Orientation::Decreasing;
  const double y0 = a * domain.lo * (1.0 - domain.lo);
  const double y1 = a * domain.hi * (1.0 - domain.hi);
  b.image_ = {std::min(y0, y1), std::max(y0, y1)};
  return b;
}

double Branch::eval(double x) const {
  if (formula_ == Formula::Affine) return slope_ * x + intercept_;
  return a_ * x * (1.0 - x);
}

double Branch::deriv(double x) const {
  if (formula_ == Formula::Affine) return slope_;
  return a_ * (1.0 - 2.0 * x);
}

double Branch::inverse(double y) const {
  y = std::clamp(y, image_.lo, image_.hi);
  double x;
  if (formula_ == Formula::Affine) {
    x = (y - intercept_) / slope_;
  } else {
    const double disc = std::sqrt(std::max(0.0, 1.0 - 4.0 * y / a_));
    x = orientation_ == Orientation::Increasing ? 0.5 * (1.0 - disc) : 0.5 * (1.0 + disc);
  }
  return std::clamp(x, domain_.lo, domain_.hi);
}

PiecewiseMap::PiecewiseMap(MapKind kind, std::vector<Branch> branches,
                           std::optional<std::vector<double>> markov_partition)
    : kind_(kind), branches_(std::move(branches)), markov_partition_(std::move(markov_partition)) {
  if (branches_.empty()) throw Error(ErrorCode::InvalidArgument, "map needs at least one branch");
  std::sort(branches_.begin(), branches_.end(),
            [](const Branch& a, const Branch& b) { return a.domain().lo < b.domain().lo; });
  if (std::abs(branches_.front().domain().lo) > kEndpointTol ||
      std::abs(branches_.back().domain().hi - 1.0) > kEndpointTol)
    throw Error(ErrorCode::InvalidArgument, "branch domains must cover [0,1)");
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const Branch& b = branches_[i];
    if (i + 1 < branches_.size() && std::abs(b.domain().hi - branches_[i + 1].domain().lo) > kEndpointTol)
      throw Error(ErrorCode::InvalidArgument, "branch domains " + describe(b.domain()) + " and " +
                                                  describe(branches_[i + 1].domain()) + " leave a gap or overlap");
    if (b.image().lo < -kEndpointTol || b.image().hi > 1.0 + kEndpointTol)
      throw Error(ErrorCode::InvalidArgument, "branch image " + describe(b.image()) + " leaves [0,1]");
    if (b.formula() == Branch::Formula::Affine) {
      const double ylo = b.eval(b.domain().lo);
      const double yhi = b.eval(b.domain().hi);
      if (std::abs(std::min(ylo, yhi) - b.image().lo) > kEndpointTol ||
          std::abs(std::max(ylo, yhi) - b.image().hi) > kEndpointTol)
        throw Error(ErrorCode::InvalidArgument, "affine branch does not map its domain onto its image");
    }
  }

  switch (kind_) {
    case MapKind::QuadraticFamily:
      break;
    case MapKind::PiecewiseExpanding:
      if (min_expansion() <= 2.0)
        throw Error(ErrorCode::InvalidArgument, "piecewise-expanding maps need inf |T'| > 2");
      break;
    case MapKind::PiecewiseLinearMarkov: {
      if (!all_affine()) throw Error(ErrorCode::InvalidArgument, "Markov maps must be piecewise linear");
      if (!markov_partition_) {
        std::vector<double> cells{0.0};
        for (const auto& b : branches_) cells.push_back(b.domain().hi);
        markov_partition_ = std::move(cells);
      }
      auto& cells = *markov_partition_;
      std::sort(cells.begin(), cells.end());
      auto on_partition = [&](double v) {
        return std::any_of(cells.begin(), cells.end(), [&](double c) { return std::abs(c - v) <= kEndpointTol; });
      };
      for (const auto& b : branches_) {
        if (!on_partition(b.domain().lo) || !on_partition(b.domain().hi))
          throw Error(ErrorCode::InvalidArgument, "branch domain " + describe(b.domain()) +
                                                      " is not a union of Markov cells");
        if (!on_partition(b.image().lo) || !on_partition(b.image().hi))
          throw Error(ErrorCode::InvalidArgument, "branch image " + describe(b.image()) +
                                                      " is not a union of Markov cells");
      }
      break;
    }
  }
}

PiecewiseMap PiecewiseMap::doubling() { return full_linear(2); }

PiecewiseMap PiecewiseMap::full_linear(int k) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "full linear map needs at least two branches");
  std::vector<LinearPiece> pieces;
  for (int i = 0; i < k; ++i)
    pieces.push_back({{static_cast<double>(i) / k, static_cast<double>(i + 1) / k}, {0.0, 1.0},
                      Orientation::Increasing});
  return linear(MapKind::PiecewiseLinearMarkov, pieces);
}

PiecewiseMap PiecewiseMap::linear(MapKind kind, std::span<const LinearPiece> pieces,
                                  std::optional<std::vector<double>> markov_partition) {
  std::vector<Branch> branches;
  branches.reserve(pieces.size());
  for (const auto& p : pieces) branches.push_back(Branch::affine(p.domain, p.image, p.orientation));
  return PiecewiseMap(kind, std::move(branches), std::move(markov_partition));
}

PiecewiseMap PiecewiseMap::quadratic(double a) {
  return PiecewiseMap(MapKind::QuadraticFamily,
                      {Branch::quadratic({0.0, 0.5}, a), Branch::quadratic({0.5, 1.0}, a)});
}

std::optional<std::size_t> PiecewiseMap::branch_index(double x, bool closed_right) const {
  if (closed_right && x == branches_.back().domain().hi) return branches_.size() - 1;
  auto it = std::upper_bound(branches_.begin(), branches_.end(), x,
                             [](double v, const Branch& b) { return v < b.domain().lo; });
  if (it == branches_.begin()) return std::nullopt;
  const std::size_t idx = static_cast<std::size_t>(std::distance(branches_.begin(), it)) - 1;
  if (!branches_[idx].domain().contains_half_open(x)) return std::nullopt;
  return idx;
}

double PiecewiseMap::evaluate(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidArgument, "point outside [0,1]");
  auto idx = branch_index(x);
  if (!idx) throw Error(ErrorCode::PointOnPartitionBoundary, "no branch domain contains the point");
  return branches_[*idx].eval(x);
}

double PiecewiseMap::evaluate_closed(double x) const {
  auto idx = branch_index(x, true);
  if (!idx) throw Error(ErrorCode::PointOnPartitionBoundary, "no branch domain contains the point");
  return std::clamp(branches_[*idx].eval(x), 0.0, 1.0);
}

double PiecewiseMap::derivative(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidArgument, "point outside [0,1]");
  auto idx = branch_index(x);
  if (!idx) throw Error(ErrorCode::PointOnPartitionBoundary, "no branch domain contains the point");
  return branches_[*idx].deriv(x);
}

bool PiecewiseMap::all_affine() const {
  return std::all_of(branches_.begin(), branches_.end(),
                     [](const Branch& b) { return b.formula() == Branch::Formula::Affine; });
}

double PiecewiseMap::min_expansion() const {
  if (!all_affine()) return 0.0;
  double tau = std::numeric_limits<double>::infinity();
  for (const auto& b : branches_) tau = std::min(tau, std::abs(b.slope()));
  return tau;
}

std::vector<Preimage> branch_preimages(const PiecewiseMap& map, double y) {
  std::vector<Preimage> out;
  bool boundary_taken = false;
  const auto& branches = map.branches();
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const Branch& b = branches[i];
    if (!b.image().contains_closed(y)) continue;
    const bool on_boundary = (y == b.image().lo || y == b.image().hi);
    if (on_boundary) {
      if (boundary_taken) continue;
      boundary_taken = true;
    }
    out.push_back({b.inverse(y), i});
  }
  return out;
}

HoleSet::HoleSet(std::vector<Interval> components) : components_(std::move(components)) {
  std::sort(components_.begin(), components_.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const Interval& c = components_[i];
    if (!(c.lo >= 0.0 && c.hi <= 1.0 && c.lo < c.hi))
      throw Error(ErrorCode::InvalidArgument, "hole component " + describe(c) + " is not a nonempty subinterval of [0,1]");
    if (i > 0 && components_[i - 1].hi > c.lo)
      throw Error(ErrorCode::InvalidArgument,
                  "hole components " + describe(components_[i - 1]) + " and " + describe(c) + " overlap");
  }
}

double HoleSet::total_measure() const {
  double total = 0.0;
  for (const auto& c : components_) total += c.length();
  return total;
}

bool HoleSet::contains(double x) const {
  for (const auto& c : components_)
    if (c.contains_open(x)) return true;
  return false;
}

double shortest_monotonicity_interval(const PiecewiseMap& map, const HoleSet& hole) {
  double gamma = std::numeric_limits<double>::infinity();
  for (const auto& b : map.branches()) {
    double cursor = b.domain().lo;
    for (const auto& c : hole.components()) {
      if (c.hi <= cursor || c.lo >= b.domain().hi) continue;
      if (c.lo > cursor) gamma = std::min(gamma, c.lo - cursor);
      cursor = std::max(cursor, c.hi);
    }
    if (b.domain().hi > cursor) gamma = std::min(gamma, b.domain().hi - cursor);
  }
  return gamma;
}

ConditionReport check_h2(const PiecewiseMap& map, const HoleSet& hole, const H2Options& options) {
  if (!map.all_affine())
    throw Error(ErrorCode::InvalidArgument, "(H2) applies to piecewise expanding maps; the quadratic family is not");
  const double tau = map.min_expansion();
  const double beta_floor = std::max(2.0 / tau, std::pow(tau, -options.alpha));
  if (!(options.beta > beta_floor && options.beta < 1.0)) {
    std::ostringstream os;
    os.precision(17);
    os << "beta=" << options.beta << " outside (" << beta_floor << ", 1) for tau=" << tau;
    if (tau <= 2.0) os << "; (H2) needs tau > 2";
    throw Error(ErrorCode::InvalidBeta, os.str());
  }
  const double gamma = options.gamma.value_or(shortest_monotonicity_interval(map, hole));
  ConditionReport r;
  r.condition_id = "H2";
  r.lhs = hole.total_measure();
  r.rhs = gamma * gamma * (1.0 - options.beta) * (tau - 2.0 / options.beta) / (1.0 + options.C3);
  r.pass = r.lhs < r.rhs;
  r.inputs = {{"beta", options.beta}, {"tau", tau},        {"gamma", gamma},
              {"C3", options.C3},     {"alpha", options.alpha}, {"gamma_override", options.gamma ? 1.0 : 0.0}};
  return r;
}

OpenOrbit iterate_open(const PiecewiseMap& map, const HoleSet& hole, double x, int n) {
  if (hole.contains(x)) throw Error(ErrorCode::InvalidArgument, "starting point lies in the hole");
  for (int k = 1; k <= n; ++k) {
    x = map.evaluate_closed(x);
    if (hole.contains(x)) return {false, x, k};
  }
  return {true, x, 0};
}

std::vector<double> SurvivalCurve::fractions() const {
  std::vector<double> s(survivors.size());
  for (std::size_t k = 0; k < survivors.size(); ++k)
    s[k] = samples == 0 ? 0.0 : static_cast<double>(survivors[k]) / static_cast<double>(samples);
  return s;
}

SurvivalCurve monte_carlo_survival(const PiecewiseMap& map, const HoleSet& hole, std::uint64_t sample_count,
                                   int horizon, std::uint64_t seed) {
  if (sample_count == 0) throw Error(ErrorCode::InvalidArgument, "sample_count must be positive");
  if (horizon < 0) throw Error(ErrorCode::InvalidArgument, "horizon must be nonnegative");
  const double free_measure = 1.0 - hole.total_measure();
  if (!(free_measure > 0.0)) throw Error(ErrorCode::InvalidArgument, "hole covers the whole interval");

  // Gaps between hole components, in order; u in [0, free_measure) is laid out along them.
  std::vector<Interval> gaps;
  double cursor = 0.0;
  for (const auto& c : hole.components()) {
    if (c.lo > cursor) gaps.push_back({cursor, c.lo});
    cursor = std::max(cursor, c.hi);
  }
  if (cursor < 1.0) gaps.push_back({cursor, 1.0});

  const CounterRng rng(seed);
  std::vector<std::uint64_t> escaped_at(static_cast<std::size_t>(horizon) + 2, 0);
  for (std::uint64_t i = 0; i < sample_count; ++i) {
    double u = rng.uniform(i, 0) * free_measure;
    double x = gaps.back().hi;
    for (const auto& g : gaps) {
      if (u < g.length()) {
        x = g.lo + u;
        break;
      }
      u -= g.length();
    }
    if (hole.contains(x)) x = gaps.back().lo;
    const OpenOrbit orbit = iterate_open(map, hole, x, horizon);
    if (!orbit.survived) ++escaped_at[static_cast<std::size_t>(orbit.escape_time)];
  }

  SurvivalCurve curve;
  curve.samples = sample_count;
  curve.survivors.resize(static_cast<std::size_t>(horizon) + 1);
  std::uint64_t alive = sample_count;
  for (int k = 0; k <= horizon; ++k) {
    alive -= escaped_at[static_cast<std::size_t>(k)];
    curve.survivors[static_cast<std::size_t>(k)] = alive;
  }
  return curve;
}

EscapeFit fit_escape_rate(const SurvivalCurve& curve, int k_min, int k_max) {
  if (k_min < 0 || k_max <= k_min || static_cast<std::size_t>(k_max) >= curve.survivors.size())
    throw Error(ErrorCode::InvalidArgument, "invalid fit window");
  for (int k = k_min; k <= k_max; ++k)
    if (curve.survivors[static_cast<std::size_t>(k)] == 0)
      throw Error(ErrorCode::MassExtinct, "no Monte-Carlo survivors inside the fit window");

  const int count = k_max - k_min + 1;
  const double kbar = 0.5 * (k_min + k_max);
  double sxx = 0.0;
  for (int k = k_min; k <= k_max; ++k) sxx += (k - kbar) * (k - kbar);
  std::vector<double> weight(static_cast<std::size_t>(count));
  for (int k = k_min; k <= k_max; ++k) weight[static_cast<std::size_t>(k - k_min)] = (k - kbar) / sxx;

  double slope = 0.0;
  for (int k = k_min; k <= k_max; ++k)
    slope += weight[static_cast<std::size_t>(k - k_min)] *
             std::log(static_cast<double>(curve.survivors[static_cast<std::size_t>(k)]));

  // slope = sum_k w_k log n_k = sum_{j>k_min} W_j d_j with d_j = log(n_j / n_{j-1}), W_j = sum_{k>=j} w_k.
  double variance = 0.0;
  for (int j = k_min + 1; j <= k_max; ++j) {
    double tail = 0.0;
    for (int k = j; k <= k_max; ++k) tail += weight[static_cast<std::size_t>(k - k_min)];
    const double prev = static_cast<double>(curve.survivors[static_cast<std::size_t>(j - 1)]);
    const double p = static_cast<double>(curve.survivors[static_cast<std::size_t>(j)]) / prev;
    variance += tail * tail * (1.0 - p) / (prev * p);
  }
  return {slope, std::sqrt(variance), k_min, k_max};
}

}  // namespace leakmap
