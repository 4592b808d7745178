#include "leakmap/tower.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "leakmap/error.hpp"
#include "leakmap/rng.hpp"

namespace leakmap {

namespace {

struct Target {
  std::size_t bin;
  Interval source;  // part of the source bin mapped onto this target bin
};

struct BinMap {
  double abs_slope = 0.0;
  int sign = 1;
  std::vector<Target> targets;
};

// Image of each active bin under an affine branch, split into whole target bins.
std::vector<BinMap> bin_transitions(const PiecewiseMap& map, const Grid& grid) {
  const std::size_t n_bins = grid.bin_count();
  const double n = static_cast<double>(n_bins);
  std::vector<BinMap> out(n_bins);
  for (std::size_t j : grid.active_bins()) {
    const Interval cell = grid.bin(j);
    const auto bi = map.branch_index(cell.lo);
    const Branch& b = map.branches()[*bi];
    if (b.formula() != Branch::Formula::Affine || cell.hi > b.domain().hi + 1e-12)
      throw Error(ErrorCode::NotMarkovAligned, "bin " + std::to_string(j) + " is not inside a single affine branch");
    const double y0 = b.eval(cell.lo) * n, y1 = b.eval(cell.hi) * n;
    const double lo = std::round(std::min(y0, y1)), hi = std::round(std::max(y0, y1));
    if (std::abs(lo - std::min(y0, y1)) > 1e-9 || std::abs(hi - std::max(y0, y1)) > 1e-9)
      throw Error(ErrorCode::NotMarkovAligned, "image of bin " + std::to_string(j) + " is not a union of bins");
    BinMap& m = out[j];
    m.abs_slope = std::abs(b.slope());
    m.sign = b.slope() > 0.0 ? 1 : -1;
    for (auto k = static_cast<std::size_t>(lo); k < static_cast<std::size_t>(hi) && k < n_bins; ++k) {
      const double u0 = b.inverse(static_cast<double>(k) / n);
      const double u1 = b.inverse(static_cast<double>(k + 1) / n);
      m.targets.push_back({k, {std::min(u0, u1), std::max(u0, u1)}});
    }
  }
  return out;
}

// Base-space interval of the part of `c` whose image under T^level lies in [y0, y1] ⊂ bin(c).
Interval pull_back(const TowerCell& c, const Interval& bin, const Interval& y) {
  const double scale = c.measure / bin.length();
  if (c.orientation > 0) return {c.base_interval.lo + (y.lo - bin.lo) * scale, c.base_interval.lo + (y.hi - bin.lo) * scale};
  return {c.base_interval.hi - (y.hi - bin.lo) * scale, c.base_interval.hi - (y.lo - bin.lo) * scale};
}

double fitted_rate(const std::vector<double>& values) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < values.size(); ++k)
    if (values[k] > 0.0) pts.emplace_back(static_cast<double>(k), std::log(values[k]));
  if (pts.size() < 2) return 0.0;
  double xb = 0.0, yb = 0.0;
  for (const auto& [x, y] : pts) {
    xb += x;
    yb += y;
  }
  xb /= static_cast<double>(pts.size());
  yb /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : pts) {
    sxy += (x - xb) * (y - yb);
    sxx += (x - xb) * (x - xb);
  }
  return std::exp(sxy / sxx);
}

double lip_of(const TowerFunction& f, std::size_t c) { return f.lip.empty() ? 0.0 : f.lip[c]; }

}  // namespace

double TowerSpec::c0() const {
  if (image_measures.empty()) return 0.0;
  return *std::min_element(image_measures.begin(), image_measures.end());
}

void TowerSpec::validate() const {
  if (image_measures.empty()) throw Error(ErrorCode::InvalidArgument, "tower needs at least one image element");
  for (double m : image_measures)
    if (!(m > 0.0)) throw Error(ErrorCode::InvalidArgument, "image elements need positive measure");
  for (const auto& h : hole_cells) {
    if (h.level == 0) throw Error(ErrorCode::InvalidArgument, "hole cells are not allowed in the base level");
    if (!(h.measure >= 0.0)) throw Error(ErrorCode::InvalidArgument, "hole cell measure must be nonnegative");
  }
  for (std::size_t j = 0; j < base_cells.size(); ++j) {
    const auto& b = base_cells[j];
    if (!b.hole && b.image_index >= image_measures.size())
      throw Error(ErrorCode::InvalidArgument, "base cell " + std::to_string(j) + " has an invalid image index");
    if (b.return_time == 0) throw Error(ErrorCode::InvalidArgument, "return times must be positive");
  }
}

double q_value(const TowerSpec& spec) {
  double q = 0.0;
  for (const auto& h : spec.hole_cells)
    q += h.measure * std::pow(spec.beta, -static_cast<double>(h.level - 1));
  return q;
}

ConditionReport check_h1(const TowerSpec& spec) {
  spec.validate();
  if (!(spec.beta > 0.0 && spec.beta < 1.0))
    throw Error(ErrorCode::InvalidBeta, "beta must lie in (0,1), got " + std::to_string(spec.beta));
  ConditionReport r;
  r.condition_id = "H1";
  r.lhs = q_value(spec);
  r.rhs = (1.0 - spec.beta) * spec.c0() / (1.0 + spec.C1);
  r.pass = r.lhs < r.rhs;
  r.inputs = {{"beta", spec.beta}, {"theta", spec.theta}, {"C1", spec.C1}, {"c0", spec.c0()}};
  return r;
}

void write_tower_dump(const TowerSpec& spec, std::ostream& os) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", spec.beta, spec.theta, spec.C1, spec.c0());
  os << buf;
  for (std::size_t j = 0; j < spec.base_cells.size(); ++j) {
    const auto& b = spec.base_cells[j];
    const std::size_t top = b.hole ? b.return_time : b.return_time - 1;
    const long long image = b.hole ? -1 : static_cast<long long>(b.image_index);
    for (std::size_t level = 0; level <= top; ++level) {
      const int flag = b.hole && level == top ? 1 : 0;
      std::snprintf(buf, sizeof buf, "%zu %zu %.17g %zu %lld %d %.17g %.17g\n", level, j, b.measure, b.return_time,
                    image, flag, b.interval.lo, b.interval.hi);
      os << buf;
    }
  }
}

double Tower::accounted_mass() const {
  double s = unresolved_;
  for (const auto& b : spec_.base_cells) s += b.measure;
  return s;
}

std::vector<double> Tower::level_masses() const {
  std::vector<double> out(level_count(), 0.0);
  for (const auto& c : cells_)
    if (!c.hole) out[c.level] += c.measure;
  return out;
}

Tower build_tower_first_return(const PiecewiseMap& map, const OpenTransferMatrix& flat,
                               const std::vector<std::size_t>& base_bins, const TowerOptions& options) {
  if (!flat.exact()) throw Error(ErrorCode::InvalidArgument, "tower construction needs an exact Markov operator");
  if (base_bins.empty()) throw Error(ErrorCode::InvalidArgument, "tower base is empty");
  const Grid& grid = flat.grid();
  const double w = grid.bin_width();
  std::vector<std::size_t> base = base_bins;
  std::sort(base.begin(), base.end());
  if (std::adjacent_find(base.begin(), base.end()) != base.end())
    throw Error(ErrorCode::InvalidArgument, "tower base lists a bin twice");
  std::vector<std::size_t> base_index(grid.bin_count(), kNoImage);
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (base[k] >= grid.bin_count() || !grid.active(base[k]))
      throw Error(ErrorCode::InvalidArgument, "tower base must avoid the hole (bin " + std::to_string(base[k]) + ")");
    base_index[base[k]] = k;
  }
  const auto transitions = bin_transitions(map, grid);

  Tower t;
  t.grid_ = grid;
  t.overflow_tolerance_ = options.overflow_tolerance;
  t.spec_.C1 = options.C1;
  for (std::size_t k = 0; k < base.size(); ++k) {
    TowerCell c;
    c.bin = base[k];
    c.measure = w;
    c.base_interval = grid.bin(base[k]);
    t.cells_.push_back(c);
    t.spec_.image_measures.push_back(w);
  }
  t.base_mass_ = w * static_cast<double>(base.size());
  t.level_start_ = {0, base.size()};

  for (std::size_t level = 0;; ++level) {
    const std::size_t begin = t.level_start_[level], end = t.level_start_[level + 1];
    for (std::size_t ci = begin; ci < end; ++ci) {
      if (t.cells_[ci].hole) continue;
      const BinMap& bm = transitions[t.cells_[ci].bin];
      const Interval bin = grid.bin(t.cells_[ci].bin);
      for (const auto& target : bm.targets) {
        const TowerCell& c = t.cells_[ci];
        const double m_child = c.measure / bm.abs_slope;
        const Interval piece = pull_back(c, bin, target.source);
        const bool hole = !grid.active(target.bin);
        const std::size_t k = base_index[target.bin];
        if (!hole && k != kNoImage) {
          t.cells_[ci].returns.emplace_back(k, c.measure / (bm.abs_slope * w));
          t.spec_.base_cells.push_back({m_child, level + 1, k, false, piece});
          continue;
        }
        if (level + 1 > options.depth_cap) {
          t.cells_[ci].overflow += m_child;
          t.unresolved_ += m_child;
          continue;
        }
        TowerCell child;
        child.level = level + 1;
        child.bin = target.bin;
        child.parent = ci;
        child.measure = m_child;
        child.log_jacobian = c.log_jacobian + std::log(bm.abs_slope);
        child.hole = hole;
        child.base_interval = piece;
        child.orientation = c.orientation * bm.sign;
        if (hole) {
          t.spec_.base_cells.push_back({m_child, level + 1, kNoImage, true, piece});
          t.spec_.hole_cells.push_back({level + 1, m_child});
        }
        t.cells_[ci].children.push_back(t.cells_.size());
        t.cells_.push_back(child);
        if (t.cells_.size() > options.cell_budget)
          throw Error(ErrorCode::TailUnresolved, "tower exceeds the cell budget of " +
                                                     std::to_string(options.cell_budget) + " at level " +
                                                     std::to_string(level + 1));
      }
    }
    if (t.cells_.size() == end) break;
    t.level_start_.push_back(t.cells_.size());
  }

  if (t.unresolved_ > options.tail_tolerance * t.base_mass_) {
    std::ostringstream os;
    os.precision(3);
    os << "mass " << t.unresolved_ / t.base_mass_ << " of the base has not returned by level " << options.depth_cap
       << "; raise depth_cap";
    throw Error(ErrorCode::TailUnresolved, os.str());
  }

  const auto masses = t.level_masses();
  // A tail that ends before the cap decays faster than any exponential.
  t.spec_.theta = masses.size() > 1 && t.unresolved_ > 0.0 ? fitted_rate(masses) : 0.0;
  if (options.beta) {
    if (!(*options.beta > t.spec_.theta && *options.beta < 1.0))
      throw Error(ErrorCode::InvalidBeta, "tower beta must lie in (theta, 1) with theta=" + std::to_string(t.spec_.theta));
    t.spec_.beta = *options.beta;
  } else {
    const double tau = map.min_expansion();
    const double floor = tau > 0.0 ? 2.0 / tau + 0.05 : 1.0;
    t.spec_.beta = std::min(0.95, std::max(t.spec_.theta + 0.05, floor));
  }
  return t;
}

TowerStep tower_transfer_step(const Tower& tower, const TowerFunction& f) {
  const auto& cells = tower.cells();
  if (f.values.size() != cells.size() || (!f.lip.empty() && f.lip.size() != cells.size()))
    throw Error(ErrorCode::DimensionMismatch, "tower function has the wrong number of cells");
  const double beta = tower.spec().beta;
  TowerStep out;
  out.f.values.assign(cells.size(), 0.0);
  if (!f.lip.empty()) out.f.lip.assign(cells.size(), 0.0);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const TowerCell& c = cells[ci];
    if (c.hole) continue;
    const double v = f.values[ci];
    for (std::size_t ch : c.children) {
      if (cells[ch].hole) {
        out.hole_mass += std::abs(v) * cells[ch].measure;
        continue;
      }
      out.f.values[ch] = v;
      if (!f.lip.empty()) out.f.lip[ch] = beta * f.lip[ci];
    }
    for (const auto& [k, weight] : c.returns) {
      out.f.values[k] += v * weight;
      if (!f.lip.empty()) out.f.lip[k] += beta * weight * f.lip[ci];
    }
    out.overflow_mass += std::abs(v) * c.overflow;
  }
  return out;
}

TowerFunction tower_transfer_apply(const Tower& tower, const TowerFunction& f) {
  TowerStep step = tower_transfer_step(tower, f);
  const double total = tower_l1(tower, f);
  if (step.overflow_mass > tower.overflow_tolerance() * total) {
    std::ostringstream os;
    os.precision(3);
    os << "mass fraction " << step.overflow_mass / total << " crossed the level cap";
    throw Error(ErrorCode::TruncationOverflow, os.str());
  }
  return std::move(step.f);
}

double tower_l1(const Tower& tower, const TowerFunction& f) {
  double s = 0.0;
  const auto& cells = tower.cells();
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    if (!cells[ci].hole) s += std::abs(f.values[ci]) * cells[ci].measure;
  return s;
}

double tower_sup_norm(const Tower& tower, const TowerFunction& f, double beta) {
  double s = 0.0;
  const auto& cells = tower.cells();
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    if (!cells[ci].hole)
      s = std::max(s, (std::abs(f.values[ci]) + lip_of(f, ci)) * std::pow(beta, static_cast<double>(cells[ci].level)));
  return s;
}

double tower_lip_norm(const Tower& tower, const TowerFunction& f, double beta) {
  if (f.lip.empty()) return 0.0;
  double s = 0.0;
  const auto& cells = tower.cells();
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    if (!cells[ci].hole) s = std::max(s, f.lip[ci] * std::pow(beta, static_cast<double>(cells[ci].level)));
  return s;
}

TowerEigen tower_leading_eigenpair(const Tower& tower, double tol, std::size_t max_iter) {
  const auto& cells = tower.cells();
  TowerFunction f;
  f.values.assign(cells.size(), 0.0);
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    if (!cells[ci].hole) f.values[ci] = 1.0;
  const double norm0 = tower_l1(tower, f);
  for (double& v : f.values) v /= norm0;
  TowerEigen out;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    TowerFunction g = tower_transfer_apply(tower, f);
    const double lambda = tower_l1(tower, g);
    if (!(lambda > 0.0)) throw Error(ErrorCode::ZeroOperator, "all tower mass escaped");
    double residual = 0.0;
    for (std::size_t ci = 0; ci < cells.size(); ++ci)
      if (!cells[ci].hole) residual += std::abs(g.values[ci] - lambda * f.values[ci]) * cells[ci].measure;
    for (double& v : g.values) v /= lambda;
    out.lambda = lambda;
    out.residual = residual;
    out.iterations = it;
    f = std::move(g);
    if (residual <= tol) {
      out.phi = std::move(f);
      return out;
    }
  }
  throw Error(ErrorCode::NoConvergence, "tower power iteration residual " + std::to_string(out.residual));
}

DensityVector project(const Tower& tower, const TowerFunction& f) {
  const auto& cells = tower.cells();
  if (f.values.size() != cells.size()) throw Error(ErrorCode::DimensionMismatch, "tower function has the wrong number of cells");
  const Grid& grid = tower.grid();
  const double w = grid.bin_width();
  DensityVector out(std::vector<double>(grid.active_count(), 0.0), w);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    if (cells[ci].hole) continue;
    out[*grid.active_index(cells[ci].bin)] += f.values[ci] * cells[ci].measure / w;
  }
  return out;
}

TowerFunction lift(const Tower& tower, const DensityVector& density) {
  const Grid& grid = tower.grid();
  if (density.size() != grid.active_count())
    throw Error(ErrorCode::DimensionMismatch, "density does not match the tower's grid");
  const auto& cells = tower.cells();
  std::vector<std::size_t> count(grid.active_count(), 0);
  std::size_t covered = 0, top = kNoImage;
  for (std::size_t level = 0; level < tower.level_count() && top == kNoImage; ++level) {
    for (std::size_t ci = tower.level_start(level); ci < tower.level_start(level + 1); ++ci) {
      if (cells[ci].hole) continue;
      if (count[*grid.active_index(cells[ci].bin)]++ == 0) ++covered;
    }
    if (covered == grid.active_count()) top = level;
  }
  if (top == kNoImage)
    throw Error(ErrorCode::CoverageGap, std::to_string(grid.active_count() - covered) +
                                            " active bins are not covered by any tower cell");
  const double w = grid.bin_width();
  TowerFunction f;
  f.values.assign(cells.size(), 0.0);
  for (std::size_t ci = 0; ci < tower.level_start(top + 1); ++ci) {
    if (cells[ci].hole) continue;
    const std::size_t a = *grid.active_index(cells[ci].bin);
    f.values[ci] = density[a] * (w / cells[ci].measure) / static_cast<double>(count[a]);
  }
  return f;
}

LasotaYorkeReport lasota_yorke_check(const Tower& tower, std::size_t sample_count, std::size_t n_max,
                                     std::uint64_t seed, std::optional<double> beta_override) {
  const auto& cells = tower.cells();
  const double beta = beta_override.value_or(tower.spec().beta);
  LasotaYorkeReport rep;
  rep.beta = beta;
  rep.samples = sample_count;
  rep.n_max = n_max;
  const CounterRng rng(seed);
  std::vector<std::vector<double>> ratios(sample_count);
  std::vector<double> lip_growth(n_max + 1, 0.0);
  for (std::size_t s = 0; s < sample_count; ++s) {
    TowerFunction f;
    f.values.assign(cells.size(), 0.0);
    f.lip.assign(cells.size(), 0.0);
    // Levels are scaled by beta^{-l} so that every sample has weighted norms of order one.
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      if (cells[ci].hole) continue;
      const double scale = std::pow(beta, -static_cast<double>(cells[ci].level));
      f.values[ci] = rng.uniform(2 * s, ci) * scale;
      f.lip[ci] = rng.uniform(2 * s + 1, ci) * scale;
    }
    const double lip0 = tower_lip_norm(tower, f, beta);
    const double l1 = tower_l1(tower, f);
    TowerFunction g = f;
    for (std::size_t n = 0; n <= n_max; ++n) {
      if (n > 0) g = tower_transfer_step(tower, g).f;
      const double norm = std::max(tower_sup_norm(tower, g, beta), tower_lip_norm(tower, g, beta));
      ratios[s].push_back(norm / (std::pow(beta, static_cast<double>(n)) * lip0 + l1));
      if (lip0 > 0.0) lip_growth[n] = std::max(lip_growth[n], tower_lip_norm(tower, g, beta) / lip0);
    }
  }
  double c_first = 0.0;
  for (std::size_t s = 0; s < sample_count; ++s) {
    const double m = *std::max_element(ratios[s].begin(), ratios[s].end());
    rep.C = std::max(rep.C, m);
    if (s < (sample_count + 1) / 2) c_first = std::max(c_first, m);
  }
  rep.C_certified = 2.0 * c_first;
  for (const auto& r : ratios)
    if (*std::max_element(r.begin(), r.end()) > rep.C_certified) ++rep.violations;
  std::vector<double> tail(lip_growth.begin() + 1, lip_growth.end());
  rep.beta_eff = tail.size() >= 2 ? fitted_rate(tail) : (tail.empty() ? 0.0 : tail.front());
  rep.certified = sample_count > 0 && rep.violations == 0 && rep.beta_eff <= beta;
  return rep;
}

LevelProfile eigenfunction_level_profile(const Tower& tower, const TowerEigen& eigen) {
  const auto& cells = tower.cells();
  LevelProfile p;
  p.level_min.assign(tower.level_count(), std::numeric_limits<double>::infinity());
  p.level_max.assign(tower.level_count(), 0.0);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    if (cells[ci].hole) continue;
    const double v = eigen.phi.values[ci] * std::pow(eigen.lambda, static_cast<double>(cells[ci].level));
    p.level_min[cells[ci].level] = std::min(p.level_min[cells[ci].level], v);
    p.level_max[cells[ci].level] = std::max(p.level_max[cells[ci].level], v);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t l = 0; l < p.level_min.size(); ++l) {
    if (p.level_max[l] == 0.0) continue;
    lo = std::min(lo, p.level_min[l]);
    hi = std::max(hi, p.level_max[l]);
  }
  p.spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  return p;
}

BMembership check_bm_membership(const Tower& tower, const TowerEigen& eigen, double beta) {
  BMembership b;
  b.sup_norm = tower_sup_norm(tower, eigen.phi, beta);
  TowerSpec spec = tower.spec();
  spec.beta = beta;
  const double q = q_value(spec);
  b.m_lower = (1.0 + spec.C1) / spec.c0();
  b.m_upper = q > 0.0 ? (1.0 - beta) / q : std::numeric_limits<double>::infinity();
  b.member = b.m_lower < b.m_upper && b.sup_norm < b.m_upper;
  return b;
}

MixingReport check_mixing(const Tower& tower, std::size_t horizon) {
  const auto& cells = tower.cells();
  const std::size_t base = tower.base_count();
  MixingReport r;
  r.horizon = horizon;
  std::vector<char> now(cells.size(), 0), next(cells.size(), 0);
  for (std::size_t k = 0; k < base; ++k) now[k] = !cells[k].hole;
  std::size_t streak_start = 0;
  bool in_streak = false;
  for (std::size_t n = 1; n <= horizon; ++n) {
    std::fill(next.begin(), next.end(), 0);
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      if (!now[ci] || cells[ci].hole) continue;
      for (std::size_t ch : cells[ci].children) next[ch] = 1;
      for (const auto& ret : cells[ci].returns) next[ret.first] = 1;
    }
    now.swap(next);
    bool covered = true;
    for (std::size_t k = 0; k < base && covered; ++k) covered = cells[k].hole || now[k];
    if (covered && !in_streak) streak_start = n;
    in_streak = covered;
  }
  if (in_streak) r.onset = streak_start;
  r.mixing_up_to_horizon = r.onset && 2 * *r.onset <= horizon;
  return r;
}

}  // namespace leakmap
