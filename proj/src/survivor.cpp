#include "leakmap/survivor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "detail.hpp"
#include "leakmap/error.hpp"
#include "leakmap/rng.hpp"

namespace leakmap {

namespace {

constexpr std::size_t kNpos = std::numeric_limits<std::size_t>::max();

struct RawEdge {
  std::size_t to;  // active index
  double weight;
};

struct RawGraph {
  std::vector<std::size_t> bins;  // active index -> grid bin
  std::vector<std::vector<RawEdge>> out;
  std::vector<double> log_jacobian;
};

// Length-weighted log|T'| over the branch pieces of [lo, hi), evaluated at piece midpoints.
double averaged_log_jacobian(const PiecewiseMap& map, double lo, double hi) {
  double total = 0.0;
  for (const auto& b : map.branches()) {
    const double a = std::max(lo, b.domain().lo);
    const double c = std::min(hi, b.domain().hi);
    if (!(c > a)) continue;
    total += (c - a) * std::log(std::abs(b.deriv(0.5 * (a + c))));
  }
  return total / (hi - lo);
}

RawGraph geometric_graph(const OpenTransferMatrix& matrix, const PiecewiseMap& map) {
  const Grid& grid = matrix.grid();
  const std::size_t n_bins = grid.bin_count();
  const double n = static_cast<double>(n_bins);
  RawGraph g;
  g.bins = grid.active_bins();
  g.out.resize(g.bins.size());
  g.log_jacobian.resize(g.bins.size());
  for (std::size_t j = 0; j < g.bins.size(); ++j) {
    const Interval cell = grid.bin(g.bins[j]);
    const auto bi = map.branch_index(cell.lo);
    if (!bi) throw Error(ErrorCode::InvalidArgument, "cell outside every branch domain");
    const Branch& b = map.branches()[*bi];
    if (b.formula() != Branch::Formula::Affine || cell.hi > b.domain().hi + 1e-12)
      throw Error(ErrorCode::NotMarkovAligned,
                  "cell " + std::to_string(g.bins[j]) + " is not inside a single affine branch");
    const double y0 = b.eval(cell.lo) * n, y1 = b.eval(cell.hi) * n;
    const double lo = std::round(std::min(y0, y1)), hi = std::round(std::max(y0, y1));
    if (std::abs(lo - std::min(y0, y1)) > 1e-9 || std::abs(hi - std::max(y0, y1)) > 1e-9)
      throw Error(ErrorCode::NotMarkovAligned,
                  "image of cell " + std::to_string(g.bins[j]) + " is not a union of cells");
    const double slope = std::abs(b.slope());
    g.log_jacobian[j] = std::log(slope);
    for (auto k = static_cast<std::size_t>(lo); k < static_cast<std::size_t>(hi) && k < n_bins; ++k) {
      const auto target = grid.active_index(k);
      if (!target) continue;
      const double w = 1.0 / slope;
      if (std::abs(matrix.entry(*target, j) - w) > 1e-12)
        throw Error(ErrorCode::InvalidArgument, "operator entry (" + std::to_string(k) + ", " +
                                                    std::to_string(g.bins[j]) + ") disagrees with the map");
      g.out[j].push_back({*target, w});
    }
  }
  return g;
}

RawGraph surrogate_graph(const OpenTransferMatrix& matrix, const PiecewiseMap& map) {
  const Grid& grid = matrix.grid();
  RawGraph g;
  g.bins = grid.active_bins();
  g.out.resize(g.bins.size());
  g.log_jacobian.resize(g.bins.size());
  for (const auto& e : matrix.entries()) g.out[e.col].push_back({e.row, e.value});
  for (std::size_t j = 0; j < g.bins.size(); ++j) {
    const Interval cell = grid.bin(g.bins[j]);
    g.log_jacobian[j] = averaged_log_jacobian(map, cell.lo, cell.hi);
    std::sort(g.out[j].begin(), g.out[j].end(), [](const RawEdge& a, const RawEdge& b) { return a.to < b.to; });
  }
  return g;
}

std::size_t chain_period(const std::vector<std::vector<std::size_t>>& adj) {
  std::vector<std::size_t> level(adj.size(), kNpos);
  std::vector<std::size_t> queue{0};
  level[0] = 0;
  std::size_t period = 0;
  for (std::size_t h = 0; h < queue.size(); ++h) {
    const std::size_t u = queue[h];
    for (std::size_t v : adj[u]) {
      if (level[v] == kNpos) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      } else {
        const auto diff = static_cast<long long>(level[u] + 1) - static_cast<long long>(level[v]);
        period = std::gcd(period, static_cast<std::size_t>(std::llabs(diff)));
      }
    }
  }
  return period;
}

// Perron vector of a nonnegative irreducible aperiodic matrix given by `apply`, normalized to sum 1.
std::vector<double> perron_vector(const detail::LinearApply& apply, std::size_t n, const ChainOptions& options,
                                  double& eigenvalue) {
  std::vector<double> v(n, 1.0 / static_cast<double>(n)), u(n);
  for (std::size_t it = 0; it < options.max_iter; ++it) {
    apply(v, u);
    const double s = std::accumulate(u.begin(), u.end(), 0.0);
    if (!(s > 0.0)) throw Error(ErrorCode::ZeroOperator, "chain weights vanish");
    double change = 0.0, top = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] /= s;
      change = std::max(change, std::abs(u[i] - v[i]));
      top = std::max(top, u[i]);
    }
    std::swap(u, v);
    eigenvalue = s;
    if (change <= options.tol * top) return v;
  }
  throw Error(ErrorCode::NoConvergence, "Perron vector of the survivor chain did not converge");
}

SurvivorChain finish_chain(const RawGraph& g, const ChainOptions& options, bool rigorous) {
  const std::size_t n_all = g.bins.size();
  if (n_all == 0) throw Error(ErrorCode::Reducible, "no active cells");
  std::vector<std::vector<std::size_t>> adj(n_all);
  for (std::size_t j = 0; j < n_all; ++j)
    for (const auto& e : g.out[j])
      if (e.weight > 0.0) adj[j].push_back(e.to);

  std::vector<std::vector<std::size_t>> classes;
  for (auto& comp : detail::strongly_connected_components(adj)) {
    const bool self_loop =
        comp.size() == 1 && std::find(adj[comp[0]].begin(), adj[comp[0]].end(), comp[0]) != adj[comp[0]].end();
    if (comp.size() > 1 || self_loop) classes.push_back(std::move(comp));
  }
  if (classes.empty()) throw Error(ErrorCode::Reducible, "every orbit escapes: no recurrent class of cells");
  if (classes.size() > 1) {
    std::string msg = std::to_string(classes.size()) + " recurrent classes, first cells:";
    for (const auto& c : classes) msg += " " + std::to_string(g.bins[c.front()]);
    throw Error(ErrorCode::Reducible, msg);
  }
  const auto& cls = classes.front();

  SurvivorChain chain;
  chain.rigorous = rigorous;
  std::vector<std::size_t> state_of(n_all, kNpos);
  for (std::size_t s = 0; s < cls.size(); ++s) state_of[cls[s]] = s;
  const std::size_t n = cls.size();
  chain.states.resize(n);
  chain.log_jacobian.resize(n);
  chain.edges.resize(n);
  std::vector<std::vector<std::size_t>> sub(n);
  for (std::size_t s = 0; s < n; ++s) {
    chain.states[s] = g.bins[cls[s]];
    chain.log_jacobian[s] = g.log_jacobian[cls[s]];
    for (const auto& e : g.out[cls[s]]) {
      if (e.weight <= 0.0 || state_of[e.to] == kNpos) continue;
      chain.edges[s].push_back({state_of[e.to], e.weight, 0.0, g.log_jacobian[cls[s]]});
      sub[s].push_back(state_of[e.to]);
    }
  }
  if (const std::size_t p = chain_period(sub); p > 1)
    throw Error(ErrorCode::Periodic, "recurrent class has period " + std::to_string(p));

  const detail::LinearApply right_apply = [&](const std::vector<double>& v, std::vector<double>& u) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (const auto& e : chain.edges[j]) s += e.weight * v[e.to];
      u[j] = s;
    }
  };
  const detail::LinearApply left_apply = [&](const std::vector<double>& v, std::vector<double>& u) {
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (const auto& e : chain.edges[j]) u[e.to] += v[j] * e.weight;
  };
  double lambda_left = 0.0;
  chain.right = perron_vector(right_apply, n, options, chain.lambda);
  chain.left = perron_vector(left_apply, n, options, lambda_left);
  const double pairing = std::inner_product(chain.left.begin(), chain.left.end(), chain.right.begin(), 0.0);
  for (double& x : chain.left) x /= pairing;
  chain.stationary.resize(n);
  for (std::size_t j = 0; j < n; ++j) chain.stationary[j] = chain.left[j] * chain.right[j];
  for (std::size_t j = 0; j < n; ++j)
    for (auto& e : chain.edges[j]) e.probability = e.weight * chain.right[e.to] / (chain.lambda * chain.right[j]);
  return chain;
}

double least_squares_rate(const std::vector<std::pair<double, double>>& pts) {
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

}  // namespace

std::size_t SurvivorChain::state_of_bin(std::size_t bin) const {
  const auto it = std::lower_bound(states.begin(), states.end(), bin);
  return it != states.end() && *it == bin ? static_cast<std::size_t>(it - states.begin()) : kNpos;
}

SurvivorChain build_survivor_chain(const OpenTransferMatrix& matrix, const PiecewiseMap& map,
                                   const ChainOptions& options) {
  if (!matrix.exact()) throw Error(ErrorCode::NotMarkovAligned, "survivor chain needs an exact Markov operator");
  return finish_chain(geometric_graph(matrix, map), options, true);
}

SurvivorChain build_surrogate_chain(const OpenTransferMatrix& matrix, const PiecewiseMap& map,
                                    const ChainOptions& options) {
  return finish_chain(surrogate_graph(matrix, map), options, false);
}

double entropy(const SurvivorChain& chain) {
  double h = 0.0;
  for (std::size_t j = 0; j < chain.size(); ++j) {
    double row = 0.0;
    for (const auto& e : chain.edges[j])
      if (e.probability > 0.0) row -= e.probability * std::log(e.probability);
    h += chain.stationary[j] * row;
  }
  return h;
}

double lyapunov(const SurvivorChain& chain) {
  double total = 0.0;
  for (std::size_t j = 0; j < chain.size(); ++j) {
    double row = 0.0;
    for (const auto& e : chain.edges[j]) row += e.probability * e.log_jacobian;
    total += chain.stationary[j] * row;
  }
  return total;
}

MeasureStats pressure_residual(const SpectralData& spec, const SurvivorChain& chain) {
  MeasureStats s;
  s.entropy = entropy(chain);
  s.lyapunov = lyapunov(chain);
  s.log_lambda = std::log(spec.lambda);
  s.pressure_residual = s.entropy - s.lyapunov - s.log_lambda;
  return s;
}

PullbackEstimate pullback_measure(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                  const std::vector<double>& f, std::size_t horizon) {
  const std::size_t n = matrix.dim();
  if (f.size() != n) throw Error(ErrorCode::DimensionMismatch, "test function length differs from the active bins");
  const double w = matrix.grid().bin_width();
  std::vector<double> g(n), next(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = f[i] * spec.phi[i];
  PullbackEstimate out;
  out.estimates.reserve(horizon + 1);
  for (std::size_t k = 0;; ++k) {
    out.estimates.push_back(std::accumulate(g.begin(), g.end(), 0.0) * w);
    if (k == horizon) break;
    matrix.multiply(g, next);
    for (std::size_t i = 0; i < n; ++i) g[i] = next[i] / spec.lambda;
  }
  out.limit = out.estimates.back();
  return out;
}

double chain_expectation(const SurvivorChain& chain, const OpenTransferMatrix& matrix, const std::vector<double>& f) {
  if (f.size() != matrix.dim()) throw Error(ErrorCode::DimensionMismatch, "test function length differs from the active bins");
  double s = 0.0;
  for (std::size_t j = 0; j < chain.size(); ++j) {
    const auto idx = matrix.grid().active_index(chain.states[j]);
    if (!idx) throw Error(ErrorCode::DimensionMismatch, "chain state is not an active bin of this operator");
    s += chain.stationary[j] * f[*idx];
  }
  return s;
}

CorrelationDecay correlation_decay(const SurvivorChain& chain, const std::vector<double>& f1,
                                   const std::vector<double>& f2, std::size_t n_max, double noise_floor) {
  const std::size_t n = chain.size();
  if (f1.size() != n || f2.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "correlation test functions must have one value per state");
  const auto& p = chain.stationary;
  const double m1 = std::inner_product(p.begin(), p.end(), f1.begin(), 0.0);
  const double m2 = std::inner_product(p.begin(), p.end(), f2.begin(), 0.0);
  CorrelationDecay out;
  // Centered form E[(f1 - m1) P^n (f2 - m2)] avoids cancelling two O(1) products.
  std::vector<double> g1(n), v(n), u(n);
  for (std::size_t j = 0; j < n; ++j) {
    g1[j] = f1[j] - m1;
    v[j] = f2[j] - m2;
  }
  std::vector<std::pair<double, double>> fit;
  const std::size_t fit_from = std::max<std::size_t>(1, n_max / 3);
  for (std::size_t k = 0; k <= n_max; ++k) {
    double c = 0.0;
    for (std::size_t j = 0; j < n; ++j) c += p[j] * g1[j] * v[j];
    out.values.push_back(c);
    if (k >= fit_from && std::abs(c) > noise_floor) fit.emplace_back(static_cast<double>(k), std::log(std::abs(c)));
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (const auto& e : chain.edges[j]) s += e.probability * v[e.to];
      u[j] = s;
    }
    std::swap(u, v);
  }
  out.fitted_rate = least_squares_rate(fit);
  out.second_eigenvalue = second_eigenvalue_modulus(chain);
  return out;
}

double second_eigenvalue_modulus(const SurvivorChain& chain) {
  const std::size_t n = chain.size();
  if (n <= 1) return 0.0;
  const auto& p = chain.stationary;
  auto deflate = [&](std::vector<double>& v) {
    const double c = std::inner_product(p.begin(), p.end(), v.begin(), 0.0);
    for (double& x : v) x -= c;
  };
  const detail::LinearApply apply = [&](const std::vector<double>& v, std::vector<double>& u) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (const auto& e : chain.edges[j]) s += e.probability * v[e.to];
      u[j] = s;
    }
    deflate(u);
  };
  const CounterRng rng(0xc0deULL);
  std::vector<double> start(n), second(n);
  for (std::size_t i = 0; i < n; ++i) {
    start[i] = 2.0 * rng.uniform(1, i) - 1.0;
    second[i] = 2.0 * rng.uniform(2, i) - 1.0;
  }
  deflate(start);
  deflate(second);
  return detail::dominant_modulus(apply, std::move(start), std::move(second), 1e-13, 50000);
}

std::vector<CylinderRatio> gibbs_cylinder_check(const SurvivorChain& chain, std::size_t max_depth,
                                                std::size_t cylinder_budget) {
  const std::size_t n = chain.size();
  // Number of admissible words per depth, to cap the enumeration before it starts.
  std::vector<double> count(n, 1.0), next(n);
  std::size_t depth_limit = 0;
  double total = 0.0;
  for (std::size_t d = 1; d <= max_depth; ++d) {
    const double words = std::accumulate(count.begin(), count.end(), 0.0);
    total += words;
    if (total > static_cast<double>(cylinder_budget)) break;
    depth_limit = d;
    for (std::size_t j = 0; j < n; ++j) {
      next[j] = 0.0;
      for (const auto& e : chain.edges[j]) next[j] += count[e.to];
    }
    std::swap(count, next);
  }

  std::vector<CylinderRatio> out(depth_limit);
  for (std::size_t d = 0; d < depth_limit; ++d)
    out[d] = {d + 1, std::numeric_limits<double>::infinity(), 0.0, 0};
  if (depth_limit == 0) return out;

  const double log_lambda = std::log(chain.lambda);
  struct Frame {
    std::size_t state;
    std::size_t depth;      // word length so far
    double log_nu;          // log nu(word)
    double log_weight;      // sum of log|T'| over the word
  };
  std::vector<Frame> stack;
  for (std::size_t j = 0; j < n; ++j)
    if (chain.stationary[j] > 0.0) stack.push_back({j, 1, std::log(chain.stationary[j]), chain.log_jacobian[j]});
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    // ratio = nu(word) / (lambda^{-d} prod 1/|T'|)
    const double ratio = std::exp(f.log_nu + static_cast<double>(f.depth) * log_lambda + f.log_weight);
    auto& r = out[f.depth - 1];
    r.ratio_min = std::min(r.ratio_min, ratio);
    r.ratio_max = std::max(r.ratio_max, ratio);
    ++r.cylinders;
    if (f.depth == depth_limit) continue;
    for (const auto& e : chain.edges[f.state])
      if (e.probability > 0.0)
        stack.push_back({e.to, f.depth + 1, f.log_nu + std::log(e.probability), f.log_weight + chain.log_jacobian[e.to]});
  }
  return out;
}

AbramovReport abramov_check(const SurvivorChain& chain, const std::vector<std::size_t>& base_states,
                            double probability_cutoff, std::size_t path_budget) {
  const std::size_t n = chain.size();
  std::vector<bool> in_base(n, false);
  for (std::size_t b : base_states) {
    if (b >= n) throw Error(ErrorCode::InvalidArgument, "base state outside the chain");
    in_base[b] = true;
  }
  AbramovReport rep;
  rep.flat_entropy = entropy(chain);
  for (std::size_t b = 0; b < n; ++b)
    if (in_base[b]) rep.base_mass += chain.stationary[b];
  if (!(rep.base_mass > 0.0)) throw Error(ErrorCode::InvalidArgument, "base carries no stationary mass");

  // Excursion b -> (non-base)* -> base; its probability is the product of P along the way.
  struct Frame {
    std::size_t state;
    double prob;
  };
  double weighted = 0.0;
  std::size_t paths = 0;
  std::vector<Frame> stack;
  for (std::size_t b = 0; b < n; ++b) {
    if (!in_base[b]) continue;
    double excursion_entropy = 0.0, lost = 0.0;
    stack.assign(1, {b, 1.0});
    bool first = true;
    while (!stack.empty()) {
      const Frame f = stack.back();
      stack.pop_back();
      if (!first && in_base[f.state]) {
        excursion_entropy -= f.prob * std::log(f.prob);
        continue;
      }
      first = false;
      for (const auto& e : chain.edges[f.state]) {
        const double q = f.prob * e.probability;
        if (q <= 0.0) continue;
        if (q < probability_cutoff || ++paths > path_budget) {
          lost += q;
          continue;
        }
        stack.push_back({e.to, q});
      }
    }
    weighted += chain.stationary[b] * excursion_entropy;
    rep.truncated_mass += chain.stationary[b] * lost;
  }
  rep.truncated_mass /= rep.base_mass;
  rep.induced_entropy = weighted / rep.base_mass;
  rep.residual = rep.flat_entropy - rep.induced_entropy * rep.base_mass;
  return rep;
}

}  // namespace leakmap
