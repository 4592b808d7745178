#include "detail.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace leakmap::detail {

double dominant_modulus(const LinearApply& apply, std::vector<double> a, std::vector<double> b, double zero_ratio,
                        std::size_t max_steps) {
  const std::size_t n = a.size();
  auto dot = [&](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
  };
  // Gram-Schmidt on (a, b); a collapsed second direction is kept as the zero vector.
  auto orthonormalize = [&](std::vector<double>& x, std::vector<double>& y) {
    const double nx = std::sqrt(dot(x, x));
    if (!(nx > 0.0)) return false;
    for (double& v : x) v /= nx;
    const double c = dot(x, y);
    for (std::size_t i = 0; i < n; ++i) y[i] -= c * x[i];
    const double ny = std::sqrt(dot(y, y));
    if (ny > 1e-14 * nx)
      for (double& v : y) v /= ny;
    else
      std::fill(y.begin(), y.end(), 0.0);
    return true;
  };
  if (!orthonormalize(a, b)) return 0.0;

  std::vector<double> za(n), zb(n);
  double previous = -1.0;
  std::size_t stable = 0;
  double estimate = 0.0;
  for (std::size_t k = 1; k <= max_steps; ++k) {
    apply(a, za);
    apply(b, zb);
    if (std::sqrt(dot(za, za) + dot(zb, zb)) <= zero_ratio) return 0.0;
    // Rayleigh-Ritz on span(a, b): a conjugate pair shows up as complex Ritz values.
    const double h11 = dot(a, za), h12 = dot(a, zb), h21 = dot(b, za), h22 = dot(b, zb);
    const double half_trace = 0.5 * (h11 + h22);
    const double det = h11 * h22 - h12 * h21;
    const double disc = half_trace * half_trace - det;
    estimate = disc < 0.0 ? std::sqrt(std::max(det, 0.0))
                          : std::max(std::abs(half_trace + std::sqrt(disc)), std::abs(half_trace - std::sqrt(disc)));
    if (previous >= 0.0 && std::abs(estimate - previous) <= 1e-13 * std::max(estimate, zero_ratio)) {
      if (++stable >= 8 && k >= 16) return estimate;
    } else {
      stable = 0;
    }
    previous = estimate;
    a.swap(za);
    b.swap(zb);
    if (!orthonormalize(a, b)) return 0.0;
  }
  return estimate;
}

std::vector<std::vector<std::size_t>> strongly_connected_components(const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = adj.size();
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, kUnset), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> components;
  std::size_t counter = 0;

  struct Frame {
    std::size_t node;
    std::size_t next_edge;
  };
  std::vector<Frame> call;
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnset) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.next_edge < adj[f.node].size()) {
        const std::size_t w = adj[f.node][f.next_edge++];
        if (index[w] == kUnset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.node] = std::min(low[f.node], index[w]);
        }
        continue;
      }
      const std::size_t v = f.node;
      call.pop_back();
      if (!call.empty()) low[call.back().node] = std::min(low[call.back().node], low[v]);
      if (low[v] == index[v]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        components.push_back(std::move(comp));
      }
    }
  }
  return components;
}

}  // namespace leakmap::detail
