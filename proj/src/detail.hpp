#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace leakmap::detail {

using LinearApply = std::function<void(const std::vector<double>&, std::vector<double>&)>;

/// Modulus of the dominant eigenvalue of a linear map by subspace iteration on two vectors with
/// Rayleigh-Ritz values, so that a complex conjugate pair is resolved. Returns 0 once the iterates
/// collapse below `zero_ratio`.
double dominant_modulus(const LinearApply& apply, std::vector<double> a, std::vector<double> b, double zero_ratio,
                        std::size_t max_steps);

/// Strongly connected components of a directed graph given as adjacency lists.
std::vector<std::vector<std::size_t>> strongly_connected_components(const std::vector<std::vector<std::size_t>>& adj);

}  // namespace leakmap::detail
