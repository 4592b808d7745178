#pragma once

#include <cstddef>
#include <vector>

#include "leakmap/openop.hpp"
#include "leakmap/spectral.hpp"

namespace leakmap {

struct ChainEdge {
  std::size_t to;        // state index
  double weight;         // W_jk = 1/|T'| on the piece carrying cell j onto cell k
  double probability;    // P_jk = W_jk r_k / (lambda r_j)
  double log_jacobian;   // log|T'| on that piece
};

/// Finite-state Markov chain realizing the invariant measure on the survivor set.
struct SurvivorChain {
  std::vector<std::size_t> states;            // grid bin of each state
  std::vector<std::vector<ChainEdge>> edges;  // outgoing edges, sorted by target
  double lambda = 0.0;
  std::vector<double> right;       // W r = lambda r
  std::vector<double> left;        // l W = lambda l, <l, r> = 1
  std::vector<double> stationary;  // p_j = l_j r_j
  std::vector<double> log_jacobian;  // log|T'| on the cell of each state
  bool rigorous = true;            // false for Ulam surrogates

  std::size_t size() const { return states.size(); }
  /// State index of a grid bin, or npos when the bin was pruned.
  std::size_t state_of_bin(std::size_t bin) const;
};

struct ChainOptions {
  double tol = 1e-14;
  std::size_t max_iter = 1000000;
};

/// Chain built from the map geometry on an exact (Markov-aligned) operator's grid. Transient
/// states are pruned; throws Reducible / Periodic when the recurrent part is not a single
/// aperiodic class.
SurvivorChain build_survivor_chain(const OpenTransferMatrix& matrix, const PiecewiseMap& map,
                                   const ChainOptions& options = {});

/// Finite-state surrogate from an Ulam operator (W = M^T), flagged non-rigorous.
SurvivorChain build_surrogate_chain(const OpenTransferMatrix& matrix, const PiecewiseMap& map,
                                    const ChainOptions& options = {});

double entropy(const SurvivorChain& chain);
double lyapunov(const SurvivorChain& chain);

struct MeasureStats {
  double entropy = 0.0;
  double lyapunov = 0.0;
  double log_lambda = 0.0;
  double pressure_residual = 0.0;  // entropy - lyapunov - log lambda
};

MeasureStats pressure_residual(const SpectralData& spec, const SurvivorChain& chain);

struct PullbackEstimate {
  std::vector<double> estimates;  // n = 0..horizon
  double limit = 0.0;
};

/// lambda^{-n} ∫_{X^n} f dmu with dmu = phi dm, for f given per active bin.
PullbackEstimate pullback_measure(const OpenTransferMatrix& matrix, const SpectralData& spec,
                                  const std::vector<double>& f, std::size_t horizon);

/// nu(f) from the chain's stationary vector, f given per active bin (pruned bins carry no mass).
double chain_expectation(const SurvivorChain& chain, const OpenTransferMatrix& matrix, const std::vector<double>& f);

struct CorrelationDecay {
  std::vector<double> values;   // c_0..c_nmax
  double fitted_rate = 0.0;     // exp(slope of log|c_n|) over n >= 1 above the noise floor
  double second_eigenvalue = 0.0;  // |second eigenvalue| of P
};

/// f1, f2 given per chain state.
CorrelationDecay correlation_decay(const SurvivorChain& chain, const std::vector<double>& f1,
                                   const std::vector<double>& f2, std::size_t n_max, double noise_floor = 1e-13);

/// |second eigenvalue| of P via power iteration on P - 1 p^T.
double second_eigenvalue_modulus(const SurvivorChain& chain);

struct CylinderRatio {
  std::size_t depth;
  double ratio_min;
  double ratio_max;
  std::size_t cylinders;
};

/// For every admissible cylinder [i_0..i_{n-1}] compares nu(cyl) with lambda^{-n} prod 1/|T'(i_k)|.
std::vector<CylinderRatio> gibbs_cylinder_check(const SurvivorChain& chain, std::size_t max_depth,
                                                std::size_t cylinder_budget = 5000000);

struct AbramovReport {
  double flat_entropy = 0.0;     // h_nu(T)
  double induced_entropy = 0.0;  // h of the first-return chain on the base
  double base_mass = 0.0;        // nu(base)
  double truncated_mass = 0.0;   // excursion probability left unenumerated
  double residual = 0.0;         // flat - induced * base_mass
};

/// Enumerates first-return excursions from base states (given as chain states).
AbramovReport abramov_check(const SurvivorChain& chain, const std::vector<std::size_t>& base_states,
                            double probability_cutoff = 1e-20, std::size_t path_budget = 5000000);

}  // namespace leakmap
