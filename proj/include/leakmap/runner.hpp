#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leakmap/error.hpp"
#include "leakmap/maps.hpp"
#include "leakmap/openop.hpp"

namespace leakmap {

inline constexpr const char* kVersion = "0.1.0";

struct MapConfig {
  std::string kind;
  int branches = 2;
  double a = 4.0;
  std::vector<LinearPiece> pieces;
  std::optional<std::vector<double>> markov_partition;
};

struct SweepConfig {
  std::vector<double> centers;
  std::vector<double> sizes;
  bool include_zero = true;
};

struct TowerConfig {
  std::vector<Interval> base;
  std::size_t depth_cap = 40;
  std::optional<double> beta;
  double C1 = 0.0;
  std::size_t ly_samples = 100;
  std::size_t ly_steps = 10;
};

struct MonteCarloConfig {
  std::uint64_t samples = 1000000;
  int horizon = 20;
  int fit_min = 5;
};

struct DensityConfig {
  std::string name;
  std::string type;  // uniform | phi | indicator | holder
  std::vector<Interval> support;
  double exponent = 0.5;
  double center = 0.5;
};

struct ExperimentConfig {
  std::string name;
  MapConfig map;
  std::vector<Interval> hole;
  std::optional<SweepConfig> sweep;
  std::size_t N = 0;
  std::string method = "auto";  // auto | markov | ulam
  double eigen_tol = 1e-12;
  std::size_t max_iter = 200000;
  double noise_floor = 1e-10;
  std::size_t convergence_horizon = 200;
  std::size_t correlation_horizon = 40;
  std::size_t cylinder_profile_horizon = 60;
  std::size_t cylinder_depth = 8;
  std::size_t pullback_horizon = 80;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::optional<std::vector<Interval>> cylinder_set;
  std::optional<MonteCarloConfig> monte_carlo;
  std::optional<H2Options> h2;
  std::optional<TowerConfig> tower;
  std::vector<DensityConfig> densities;
  std::string canonical;  // canonical JSON text the hash is computed from
};

/// Schema and semantic problems of a config text; empty when valid.
std::vector<std::string> validate_config_text(const std::string& text);

/// Parses and validates; throws Error(Config) listing every problem.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// 64-bit FNV-1a of the canonical config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

PiecewiseMap make_map(const MapConfig& config);
HoleSet make_hole(const std::vector<Interval>& intervals);
/// Markov operator when method is markov, or auto and the instance is grid-aligned; Ulam otherwise.
OpenTransferMatrix make_operator(const ExperimentConfig& config, const PiecewiseMap& map, const HoleSet& hole);

/// Exit code contract: 0 ok, 1 config/input, 2 numeric non-convergence, 3 structural.
int exit_code_for(ErrorCode code);

enum class Stage { Operator, Spectral, Survivor, Tower };

struct CommandOptions {
  std::string command;  // operator | spectral | survivor | tower | sweep-small-hole | convergence-class | validate-config
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  bool dump_matrix = false;
};

struct CommandResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> files;  // written, relative to the output directory
};

/// Runs one CLI command; never throws.
CommandResult run_command(const CommandOptions& options);

/// Pipeline up to `stage`; writes summary.json and the stage's CSVs into `out_dir`. Returns the files written.
std::vector<std::string> run_single(const ExperimentConfig& config, Stage stage, const std::string& out_dir,
                                    bool dump_matrix = false);

/// Writes sweep.csv (`h,lambda,weak_distance`) and sweep.json.
std::vector<std::string> run_small_hole_sweep(const ExperimentConfig& config, const std::string& out_dir);

/// Writes convergence_<name>.csv per density and convergence_class.json.
std::vector<std::string> run_convergence_class(const ExperimentConfig& config, const std::string& out_dir);

}  // namespace leakmap
