#include "leakmap/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "leakmap/spectral.hpp"
#include "leakmap/survivor.hpp"
#include "leakmap/tower.hpp"
#include "schema_check.hpp"
#include "schema_text.hpp"

namespace leakmap {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

Interval to_interval(const json& v) { return {v.at(0).get<double>(), v.at(1).get<double>()}; }

std::vector<Interval> to_intervals(const json& v) {
  std::vector<Interval> out;
  for (const auto& x : v) out.push_back(to_interval(x));
  return out;
}

const json& schema() {
  static const json s = json::parse(kExperimentSchema);
  return s;
}

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

// Fills `cfg` from an already schema-valid document.
void read_fields(const json& doc, ExperimentConfig& cfg) {
  cfg.name = doc.value("name", "");
  const json& m = doc["map"];
  cfg.map.kind = m["kind"].get<std::string>();
  cfg.map.branches = m.value("branches", 2);
  cfg.map.a = m.value("a", 4.0);
  if (m.contains("pieces")) {
    for (const auto& p : m["pieces"]) {
      LinearPiece piece;
      piece.domain = to_interval(p["domain"]);
      piece.image = to_interval(p["image"]);
      piece.orientation = p.value("orientation", "increasing") == "decreasing" ? Orientation::Decreasing
                                                                                : Orientation::Increasing;
      cfg.map.pieces.push_back(piece);
    }
  }
  if (m.contains("markov_partition")) cfg.map.markov_partition = m["markov_partition"].get<std::vector<double>>();

  if (doc.contains("hole")) {
    const json& h = doc["hole"];
    if (h.contains("intervals")) cfg.hole = to_intervals(h["intervals"]);
    if (h.contains("sweep")) {
      SweepConfig s;
      s.centers = h["sweep"]["centers"].get<std::vector<double>>();
      s.sizes = h["sweep"]["sizes"].get<std::vector<double>>();
      s.include_zero = h["sweep"].value("include_zero", true);
      cfg.sweep = s;
    }
  }
  cfg.N = doc["grid"]["N"].get<std::size_t>();
  cfg.method = doc["grid"].value("method", "auto");
  if (doc.contains("tolerances")) {
    const json& t = doc["tolerances"];
    cfg.eigen_tol = t.value("eigen", cfg.eigen_tol);
    cfg.max_iter = t.value("max_iter", cfg.max_iter);
    cfg.noise_floor = t.value("noise_floor", cfg.noise_floor);
  }
  if (doc.contains("horizons")) {
    const json& h = doc["horizons"];
    cfg.convergence_horizon = h.value("convergence", cfg.convergence_horizon);
    cfg.correlation_horizon = h.value("correlation", cfg.correlation_horizon);
    cfg.cylinder_profile_horizon = h.value("cylinder_profile", cfg.cylinder_profile_horizon);
    cfg.cylinder_depth = h.value("cylinder_depth", cfg.cylinder_depth);
    cfg.pullback_horizon = h.value("pullback", cfg.pullback_horizon);
  }
  cfg.seed = doc.value("seed", std::uint64_t{0});
  cfg.output_dir = doc.value("output_dir", "");
  if (doc.contains("cylinder_set")) cfg.cylinder_set = to_intervals(doc["cylinder_set"]);
  if (doc.contains("monte_carlo")) {
    MonteCarloConfig mc;
    const json& j = doc["monte_carlo"];
    mc.samples = j.value("samples", mc.samples);
    mc.horizon = j.value("horizon", mc.horizon);
    mc.fit_min = j.value("fit_min", mc.fit_min);
    cfg.monte_carlo = mc;
  }
  if (doc.contains("h2")) {
    H2Options o;
    const json& j = doc["h2"];
    o.beta = j["beta"].get<double>();
    o.alpha = j.value("alpha", 1.0);
    o.C3 = j.value("C3", 0.0);
    if (j.contains("gamma")) o.gamma = j["gamma"].get<double>();
    cfg.h2 = o;
  }
  if (doc.contains("tower")) {
    TowerConfig t;
    const json& j = doc["tower"];
    t.base = to_intervals(j["base"]);
    t.depth_cap = j.value("depth_cap", t.depth_cap);
    if (j.contains("beta")) t.beta = j["beta"].get<double>();
    t.C1 = j.value("C1", 0.0);
    t.ly_samples = j.value("ly_samples", t.ly_samples);
    t.ly_steps = j.value("ly_steps", t.ly_steps);
    cfg.tower = t;
  }
  if (doc.contains("densities")) {
    for (const auto& d : doc["densities"]) {
      DensityConfig dc;
      dc.name = d["name"].get<std::string>();
      dc.type = d["type"].get<std::string>();
      if (d.contains("support")) dc.support = to_intervals(d["support"]);
      dc.exponent = d.value("exponent", dc.exponent);
      dc.center = d.value("center", dc.center);
      cfg.densities.push_back(dc);
    }
  }
  json canon = doc;
  canon.erase("output_dir");
  cfg.canonical = canon.dump();
}

std::vector<std::string> semantic_errors(const ExperimentConfig& cfg) {
  std::vector<std::string> errs;
  const auto& k = cfg.map.kind;
  if ((k == "piecewise-linear-markov" || k == "piecewise-expanding") && cfg.map.pieces.empty())
    errs.push_back("/map: kind " + k + " needs \"pieces\"");
  try {
    make_map(cfg.map);
  } catch (const Error& e) {
    errs.push_back(std::string("/map: ") + e.what());
  }
  try {
    make_hole(cfg.hole);
  } catch (const Error& e) {
    errs.push_back(std::string("/hole/intervals: ") + e.what());
  }
  if (cfg.tower)
    for (const auto& iv : cfg.tower->base)
      if (!(iv.lo < iv.hi)) errs.push_back("/tower/base: intervals need lo < hi");
  if (cfg.cylinder_set)
    for (const auto& iv : *cfg.cylinder_set)
      if (!(iv.lo < iv.hi)) errs.push_back("/cylinder_set: intervals need lo < hi");
  std::vector<std::string> names;
  for (const auto& d : cfg.densities) {
    if (!valid_name(d.name)) errs.push_back("/densities: name \"" + d.name + "\" must match [A-Za-z0-9_-]+");
    if (std::find(names.begin(), names.end(), d.name) != names.end())
      errs.push_back("/densities: duplicate name \"" + d.name + "\"");
    names.push_back(d.name);
    if (d.type == "indicator" && d.support.empty())
      errs.push_back("/densities: indicator density \"" + d.name + "\" needs a support");
  }
  if (cfg.monte_carlo && cfg.monte_carlo->fit_min >= cfg.monte_carlo->horizon)
    errs.push_back("/monte_carlo: fit_min must be below horizon");
  return errs;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& header) : os_(path, std::ios::binary) {
    if (!os_) throw Error(ErrorCode::Io, "cannot write " + path.string());
    os_ << header << '\n';
  }
  void row(std::size_t n, std::initializer_list<double> values) {
    os_ << n;
    for (double v : values) os_ << ',' << fmt(v);
    os_ << '\n';
  }
  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      os_ << (first ? "" : ",") << fmt(v);
      first = false;
    }
    os_ << '\n';
  }

 private:
  std::ofstream os_;
};

void write_json(const fs::path& path, const ojson& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

ojson report_json(const ConditionReport& r) {
  ojson inputs = ojson::object();
  for (const auto& [k, v] : r.inputs) inputs[k] = v;
  return {{"condition_id", r.condition_id}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"pass", r.pass}, {"inputs", inputs}};
}

// Active indices of the bins inside a union of intervals (bin midpoints decide).
std::vector<std::size_t> active_in(const Grid& grid, const std::vector<Interval>& set) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < grid.active_count(); ++a) {
    const Interval b = grid.bin(grid.active_bins()[a]);
    const double mid = 0.5 * (b.lo + b.hi);
    for (const auto& iv : set)
      if (iv.contains_half_open(mid)) {
        out.push_back(a);
        break;
      }
  }
  return out;
}

std::vector<std::size_t> aligned_bins(const Grid& grid, const std::vector<Interval>& set) {
  const double n = static_cast<double>(grid.bin_count());
  std::vector<std::size_t> bins;
  for (const auto& iv : set) {
    const double lo = iv.lo * n, hi = iv.hi * n;
    if (std::abs(lo - std::round(lo)) > 1e-9 || std::abs(hi - std::round(hi)) > 1e-9)
      throw Error(ErrorCode::NotMarkovAligned, "tower base endpoints must be grid points");
    for (auto b = static_cast<std::size_t>(std::round(lo)); b < static_cast<std::size_t>(std::round(hi)); ++b)
      bins.push_back(b);
  }
  std::sort(bins.begin(), bins.end());
  bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
  return bins;
}

struct TowerDiagnostics {
  ojson json;
  std::vector<std::size_t> base_states;  // active indices
};

TowerDiagnostics tower_stage(const ExperimentConfig& cfg, const PiecewiseMap& map, const OpenTransferMatrix& M,
                             const SpectralData& spec, const fs::path& out, std::vector<std::string>& files) {
  const TowerConfig& tc = *cfg.tower;
  TowerOptions opts;
  opts.depth_cap = tc.depth_cap;
  opts.beta = tc.beta;
  opts.C1 = tc.C1;
  const auto bins = aligned_bins(M.grid(), tc.base);
  const Tower tower = build_tower_first_return(map, M, bins, opts);
  const double beta = tower.spec().beta;

  std::ofstream dump(out / "tower_dump.txt", std::ios::binary);
  write_tower_dump(tower.spec(), dump);
  files.push_back("tower_dump.txt");

  ojson j;
  j["base_bins"] = bins;
  j["cells"] = tower.cells().size();
  j["levels"] = tower.level_count();
  j["beta"] = beta;
  j["theta"] = tower.spec().theta;
  j["C1"] = tower.spec().C1;
  j["c0"] = tower.spec().c0();
  j["q"] = q_value(tower.spec());
  j["unresolved_tail"] = tower.unresolved_tail();
  j["mass_accounting_error"] = std::abs(tower.accounted_mass() - tower.base_mass());
  j["conditions"] = ojson::array({report_json(check_h1(tower.spec()))});

  const TowerEigen te = tower_leading_eigenpair(tower, cfg.eigen_tol, cfg.max_iter);
  j["lambda"] = te.lambda;
  j["lambda_flat_difference"] = std::abs(te.lambda - spec.lambda);
  j["projected_phi_l1_distance"] = l1_distance(project(tower, te.phi), spec.phi);

  // Commutation and per-step mass ledger on the lifted uniform density.
  const TowerFunction f = lift(tower, DensityVector::uniform(M.grid()));
  const TowerStep step = tower_transfer_step(tower, f);
  const DensityVector lhs = project(tower, step.f);
  const DensityVector rhs = apply(M, project(tower, f));
  double commutation = 0.0;
  for (std::size_t i = 0; i < lhs.size(); ++i) commutation = std::max(commutation, std::abs(lhs[i] - rhs[i]));
  j["commutation_error"] = commutation;
  j["step_mass_error"] =
      std::abs(tower_l1(tower, f) - tower_l1(tower, step.f) - step.hole_mass - step.overflow_mass);

  const auto ly = lasota_yorke_check(tower, tc.ly_samples, tc.ly_steps, cfg.seed);
  j["lasota_yorke"] = {{"C", ly.C},
                       {"C_certified", ly.C_certified},
                       {"beta_eff", ly.beta_eff},
                       {"samples", ly.samples},
                       {"n_max", ly.n_max},
                       {"violations", ly.violations},
                       {"certified", ly.certified}};
  const auto bm = check_bm_membership(tower, te, beta);
  j["bm_membership"] = {{"sup_norm", bm.sup_norm}, {"m_lower", bm.m_lower}, {"m_upper", bm.m_upper}, {"member", bm.member}};
  j["phi_level_spread"] = eigenfunction_level_profile(tower, te).spread;
  const auto mix = check_mixing(tower, 4 * tower.level_count());
  j["mixing"] = {{"horizon", mix.horizon},
                 {"onset", mix.onset ? ojson(*mix.onset) : ojson(nullptr)},
                 {"mixing_up_to_horizon", mix.mixing_up_to_horizon}};

  TowerDiagnostics d;
  d.json = std::move(j);
  for (std::size_t b : bins)
    if (auto a = M.grid().active_index(b)) d.base_states.push_back(*a);
  return d;
}

}  // namespace

std::vector<std::string> validate_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    return {std::string("config is not valid JSON: ") + e.what()};
  }
  auto errs = detail::validate_schema(schema(), doc);
  if (!errs.empty()) return errs;
  ExperimentConfig cfg;
  read_fields(doc, cfg);
  return semantic_errors(cfg);
}

ExperimentConfig parse_config(const std::string& text) {
  const auto errs = validate_config_text(text);
  if (!errs.empty()) throw Error(ErrorCode::Config, join(errs));
  ExperimentConfig cfg;
  read_fields(json::parse(text), cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PiecewiseMap make_map(const MapConfig& c) {
  if (c.kind == "doubling") return PiecewiseMap::doubling();
  if (c.kind == "full-linear") return PiecewiseMap::full_linear(c.branches);
  if (c.kind == "quadratic-family") return PiecewiseMap::quadratic(c.a);
  const MapKind kind = c.kind == "piecewise-expanding" ? MapKind::PiecewiseExpanding : MapKind::PiecewiseLinearMarkov;
  return PiecewiseMap::linear(kind, c.pieces, c.markov_partition);
}

HoleSet make_hole(const std::vector<Interval>& intervals) { return HoleSet(intervals); }

OpenTransferMatrix make_operator(const ExperimentConfig& cfg, const PiecewiseMap& map, const HoleSet& hole) {
  if (cfg.method == "ulam") return build_ulam_operator(map, hole, cfg.N);
  if (cfg.method == "markov") return build_markov_operator(map, hole, cfg.N);
  if (map.all_affine()) {
    try {
      return build_markov_operator(map, hole, cfg.N);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotMarkovAligned) throw;
    }
  }
  return build_ulam_operator(map, hole, cfg.N);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoConvergence:
    case ErrorCode::MassExtinct:
    case ErrorCode::TailUnresolved:
    case ErrorCode::TruncationOverflow:
      return 2;
    case ErrorCode::Reducible:
    case ErrorCode::Periodic:
    case ErrorCode::DegenerateGap:
    case ErrorCode::NotMarkovAligned:
    case ErrorCode::CoverageGap:
    case ErrorCode::ZeroOperator:
      return 3;
    default:
      return 1;
  }
}

std::vector<std::string> run_single(const ExperimentConfig& cfg, Stage stage, const std::string& out_dir,
                                    bool dump_matrix) {
  const fs::path out(out_dir);
  fs::create_directories(out);
  std::vector<std::string> files;
  const PiecewiseMap map = make_map(cfg.map);
  const HoleSet hole = make_hole(cfg.hole);
  const OpenTransferMatrix M = make_operator(cfg, map, hole);

  ojson s;
  s["name"] = cfg.name;
  s["grid"] = {{"N", cfg.N},
               {"active_count", M.dim()},
               {"exact", M.exact()},
               {"hole_measure", hole.total_measure()},
               {"snapped_hole_measure", M.grid().snapped_hole_measure()}};
  const auto sums = M.column_sums();
  s["operator"] = {{"nonzeros", M.nonzeros()},
                   {"max_column_sum", sums.empty() ? 0.0 : *std::max_element(sums.begin(), sums.end())}};
  if (dump_matrix) {
    std::ofstream os(out / "matrix.txt", std::ios::binary);
    M.write_dump(os);
    files.push_back("matrix.txt");
  }
  ojson conditions = ojson::array();
  if (cfg.h2) conditions.push_back(report_json(check_h2(map, hole, *cfg.h2)));

  // Structural problems of the survivor set are reported before the eigensolver can stall on them.
  std::optional<SurvivorChain> exact_chain;
  if (stage == Stage::Survivor && M.exact()) exact_chain = build_survivor_chain(M, map);

  if (stage != Stage::Operator) {
    EigenOptions eo{cfg.eigen_tol, cfg.max_iter};
    SpectralData spec = leading_eigenpair(M, eo);
    spectral_gap(M, spec, eo);
    s["lambda"] = spec.lambda;
    s["sigma"] = spec.sigma;
    s["escape_rate"] = -std::log(spec.lambda);
    s["eigen_residual"] = spec.residual;
    s["rayleigh"] = spec.rayleigh;
    s["iterations"] = spec.iterations;
    s["bracket"] = {spec.bracket_lower, spec.bracket_upper};
    if (cfg.h2) {
      const double tau = map.min_expansion();
      s["alpha_bar"] = -std::log(cfg.h2->beta) / std::log(tau);
    }

    DensityVector f0 = DensityVector::uniform(M.grid());
    const auto curve = convergence_curve(M, spec, f0, cfg.convergence_horizon, cfg.noise_floor);
    {
      CsvWriter csv(out / "convergence.csv", "n,deviation");
      for (const auto& p : curve.points) csv.row(p.n, {p.value});
      files.push_back("convergence.csv");
    }
    // C_T of the convergence theorem, fitted as the smallest constant with deviation <= C sigma^n.
    double c_fit = 0.0;
    if (spec.sigma > 0.0)
      for (const auto& p : curve.points)
        if (p.n <= curve.fit_max) c_fit = std::max(c_fit, p.value / std::pow(spec.sigma, static_cast<double>(p.n)));
    s["convergence"] = {{"fitted_rate", curve.fitted_rate},
                        {"fit_window", {curve.fit_min, curve.fit_max}},
                        {"fit_points", curve.fit_points},
                        {"C_fitted", c_fit},
                        {"gap_relative_difference",
                         spec.sigma > 0.0 && curve.fit_points >= 2 ? std::abs(curve.fitted_rate - spec.sigma) / spec.sigma
                                                                    : 0.0}};

    const auto cyl_bins = cfg.cylinder_set ? active_in(M.grid(), *cfg.cylinder_set) : [&] {
      std::vector<std::size_t> all(M.dim());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      return all;
    }();
    const auto profile = cylinder_escape_profile(M, spec, cyl_bins, cfg.cylinder_profile_horizon);
    {
      CsvWriter csv(out / "cylinder_profile.csv", "n,rescaled_mass");
      for (const auto& p : profile.points) csv.row(p.n, {p.value});
      files.push_back("cylinder_profile.csv");
    }
    s["cylinder_profile"] = {{"bins", cyl_bins.size()}, {"C", profile.C}};

    if (cfg.monte_carlo) {
      const auto& mc = *cfg.monte_carlo;
      const auto sc = monte_carlo_survival(map, hole, mc.samples, mc.horizon, cfg.seed);
      const auto fit = fit_escape_rate(sc, mc.fit_min, mc.horizon);
      const double z = fit.standard_error > 0.0 ? std::abs(fit.log_slope - std::log(spec.lambda)) / fit.standard_error
                                                : (fit.log_slope == std::log(spec.lambda) ? 0.0 : 1e300);
      s["monte_carlo"] = {{"samples", mc.samples},
                          {"horizon", mc.horizon},
                          {"log_slope", fit.log_slope},
                          {"standard_error", fit.standard_error},
                          {"standard_errors_from_log_lambda", z}};
    }

    std::optional<TowerDiagnostics> td;
    if (cfg.tower && (stage == Stage::Tower || stage == Stage::Survivor)) {
      td = tower_stage(cfg, map, M, spec, out, files);
      for (const auto& c : td->json["conditions"]) conditions.push_back(c);
      s["tower"] = td->json;
    } else if (stage == Stage::Tower) {
      throw Error(ErrorCode::Config, "the tower command needs a \"tower\" section");
    }

    if (stage == Stage::Survivor) {
      const SurvivorChain chain = exact_chain ? std::move(*exact_chain) : build_surrogate_chain(M, map);
      const MeasureStats st = pressure_residual(spec, chain);
      s["entropy"] = st.entropy;
      s["lyapunov"] = st.lyapunov;
      s["pressure_residual"] = st.pressure_residual;
      s["chain"] = {{"states", chain.size()}, {"lambda", chain.lambda}, {"rigorous", chain.rigorous}};

      double worst = 0.0;
      for (std::size_t a = 0; a < M.dim(); ++a) {
        std::vector<double> ind(M.dim(), 0.0);
        ind[a] = 1.0;
        const double pb = pullback_measure(M, spec, ind, cfg.pullback_horizon).limit;
        worst = std::max(worst, std::abs(pb - chain_expectation(chain, M, ind)));
      }
      s["pullback_max_difference"] = worst;

      // Centered indicator of the heaviest state, as in c_n = nu(f f∘T^n) - nu(f)^2.
      const std::size_t heavy = static_cast<std::size_t>(
          std::max_element(chain.stationary.begin(), chain.stationary.end()) - chain.stationary.begin());
      std::vector<double> f(chain.size(), 0.0);
      for (std::size_t j = 0; j < chain.size(); ++j) f[j] = (j == heavy ? 1.0 : 0.0) - chain.stationary[heavy];
      const auto cd = correlation_decay(chain, f, f, cfg.correlation_horizon);
      {
        CsvWriter csv(out / "correlation.csv", "n,correlation");
        for (std::size_t n = 0; n < cd.values.size(); ++n) csv.row(n, {cd.values[n]});
        files.push_back("correlation.csv");
      }
      s["correlation"] = {{"test_state_bin", chain.states[heavy]},
                          {"fitted_rate", cd.fitted_rate},
                          {"second_eigenvalue", cd.second_eigenvalue}};

      const auto ratios = gibbs_cylinder_check(chain, cfg.cylinder_depth);
      {
        CsvWriter csv(out / "cylinder.csv", "cylinder_depth,ratio_min,ratio_max");
        for (const auto& r : ratios) csv.row(r.depth, {r.ratio_min, r.ratio_max});
        files.push_back("cylinder.csv");
      }
      if (td) {
        std::vector<std::size_t> base_states;
        for (std::size_t a : td->base_states) {
          const std::size_t st_idx = chain.state_of_bin(M.grid().active_bins()[a]);
          if (st_idx < chain.size()) base_states.push_back(st_idx);
        }
        if (!base_states.empty()) {
          const auto ab = abramov_check(chain, base_states);
          s["abramov"] = {{"flat_entropy", ab.flat_entropy},
                          {"induced_entropy", ab.induced_entropy},
                          {"base_mass", ab.base_mass},
                          {"truncated_mass", ab.truncated_mass},
                          {"residual", ab.residual}};
        }
      }
    }
  }
  s["conditions"] = conditions;
  s["provenance"] = {{"config_hash", config_hash(cfg)}, {"version", kVersion}, {"seed", cfg.seed}};
  write_json(out / "summary.json", s);
  files.push_back("summary.json");
  return files;
}

std::vector<std::string> run_small_hole_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (!cfg.sweep) throw Error(ErrorCode::Config, "sweep-small-hole needs hole.sweep");
  const fs::path out(out_dir);
  fs::create_directories(out);
  const PiecewiseMap map = make_map(cfg.map);
  const EigenOptions eo{cfg.eigen_tol, cfg.max_iter};

  const OpenTransferMatrix closed = make_operator(cfg, map, HoleSet{});
  const SpectralData reference = leading_eigenpair(closed, eo);

  auto run = [&](const std::vector<Interval>& hole_intervals, double& snapped, double& distance) {
    const HoleSet hole(hole_intervals);
    const OpenTransferMatrix M = make_operator(cfg, map, hole);
    const SpectralData spec = leading_eigenpair(M, eo);
    snapped = M.grid().snapped_hole_measure();
    const double w = M.grid().bin_width();
    distance = 0.0;
    for (std::size_t b = 0; b < cfg.N; ++b) {
      const auto a = M.grid().active_index(b);
      distance += std::abs((a ? spec.phi[*a] : 0.0) - reference.phi[b]) * w;
    }
    return spec.lambda;
  };

  std::vector<double> sizes = cfg.sweep->sizes;
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  ojson rows = ojson::array();
  CsvWriter csv(out / "sweep.csv", "h,lambda,weak_distance");
  bool lambda_monotone = true, distance_monotone = true;
  double prev_lambda = -1.0, prev_distance = std::numeric_limits<double>::infinity();
  for (double h : sizes) {
    std::vector<Interval> comps;
    for (double c : cfg.sweep->centers) comps.push_back({std::max(0.0, c - h / 2), std::min(1.0, c + h / 2)});
    std::sort(comps.begin(), comps.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    double snapped = 0.0, distance = 0.0;
    const double lambda = run(comps, snapped, distance);
    csv.row({h, lambda, distance});
    if (lambda < prev_lambda - 1e-10) lambda_monotone = false;
    if (!(distance < prev_distance)) distance_monotone = false;
    prev_lambda = lambda;
    prev_distance = distance;
    rows.push_back({{"h", h},
                    {"lambda", lambda},
                    {"weak_distance", distance},
                    {"snapped_hole_measure", snapped},
                    {"escape_ratio", snapped > 0.0 ? (1.0 - lambda) / snapped : 0.0}});
  }
  if (cfg.sweep->include_zero) {
    double snapped = 0.0, distance = 0.0;
    const double lambda = run({}, snapped, distance);
    csv.row({0.0, lambda, distance});
    rows.push_back({{"h", 0.0}, {"lambda", lambda}, {"weak_distance", distance}, {"snapped_hole_measure", snapped}});
  }
  ojson j;
  j["weak_distance"] = "L1 distance between the discretized conditionally invariant density and the closed-map "
                       "density at the same grid; a proxy for weak convergence";
  j["rows"] = rows;
  j["lambda_nondecreasing"] = lambda_monotone;
  j["weak_distance_decreasing"] = distance_monotone;
  j["provenance"] = {{"config_hash", config_hash(cfg)}, {"version", kVersion}};
  write_json(out / "sweep.json", j);
  return {"sweep.csv", "sweep.json"};
}

std::vector<std::string> run_convergence_class(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.densities.empty()) throw Error(ErrorCode::Config, "convergence-class needs a \"densities\" list");
  const fs::path out(out_dir);
  fs::create_directories(out);
  const PiecewiseMap map = make_map(cfg.map);
  const HoleSet hole = make_hole(cfg.hole);
  const OpenTransferMatrix M = make_operator(cfg, map, hole);
  const EigenOptions eo{cfg.eigen_tol, cfg.max_iter};
  SpectralData spec = leading_eigenpair(M, eo);
  spectral_gap(M, spec, eo);
  const Grid& grid = M.grid();
  const double w = grid.bin_width();

  std::vector<std::string> files;
  ojson results = ojson::array();
  for (const auto& d : cfg.densities) {
    std::vector<double> f(M.dim(), 0.0);
    if (d.type == "uniform") {
      std::fill(f.begin(), f.end(), 1.0);
    } else if (d.type == "phi") {
      f = spec.phi.values();
    } else if (d.type == "indicator") {
      for (std::size_t a : active_in(grid, d.support)) f[a] = 1.0;
    } else {
      for (std::size_t a = 0; a < M.dim(); ++a) {
        const Interval b = grid.bin(grid.active_bins()[a]);
        f[a] = 0.1 + std::pow(std::abs(0.5 * (b.lo + b.hi) - d.center), d.exponent);
      }
    }
    double mass = 0.0;
    for (double v : f) mass += v * w;
    ojson r = {{"name", d.name}, {"type", d.type}};
    const std::string file = "convergence_" + d.name + ".csv";
    CsvWriter csv(out / file, "n,deviation");
    files.push_back(file);
    if (!(mass > 0.0)) {
      r["status"] = "extinct";
      r["extinct_at"] = 0;
      results.push_back(r);
      continue;
    }
    for (double& v : f) v /= mass;
    DensityVector cur(f, w), next(std::vector<double>(f.size()), w);
    std::vector<CurvePoint> points{{0, l1_distance(cur, spec.phi)}};
    std::optional<std::size_t> extinct;
    double log_mass = 0.0;
    for (std::size_t n = 1; n <= cfg.convergence_horizon; ++n) {
      M.multiply(cur.values(), next.values());
      const double ratio = next.l1_norm();
      log_mass += ratio > 0.0 ? std::log(ratio) : -std::numeric_limits<double>::infinity();
      if (!(ratio > 0.0) || log_mass < std::log(1e-300)) {
        extinct = n;
        break;
      }
      next.scale(1.0 / ratio);
      std::swap(cur, next);
      points.push_back({n, l1_distance(cur, spec.phi)});
    }
    for (const auto& p : points) csv.row(p.n, {p.value});
    if (extinct) {
      r["status"] = "extinct";
      r["extinct_at"] = *extinct;
    } else {
      const double deviation = points.back().value;
      const ConvergenceCurve curve = fit_convergence(points, cfg.noise_floor);
      r["status"] = deviation < 1e-8 ? "converged" : "not-converged";
      r["final_deviation"] = deviation;
      r["fitted_rate"] = curve.fitted_rate;
      r["fit_window"] = {curve.fit_min, curve.fit_max};
      r["fit_points"] = curve.fit_points;
      r["rate_within_bound"] = curve.fitted_rate <= spec.sigma + 0.05;
    }
    results.push_back(r);
  }
  ojson j;
  j["lambda"] = spec.lambda;
  j["sigma"] = spec.sigma;
  j["densities"] = results;
  j["provenance"] = {{"config_hash", config_hash(cfg)}, {"version", kVersion}};
  write_json(out / "convergence_class.json", j);
  files.push_back("convergence_class.json");
  return files;
}

CommandResult run_command(const CommandOptions& options) {
  CommandResult res;
  try {
    if (options.command == "validate-config") {
      std::ifstream is(options.config_path, std::ios::binary);
      if (!is) throw Error(ErrorCode::Io, "cannot read config " + options.config_path);
      std::ostringstream ss;
      ss << is.rdbuf();
      const auto errs = validate_config_text(ss.str());
      if (!errs.empty()) throw Error(ErrorCode::Config, join(errs));
      res.message = "config is valid";
      return res;
    }
    ExperimentConfig cfg = load_config(options.config_path);
    if (options.seed) {
      cfg.seed = *options.seed;
      json canon = json::parse(cfg.canonical);
      canon["seed"] = cfg.seed;
      cfg.canonical = canon.dump();
    }
    const std::string out = options.out_dir ? *options.out_dir
                                            : (cfg.output_dir.empty() ? "leakmap_out/" + config_hash(cfg) : cfg.output_dir);
    const auto& c = options.command;
    if (c == "operator") {
      res.files = run_single(cfg, Stage::Operator, out, options.dump_matrix);
    } else if (c == "spectral") {
      res.files = run_single(cfg, Stage::Spectral, out, options.dump_matrix);
    } else if (c == "survivor") {
      res.files = run_single(cfg, Stage::Survivor, out, options.dump_matrix);
    } else if (c == "tower") {
      res.files = run_single(cfg, Stage::Tower, out, options.dump_matrix);
    } else if (c == "sweep-small-hole") {
      res.files = run_small_hole_sweep(cfg, out);
    } else if (c == "convergence-class") {
      res.files = run_convergence_class(cfg, out);
    } else {
      throw Error(ErrorCode::Config, "unknown command " + c);
    }
    res.message = "wrote " + std::to_string(res.files.size()) + (res.files.size() == 1 ? " file to " : " files to ") + out;
  } catch (const Error& e) {
    res.exit_code = exit_code_for(e.code());
    res.message = e.what();
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.message = std::string("Io: ") + e.what();
  }
  return res;
}

}  // namespace leakmap
