#include "leakmap/leakmap.h"

#include <fstream>
#include <string>

#include "leakmap/runner.hpp"
#include "leakmap/spectral.hpp"
#include "leakmap/survivor.hpp"
#include "leakmap/tower.hpp"

using namespace leakmap;

struct lm_map {
  PiecewiseMap value;
};
struct lm_hole {
  HoleSet value;
};
struct lm_operator {
  OpenTransferMatrix value;
};
struct lm_spectrum {
  SpectralData value;
};
struct lm_chain {
  SurvivorChain value;
};
struct lm_tower {
  Tower value;
};

namespace {

thread_local std::string last_error;

lm_status fail(lm_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

template <class F>
lm_status guard(F&& body) {
  last_error.clear();
  try {
    body();
    return LM_OK;
  } catch (const Error& e) {
    return fail(static_cast<lm_status>(static_cast<int>(e.code()) + 1), e.what());
  } catch (const std::exception& e) {
    return fail(LM_INTERNAL, e.what());
  } catch (...) {
    return fail(LM_INTERNAL, "unknown exception");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

template <class Handle, class T>
void emit(Handle** out, T&& value) {
  *out = new Handle{std::forward<T>(value)};
}

}  // namespace

extern "C" {

const char* lm_version(void) { return kVersion; }

const char* lm_status_name(lm_status status) {
  if (status == LM_OK) return "Ok";
  if (status == LM_INTERNAL) return "Internal";
  if (status > LM_OK && status < LM_INTERNAL) return to_string(static_cast<ErrorCode>(status - 1));
  return "Unknown";
}

const char* lm_last_error(void) { return last_error.c_str(); }

lm_status lm_map_doubling(lm_map** out) {
  return guard([&] {
    require(out, "null output");
    emit(out, PiecewiseMap::doubling());
  });
}

lm_status lm_map_full_linear(int branches, lm_map** out) {
  return guard([&] {
    require(out, "null output");
    emit(out, PiecewiseMap::full_linear(branches));
  });
}

lm_status lm_map_quadratic(double a, lm_map** out) {
  return guard([&] {
    require(out, "null output");
    emit(out, PiecewiseMap::quadratic(a));
  });
}

lm_status lm_map_linear(const double* domains, const double* images, const int* decreasing, size_t count,
                        int expanding, lm_map** out) {
  return guard([&] {
    require(out && domains && images && count > 0, "null input or empty piece list");
    std::vector<LinearPiece> pieces(count);
    for (size_t i = 0; i < count; ++i) {
      pieces[i].domain = {domains[2 * i], domains[2 * i + 1]};
      pieces[i].image = {images[2 * i], images[2 * i + 1]};
      pieces[i].orientation = decreasing && decreasing[i] ? Orientation::Decreasing : Orientation::Increasing;
    }
    emit(out, PiecewiseMap::linear(expanding ? MapKind::PiecewiseExpanding : MapKind::PiecewiseLinearMarkov, pieces));
  });
}

lm_status lm_map_evaluate(const lm_map* map, double x, double* y) {
  return guard([&] {
    require(map && y, "null argument");
    *y = map->value.evaluate(x);
  });
}

void lm_map_free(lm_map* map) { delete map; }

lm_status lm_hole_create(const double* intervals, size_t count, lm_hole** out) {
  return guard([&] {
    require(out && (intervals || count == 0), "null argument");
    std::vector<Interval> iv(count);
    for (size_t i = 0; i < count; ++i) iv[i] = {intervals[2 * i], intervals[2 * i + 1]};
    emit(out, HoleSet(iv));
  });
}

lm_status lm_hole_measure(const lm_hole* hole, double* measure) {
  return guard([&] {
    require(hole && measure, "null argument");
    *measure = hole->value.total_measure();
  });
}

void lm_hole_free(lm_hole* hole) { delete hole; }

lm_status lm_operator_markov(const lm_map* map, const lm_hole* hole, size_t bins, lm_operator** out) {
  return guard([&] {
    require(map && hole && out, "null argument");
    emit(out, build_markov_operator(map->value, hole->value, bins));
  });
}

lm_status lm_operator_ulam(const lm_map* map, const lm_hole* hole, size_t bins, lm_operator** out) {
  return guard([&] {
    require(map && hole && out, "null argument");
    emit(out, build_ulam_operator(map->value, hole->value, bins));
  });
}

lm_status lm_operator_read_dump(const char* path, lm_operator** out) {
  return guard([&] {
    require(path && out, "null argument");
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Io, std::string("cannot read ") + path);
    emit(out, OpenTransferMatrix::read_dump(is));
  });
}

lm_status lm_operator_write_dump(const lm_operator* op, const char* path) {
  return guard([&] {
    require(op && path, "null argument");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, std::string("cannot write ") + path);
    op->value.write_dump(os);
  });
}

lm_status lm_operator_dim(const lm_operator* op, size_t* dim) {
  return guard([&] {
    require(op && dim, "null argument");
    *dim = op->value.dim();
  });
}

lm_status lm_operator_apply(const lm_operator* op, const double* x, double* y, size_t dim) {
  return guard([&] {
    require(op && x && y, "null argument");
    if (dim != op->value.dim()) throw Error(ErrorCode::DimensionMismatch, "vector length differs from dim");
    op->value.multiply({x, dim}, {y, dim});
  });
}

void lm_operator_free(lm_operator* op) { delete op; }

lm_status lm_spectrum_compute(const lm_operator* op, double tol, size_t max_iter, lm_spectrum** out) {
  return guard([&] {
    require(op && out, "null argument");
    const EigenOptions eo{tol, max_iter};
    SpectralData spec = leading_eigenpair(op->value, eo);
    spectral_gap(op->value, spec, eo);
    emit(out, std::move(spec));
  });
}

lm_status lm_spectrum_lambda(const lm_spectrum* spec, double* lambda) {
  return guard([&] {
    require(spec && lambda, "null argument");
    *lambda = spec->value.lambda;
  });
}

lm_status lm_spectrum_sigma(const lm_spectrum* spec, double* sigma) {
  return guard([&] {
    require(spec && sigma, "null argument");
    *sigma = spec->value.sigma;
  });
}

lm_status lm_spectrum_phi(const lm_spectrum* spec, double* phi, size_t dim) {
  return guard([&] {
    require(spec && phi, "null argument");
    if (dim != spec->value.phi.size()) throw Error(ErrorCode::DimensionMismatch, "buffer length differs from dim");
    std::copy(spec->value.phi.values().begin(), spec->value.phi.values().end(), phi);
  });
}

void lm_spectrum_free(lm_spectrum* spec) { delete spec; }

lm_status lm_chain_build(const lm_operator* op, const lm_map* map, lm_chain** out) {
  return guard([&] {
    require(op && map && out, "null argument");
    emit(out, build_survivor_chain(op->value, map->value));
  });
}

lm_status lm_chain_size(const lm_chain* chain, size_t* size) {
  return guard([&] {
    require(chain && size, "null argument");
    *size = chain->value.size();
  });
}

lm_status lm_chain_stationary(const lm_chain* chain, double* p, size_t size) {
  return guard([&] {
    require(chain && p, "null argument");
    if (size != chain->value.size()) throw Error(ErrorCode::DimensionMismatch, "buffer length differs from size");
    std::copy(chain->value.stationary.begin(), chain->value.stationary.end(), p);
  });
}

lm_status lm_chain_pressure(const lm_chain* chain, const lm_spectrum* spec, double* entropy, double* lyapunov,
                            double* residual) {
  return guard([&] {
    require(chain && spec, "null argument");
    const MeasureStats st = pressure_residual(spec->value, chain->value);
    if (entropy) *entropy = st.entropy;
    if (lyapunov) *lyapunov = st.lyapunov;
    if (residual) *residual = st.pressure_residual;
  });
}

void lm_chain_free(lm_chain* chain) { delete chain; }

lm_status lm_tower_build(const lm_map* map, const lm_operator* op, const size_t* base_bins, size_t count,
                         size_t depth_cap, double beta, lm_tower** out) {
  return guard([&] {
    require(map && op && base_bins && out && count > 0, "null argument or empty base");
    TowerOptions o;
    o.depth_cap = depth_cap;
    if (beta > 0.0) o.beta = beta;
    emit(out, build_tower_first_return(map->value, op->value, {base_bins, base_bins + count}, o));
  });
}

lm_status lm_tower_q(const lm_tower* tower, double* q) {
  return guard([&] {
    require(tower && q, "null argument");
    *q = q_value(tower->value.spec());
  });
}

lm_status lm_tower_mixing(const lm_tower* tower, size_t horizon, size_t* onset, int* mixing) {
  return guard([&] {
    require(tower && onset && mixing, "null argument");
    const MixingReport r = check_mixing(tower->value, horizon);
    *onset = r.onset.value_or(0);
    *mixing = r.mixing_up_to_horizon ? 1 : 0;
  });
}

lm_status lm_tower_h1(const lm_tower* tower, int* pass, double* lhs, double* rhs) {
  return guard([&] {
    require(tower, "null argument");
    const ConditionReport r = check_h1(tower->value.spec());
    if (pass) *pass = r.pass ? 1 : 0;
    if (lhs) *lhs = r.lhs;
    if (rhs) *rhs = r.rhs;
  });
}

lm_status lm_tower_lambda(const lm_tower* tower, double tol, double* lambda) {
  return guard([&] {
    require(tower && lambda, "null argument");
    *lambda = tower_leading_eigenpair(tower->value, tol).lambda;
  });
}

void lm_tower_free(lm_tower* tower) { delete tower; }

lm_status lm_run_command(const char* command, const char* config_path, const char* out_dir, uint64_t seed,
                         int has_seed, int dump_matrix, int* exit_code) {
  return guard([&] {
    require(command && exit_code, "null argument");
    CommandOptions o;
    o.command = command;
    o.config_path = config_path ? config_path : "";
    if (out_dir) o.out_dir = out_dir;
    if (has_seed) o.seed = seed;
    o.dump_matrix = dump_matrix != 0;
    const CommandResult r = run_command(o);
    *exit_code = r.exit_code;
    last_error = r.message;
  });
}

}  // extern "C"
