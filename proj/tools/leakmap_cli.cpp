#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "leakmap/leakmap.h"

int main(int argc, char** argv) {
  CLI::App app{"Open interval maps: transfer operators, escape rates and survivor measures"};
  app.set_version_flag("--version", std::string(lm_version()));
  app.require_subcommand(1);

  std::string config;
  std::string out;
  uint64_t seed = 0;
  bool dump_matrix = false;

  const char* commands[][2] = {
      {"operator", "Build the open transfer operator"},
      {"spectral", "Leading eigenpair, spectral gap and convergence curves"},
      {"survivor", "Survivor chain, pressure identity, correlations and cylinder ratios"},
      {"tower", "First-return tower diagnostics"},
      {"sweep-small-hole", "Escape rate and density as the hole shrinks"},
      {"convergence-class", "Convergence of several initial densities"},
      {"validate-config", "Check a config against the schema"},
  };
  CLI::Option* seed_opt = nullptr;
  for (auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    if (std::string(c[0]) == "validate-config") continue;
    sub->add_option("--out", out, "Output directory");
    auto* opt = sub->add_option("--seed", seed, "Override the config seed");
    opt->check(CLI::NonNegativeNumber);
    if (!seed_opt) seed_opt = opt;
    sub->add_flag("--dump-matrix", dump_matrix, "Also write matrix.txt");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const bool has_seed = sub->get_option_no_throw("--seed") && sub->get_option("--seed")->count() > 0;
  int exit_code = 0;
  const lm_status st = lm_run_command(sub->get_name().c_str(), config.c_str(), out.empty() ? nullptr : out.c_str(),
                                      seed, has_seed, dump_matrix, &exit_code);
  if (st != LM_OK) {
    std::fprintf(stderr, "%s: %s\n", lm_status_name(st), lm_last_error());
    return 1;
  }
  std::fprintf(exit_code == 0 ? stdout : stderr, "%s\n", lm_last_error());
  return exit_code;
}
