#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "leakmap/error.hpp"
#include "leakmap/runner.hpp"
#include "leakmap/spectral.hpp"

using namespace leakmap;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("leakmap_runner_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

json golden() { return json::parse(slurp(fs::path(LEAKMAP_SOURCE_DIR) / "configs" / "golden.json")); }

CommandResult run(const std::string& command, const fs::path& config, const fs::path& out, bool dump = false) {
  CommandOptions o;
  o.command = command;
  o.config_path = config.string();
  o.out_dir = out.string();
  o.dump_matrix = dump;
  return run_command(o);
}

}  // namespace

TEST_CASE("config validation") {
  SUBCASE("the shipped configs are valid") {
    for (const char* name : {"golden.json", "convergence.json", "sweep_doubling.json", "sweep_quadratic.json"})
      CHECK(validate_config_text(slurp(fs::path(LEAKMAP_SOURCE_DIR) / "configs" / name)).empty());
  }
  SUBCASE("unknown keys") {
    auto j = golden();
    j["grid"]["bins"] = 4;
    const auto errs = validate_config_text(j.dump());
    REQUIRE_FALSE(errs.empty());
    CHECK(errs.front().find("bins") != std::string::npos);
  }
  SUBCASE("missing required field") {
    auto j = golden();
    j.erase("grid");
    CHECK_FALSE(validate_config_text(j.dump()).empty());
  }
  SUBCASE("malformed JSON") { CHECK_FALSE(validate_config_text("{\"map\": ").empty()); }
  SUBCASE("overlapping hole intervals name the overlap") {
    auto j = golden();
    j["hole"]["intervals"] = json::array({json::array({0.1, 0.3}), json::array({0.2, 0.4})});
    const auto errs = validate_config_text(j.dump());
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].find("0.1") != std::string::npos);
    CHECK(errs[0].find("0.2") != std::string::npos);
    const auto dir = scratch("overlap");
    const auto r = run("survivor", write_config(dir, j), dir / "out");
    CHECK(r.exit_code == 1);
    CHECK(r.message.find("overlap") != std::string::npos);
    CHECK(run("validate-config", write_config(dir, j), dir).exit_code == 1);
  }
  SUBCASE("parse_config throws Config") {
    try {
      parse_config("{}");
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
    }
  }
}

TEST_CASE("config hash ignores the output directory and tracks the seed") {
  auto j = golden();
  const auto a = parse_config(j.dump());
  j["output_dir"] = "/tmp/elsewhere";
  const auto b = parse_config(j.dump());
  j["seed"] = 8;
  const auto c = parse_config(j.dump());
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("exit code contract") {
  CHECK(exit_code_for(ErrorCode::Config) == 1);
  CHECK(exit_code_for(ErrorCode::InvalidArgument) == 1);
  CHECK(exit_code_for(ErrorCode::Io) == 1);
  CHECK(exit_code_for(ErrorCode::NoConvergence) == 2);
  CHECK(exit_code_for(ErrorCode::MassExtinct) == 2);
  CHECK(exit_code_for(ErrorCode::TailUnresolved) == 2);
  CHECK(exit_code_for(ErrorCode::Reducible) == 3);
  CHECK(exit_code_for(ErrorCode::Periodic) == 3);
  CHECK(exit_code_for(ErrorCode::DegenerateGap) == 3);
}

TEST_CASE("golden survivor run") {
  const auto dir = scratch("golden");
  const auto r = run("survivor", fs::path(LEAKMAP_SOURCE_DIR) / "configs" / "golden.json", dir, true);
  REQUIRE_MESSAGE(r.exit_code == 0, r.message);
  for (const char* f : {"summary.json", "convergence.csv", "correlation.csv", "cylinder.csv", "matrix.txt"})
    CHECK(fs::exists(dir / f));
  const auto s = json::parse(slurp(dir / "summary.json"));
  CHECK(std::abs(s["lambda"].get<double>() - 0.80901699437494742) <= 1e-10);
  CHECK(std::abs(s["pressure_residual"].get<double>()) <= 1e-10);
  CHECK(std::abs(s["escape_rate"].get<double>() + std::log(s["lambda"].get<double>())) == 0.0);
  CHECK(s["provenance"]["seed"] == 7);

  SUBCASE("summary values recompute from the dumped matrix") {
    std::ifstream in(dir / "matrix.txt");
    const auto m = OpenTransferMatrix::read_dump(in);
    auto spec = leading_eigenpair(m);
    spectral_gap(m, spec);
    CHECK(std::abs(spec.lambda - s["lambda"].get<double>()) <= 1e-12);
    CHECK(std::abs(spec.sigma - s["sigma"].get<double>()) <= 1e-12);
  }
  SUBCASE("CSV layout") {
    std::istringstream csv(slurp(dir / "convergence.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header.find(',') != std::string::npos);
    CHECK(slurp(dir / "convergence.csv").find('\r') == std::string::npos);
  }
}

TEST_CASE("closed map has no escape") {
  auto j = golden();
  j["hole"]["intervals"] = json::array();
  j.erase("tower");
  j.erase("monte_carlo");
  const auto dir = scratch("closed");
  const auto r = run("spectral", write_config(dir, j), dir / "out");
  REQUIRE_MESSAGE(r.exit_code == 0, r.message);
  const auto s = json::parse(slurp(dir / "out" / "summary.json"));
  CHECK(s["lambda"].get<double>() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(s["escape_rate"].get<double>()) < 1e-14);
}

TEST_CASE("determinism: identical inputs give byte-identical outputs") {
  const auto config = fs::path(LEAKMAP_SOURCE_DIR) / "configs" / "golden.json";
  const auto a = scratch("det_a"), b = scratch("det_b");
  REQUIRE(run("survivor", config, a).exit_code == 0);
  REQUIRE(run("survivor", config, b).exit_code == 0);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    ++compared;
  }
  CHECK(compared >= 5);
}

TEST_CASE("structural and numeric failures map to exit codes") {
  const auto dir = scratch("codes");
  SUBCASE("reducible survivor set") {
    auto j = golden();
    j["hole"]["intervals"] = json::array({json::array({0.25, 0.5})});
    j.erase("tower");
    j.erase("monte_carlo");
    const auto r = run("survivor", write_config(dir, j), dir / "out");
    CHECK(r.exit_code == 3);
    CHECK(r.message.find("Reducible") != std::string::npos);
  }
  SUBCASE("iteration budget exhausted") {
    auto j = golden();
    j["tolerances"] = {{"eigen", 1e-300}, {"max_iter", 3}};
    CHECK(run("spectral", write_config(dir, j), dir / "out").exit_code == 2);
  }
  SUBCASE("tower command without a tower section") {
    auto j = golden();
    j.erase("tower");
    CHECK(run("tower", write_config(dir, j), dir / "out").exit_code == 1);
  }
  SUBCASE("missing config file") {
    CHECK(run("spectral", dir / "nope.json", dir / "out").exit_code == 1);
  }
  SUBCASE("unknown command") {
    CHECK(run("frobnicate", fs::path(LEAKMAP_SOURCE_DIR) / "configs" / "golden.json", dir).exit_code == 1);
  }
}

TEST_CASE("convergence class run") {
  const auto dir = scratch("class");
  const auto r = run("convergence-class", fs::path(LEAKMAP_SOURCE_DIR) / "configs" / "convergence.json", dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.message);
  const auto s = json::parse(slurp(dir / "convergence_class.json"));
  const double sigma = s["sigma"].get<double>();
  bool saw_extinct = false;
  for (const auto& d : s["densities"]) {
    if (d["status"] == "extinct") {
      saw_extinct = true;
      continue;
    }
    CHECK(d["status"] == "converged");
    if (d["type"] == "phi")
      CHECK(d["final_deviation"].get<double>() < 1e-12);
    else
      CHECK(d["fitted_rate"].get<double>() <= sigma + 0.05);
  }
  CHECK(saw_extinct);
}
