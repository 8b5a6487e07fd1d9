#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mcoupling::cli {

enum ExitCode : int {
  kSuccess = 0,
  kNotConverged = 1,
  kValidation = 2,
  kIo = 3,
};

/// Everything a command needs; also what manifest.json records.
struct Options {
  std::string command;
  std::string case_spec = "builtin:rts";  // path, builtin:rts or synth:SEED[:AREAS:BUSES:TIES]
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;

  std::optional<double> beta;
  std::optional<std::string> rho;
  std::optional<double> mu0;
  std::optional<int> max_iters;
  std::optional<double> tol_flow;
  std::optional<double> tol_price;
  std::optional<std::string> stopping;
  std::optional<std::string> exclude;
  std::vector<std::string> deviate;  // AREA:FACTOR
  bool benchmark_lmp = false;
  bool oracle = true;
  std::optional<int> jobs;

  // synth
  int areas = 3;
  int buses = 6;
  int tielines = 3;
};

nlohmann::json to_manifest(const Options& opt);
Options from_manifest(const nlohmann::json& j);

/// Runs one command and writes its artifacts plus manifest.json under opt.out.
int execute(const Options& opt);

/// argv entry point used by main().
int main(int argc, char** argv);

}  // namespace mcoupling::cli
