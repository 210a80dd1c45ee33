// Command-line front end: degree, stability, chambers, sample, track, serve.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tensegrity/io.hpp"

namespace tensegrity {

enum ExitCode : int { exit_ok = 0, exit_input_error = 2, exit_numerical_failure = 3 };

/// Runs one command. `args` excludes the program name. Results go to `out`;
/// failures print one JSON object to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::string framework_path;
  std::string framework_hash;
  Json config;
  double seconds = 0.0;
  std::vector<std::string> outputs;
};

Json to_json(const RunManifest& m);

}  // namespace tensegrity
