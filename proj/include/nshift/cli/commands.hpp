#pragma once

// Command dispatch for the `normalshift` tool:
//
//   normalshift <command> --config <file> --out <dir> [--dt ..] [--du ..] [--tol ..]
//
// Each command writes its CSV tables and report.txt into the output directory
// and prints the report. Report lines are
//
//   METRIC <name> <value> <threshold> PASS|FAIL     (gated: value <= threshold)
//   INFO <name> <value>
//
// Exit status: 0 all gates pass, 1 a gate fails or a module error occurs,
// 2 usage or configuration error.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nshift/cli/scenario.hpp"

namespace nshift::cli {

const std::vector<std::string>& command_names();

struct Overrides {
  std::optional<double> dt, du, tol;
};

class Report {
 public:
  void metric(const std::string& name, double value, double threshold);
  void info(const std::string& name, const std::string& value);
  void info(const std::string& name, double value);

  bool passed() const { return passed_; }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::vector<std::string> lines_;
  bool passed_ = true;
};

// Runs one command on a loaded scenario, writing files into out_dir. Module
// errors propagate as exceptions.
Report run_command(const std::string& command, const Scenario& scenario,
                   const Overrides& overrides, const std::string& out_dir);

// Full command-line entry point; returns the exit status.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nshift::cli
