#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hsspn::cli {

enum ExitCode : int {
  kOk = 0,
  kVerifyFailed = 1,
  kInputError = 2,
  kTrainingFailed = 3,
  kMismatch = 4,
};

struct Check {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// The oracle suite behind `verify`. `fixture_perturbation` is added to the
/// first root weight of the two-variable fixture.
std::vector<Check> run_verification(double fixture_perturbation = 0.0);

std::string format_checks(const std::vector<Check>& checks);

/// Runs one command line (args exclude the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hsspn::cli
