#pragma once

// Command-line front end. Subcommands: decode, sweep {tri|fallback|batching},
// bench.
//
// Exit codes:
//   0  success
//   1  runtime error
//   2  configuration error (unknown key, bad value, empty sweep axis, ...)
//   3  losslessness violation (a mode's tokens differ from target-only decoding)
//   4  property violation reported by a sweep (or by bench under --strict)

#include <iosfwd>
#include <string>
#include <vector>

namespace spdlab {

enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitConfig = 2,
  kExitLossless = 3,
  kExitProperty = 4,
};

inline constexpr const char* kCsvHeader =
    "mode,B,gamma,kappa,exit_layer,mean_accept,rho,ff,omega,step_ms,wall_ms,speedup";

/// Parses argv and runs the chosen command, writing human output to out and
/// diagnostics to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Fixed, locale-independent rendering used for every CSV cell; NaN renders
/// as an empty cell.
std::string format_number(double v);

}  // namespace spdlab
