#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace tsmpc {

// Options shared by the command entry points. threads == 0 selects the
// hardware default; the TSALLIS_MPC_THREADS environment variable overrides
// whatever is configured here.
struct CliOptions {
  std::string config_path;
  std::string grid_path;      // sweep
  std::string mode = "grid";  // sweep: "grid" or "sensitivity"
  std::string out_dir = ".";
  int threads = 0;
  std::uint64_t seed_offset = 0;
  std::string inject_fault;  // check: deliberately break a named invariant
};

// Exit codes: 0 success, 1 configuration error, 2 runtime failure.
int cmd_run(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_sweep(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_check(const CliOptions& options, std::ostream& out, std::ostream& err);

// Shortest round-trippable decimal formatting used in all CSV output.
std::string format_double(double value);

// RFC-4180 field quoting (quotes fields containing commas, quotes, newlines).
std::string csv_escape(const std::string& field);

// `git describe --always --dirty`, or "unknown" outside a repository.
std::string git_describe();

int resolve_threads(const CliOptions& options);

}  // namespace tsmpc
