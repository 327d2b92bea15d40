#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "fusionloc/train/config.hpp"

namespace fusionloc::cli {

/// Stable process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kDivergence = 4,
};

/// Written as manifest.txt into every output directory.
struct RunManifest {
  std::string command;
  std::string version;
  std::string started;
  std::string finished;
  std::string dataset_hash;  // "-" when the command reads no dataset
  /// Absent for commands that read no configuration.
  std::optional<train::RunConfig> config;

  /// "key value" lines, then "[config]" and the canonical config dump.
  std::string to_text() const;
  void save(const std::filesystem::path& dir) const;
};

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string utc_timestamp();
/// Version string baked in at configure time.
std::string version();

/// Parses argv and runs one subcommand: generate, train, eval, plot or
/// ablate. Diagnostics go to `err`, tables and progress to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fusionloc::cli
