#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace invdec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Flags shared by every command.
struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;  ///< section.key=value
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::filesystem::path> artifacts;
  std::string summary;
  std::filesystem::path run_dir;
};

struct EvalOptions {
  std::string checkpoint;
  std::string data;  ///< replaces data.path when set
  std::optional<std::size_t> horizon;
  std::string split = "test";
  std::string dump;  ///< forecast CSV path; defaults to <run dir>/forecast.csv
};

CommandResult cmd_train(const CommonOptions& common);
CommandResult cmd_eval(const CommonOptions& common, const EvalOptions& eval);
CommandResult cmd_ablate(const CommonOptions& common);
CommandResult cmd_synth(const CommonOptions& common, const std::string& csv_path);
CommandResult cmd_gradcheck(const CommonOptions& common);
CommandResult cmd_scaling(const CommonOptions& common);

/// Parses argv, dispatches, prints the summary line to `out` and errors to
/// `err`. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace invdec::cli
