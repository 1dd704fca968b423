#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmdtl2/dataset.hpp"

namespace mmdtl2::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitInput = 2;

/// Runs one command line (without the program name). Data goes to `out`,
/// logs and diagnostics to `err`; the return value is the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `key=value` lines; blank lines and lines starting with '#' are ignored.
std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);

/// Synthetic-data settings from a `key=value` file using the keys of the
/// synth subcommand's flags.
SynthConfig load_synth_config(const std::filesystem::path& path);

}  // namespace mmdtl2::cli
