#pragma once

// Batch commands: fit, project, synth, report-residuals, validate.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "item/model.hpp"

namespace item {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one command line (args excludes the program name). Diagnostics go
/// to `err`, help text to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Flat key=value text, '#' starts a comment. Keys are FitConfig field names.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Applies key=value settings on top of `config`. Unknown keys and
/// malformed values throw InvalidArgument.
FitConfig apply_config(FitConfig config, const std::map<std::string, std::string>& values);

/// key=value snapshot of every FitConfig field.
std::map<std::string, std::string> config_values(const FitConfig& config);

}  // namespace item
