#pragma once

// Command-line front end: gen, train, bench, sweep, synth, lyap.
//
// Settings resolve as built-in defaults < --config file < explicit flags.
// The config file is a flat JSON object keyed like the flags, or a manifest
// written by an earlier run (its resolved_config is used). Every command
// writes manifest.json next to its outputs.
//
// Exit codes: 0 ok, 2 bad configuration, 3 numerical failure, 4 I/O error.

#include <iosfwd>
#include <string>
#include <vector>

namespace lyl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lyl::cli
