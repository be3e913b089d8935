// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace psl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `psl` subcommand. `args` excludes the program name. Every
/// invocation that gets past argument parsing writes a run manifest (default:
/// the primary output path plus ".manifest").
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(const std::vector<std::string>& args);

/// Re-executes the command recorded in a manifest.
int replay_manifest(const std::filesystem::path& manifest, std::ostream& out, std::ostream& err);

}  // namespace psl
