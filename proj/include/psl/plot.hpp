// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "psl/probe.hpp"

namespace psl {

/// Static SVG line chart of mean +/- std against alpha. A single alpha is drawn
/// as one marker with its error bar. Output depends only on the result.
std::string render_sweep_svg(const ProbeResult& result);

/// Writes `svg_path` and a CSV next to it (same stem, ".csv"). ContractError
/// for an empty result.
void sweep_plot(const ProbeResult& result, const std::filesystem::path& svg_path);

}  // namespace psl
