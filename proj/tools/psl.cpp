// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include "psl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args[0] == "replay") {
    if (args.size() != 2) {
      std::cerr << "usage: psl replay <manifest>\n";
      return psl::kExitUsage;
    }
    return psl::replay_manifest(args[1], std::cout, std::cerr);
  }
  return psl::cli_dispatch(args);
}
