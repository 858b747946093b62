#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace netcons::cli {

/// Runs one subcommand (analyze, reduce, modes, simulate, verify) and
/// returns the process exit code: 0 on success, 2 on input or schema errors,
/// 3 when analyze finds no consensus, 1 when verify detects a disagreement.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace netcons::cli
