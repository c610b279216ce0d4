#pragma once

#include <iosfwd>

namespace latentiv::cli {

// Parses argv and runs one subcommand. Human-readable summaries go to `out`,
// diagnostics to `err`. Returns 0 on success, 1 on a runtime failure and 2
// on a usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace latentiv::cli
