// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <iosfwd>

namespace divest::cli {

// Parses argv, runs one subcommand. Results go to `out`, diagnostics and the
// resolved configuration to `err`. Returns 0 on success, 2 on usage or input
// errors, 1 on runtime failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace divest::cli
