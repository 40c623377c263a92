#pragma once

#include <iosfwd>

namespace signmap {

// Runs the command line tool. Returns the process exit code: 0 on success,
// 1 on usage or validation errors, 2 on I/O errors.
int run_cli(int argc, const char* const* argv);
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace signmap
