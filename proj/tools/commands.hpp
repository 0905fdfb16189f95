#pragma once

#include <iosfwd>

namespace gpsysid::cli {

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 2 input error, 3 numerical failure.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gpsysid::cli
