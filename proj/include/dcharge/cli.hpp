#pragma once

#include <iostream>

namespace dcharge {

// Entry point of the `dcharge` executable. Returns 0 on success, 1 on a
// runtime failure and 2 on a usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace dcharge
