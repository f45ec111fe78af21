#pragma once

namespace scarr::cli {

/// Entry point of the `scarr` executable. Returns the process exit code:
/// 0 success, 1 validation mismatch or other failure, 2 configuration or
/// usage error, 3 data error, 4 numerical failure.
int run(int argc, const char* const* argv);

} // namespace scarr::cli
