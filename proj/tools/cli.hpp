#pragma once

namespace annostudy::cli {

/// Entry point shared by the binary and the CLI tests. Exit codes:
/// 0 success, 1 data error, 2 usage error.
int run(int argc, const char* const* argv);

}  // namespace annostudy::cli
