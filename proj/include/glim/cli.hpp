#pragma once

namespace glim::cli {

// Exit codes: 0 success, 1 config or runtime error, 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace glim::cli
