#pragma once

namespace rei::cli {

// Command-line entry point (fit | mc | compare | check | saddle-demo).
// Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
int run(int argc, const char* const* argv);

} // namespace rei::cli
