#pragma once

namespace crodobo {

// Command-line front end (run | sweep | ablate | gradcheck | gen-data).
// Returns the process exit code: 0 success, 1 config/usage error,
// 2 runtime contract violation, 3 failed check (gradcheck).
int run_cli(int argc, const char* const* argv);

}  // namespace crodobo
