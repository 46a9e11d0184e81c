#pragma once

namespace fusenas::cli {

// Dispatches the subcommands (search, train, eval, dst-verify, ablate,
// fewshot). Returns the process exit code: 0 success, 1 runtime failure,
// 2 usage or config error.
int run(int argc, const char* const* argv);

}  // namespace fusenas::cli
