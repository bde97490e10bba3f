#pragma once

#include <iosfwd>

namespace cfa {

// Entry point behind the cfasim binary. Subcommands: gen (write a dataset
// CSV from a population model), fit (estimate one dataset and print an
// item,estimate table), simulate (replicate a condition and write a DCR
// CSV plus manifest). Exit codes: 0 success, 1 usage error, 2 runtime or
// estimation error. Output goes to `out`, diagnostics and usage to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cfa
