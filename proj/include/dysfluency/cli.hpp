#pragma once

#include <ostream>

namespace dysfluency::cli {

// Parses argv and runs one subcommand: synth, split, merge, train, evaluate,
// analyze or grad-check. Failures print a single "error: <kind>: <message>"
// line on `err` and return nonzero.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dysfluency::cli
