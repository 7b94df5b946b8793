#pragma once

namespace rmipn::cli {

/// Dispatches argv to a subcommand. Returns 0 on success, 1 on domain errors,
/// and 2 on usage errors (unknown flags, missing required flags).
int run(int argc, const char* const* argv);

}  // namespace rmipn::cli
