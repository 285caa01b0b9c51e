#pragma once

namespace lyap {

// Parses and runs one lyapcert invocation. Returns the process exit code:
// 0 when the requested check certifies (or the command has nothing to
// certify), 2 when it ran but did not certify, 1 on any error.
int run_cli(int argc, char** argv);

}  // namespace lyap
