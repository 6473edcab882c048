#pragma once

namespace clusmfl {

// Entry point of the `clusmfl` tool. Returns 0 on success, 1 on a
// configuration error and 2 on a runtime failure.
int run_cli(int argc, char** argv);

}  // namespace clusmfl
