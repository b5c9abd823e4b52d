#pragma once

namespace stomax {

/// Entry point behind main(); parses the command line, runs the selected
/// study, and reports errors on stderr. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace stomax
