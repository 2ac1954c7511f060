#pragma once

// Command-line entry point, split out from main() so tests can drive it
// in-process. Returns 0 on success, 1 on a pipeline Error, 2 on anything else.
namespace crashwatch {

int cli_main(int argc, const char* const* argv);

}  // namespace crashwatch
