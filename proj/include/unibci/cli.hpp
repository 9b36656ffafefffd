#pragma once

#include <string>
#include <vector>

namespace unibci {

// Command-line front end. Returns the process exit code: 0 on success, 1 on
// validation/usage errors, 2 on numeric-contract failures. All error text
// goes to stderr with an `error:` prefix.
int cli_main(int argc, const char* const* argv);

// In-process entry point for tests; args exclude the program name.
int cli_main(const std::vector<std::string>& args);

}  // namespace unibci
