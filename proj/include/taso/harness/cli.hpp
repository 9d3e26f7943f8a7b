#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace taso {

// Exit codes: 0 success, 1 usage or contract error, 2 I/O error, 3 numeric error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitContract = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumeric = 3;

/// args[0] is the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace taso
