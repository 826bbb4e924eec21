#pragma once

#include <string>
#include <vector>

namespace postnet::cli {

// Full command-line surface: synth | train | eval | grid | convert-uci.
// Returns the process exit code: 0 success, 2 usage error, 3 data error,
// 4 numeric failure. Errors print one line on stderr.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace postnet::cli
