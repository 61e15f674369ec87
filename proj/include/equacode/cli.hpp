#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace equacode {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitEndpoint = 3;
inline constexpr int kExitStore = 4;

/// Runs one command line (without the program name). Errors are reported as a
/// single JSON line on `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace equacode
