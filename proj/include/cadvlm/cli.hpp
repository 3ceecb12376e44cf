#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cadvlm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Default directory for generated files when --out is omitted.
inline constexpr const char* kOutDirEnv = "CADVLM_OUT_DIR";

// Entry point behind the `cadvlm` binary. `args` excludes the program name.
// A path of "-" reads `in` / writes `out`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace cadvlm::cli
