#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace q2d::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Environment variable supplying the scoring service URL when --scoring-url
// is not given.
inline constexpr const char* kScoringUrlEnv = "Q2D_SCORING_URL";

// Entry point for `q2d <command> ...`. `args` excludes the program name.
// Returns 0 on success, 1 on runtime failure, 2 on usage/config errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace q2d::cli
