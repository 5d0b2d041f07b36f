#ifndef BQO_CLI_HPP
#define BQO_CLI_HPP

#include <string>
#include <vector>

namespace bqo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitCluster = 3;

/// Entry point for `bqo <train|gen|eval> ...`; returns the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace bqo::cli

#endif  // BQO_CLI_HPP
