#ifndef FLOWFORGE_CLI_HPP
#define FLOWFORGE_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace flowforge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Entry point of the `flowforge` tool. `args` excludes the program name.
/// Subcommands: datagen, train, eval, viz, gradcheck. Each accepts
/// `--config FILE` of key=value lines; command-line flags override the file.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowforge

#endif  // FLOWFORGE_CLI_HPP
