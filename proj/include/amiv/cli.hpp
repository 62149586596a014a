#ifndef AMIV_CLI_HPP
#define AMIV_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace amiv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `amiv` tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amiv::cli

#endif  // AMIV_CLI_HPP
