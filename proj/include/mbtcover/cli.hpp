#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mbtcover {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitIncomplete = 2;  // stalled or stopped by the safety cap
inline constexpr int kExitUsage = 64;

// Subcommands: run, parse, replay, gen-suite, sim. `args` excludes argv[0].
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace mbtcover
