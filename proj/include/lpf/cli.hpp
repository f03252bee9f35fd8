#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lpf {

/// Full command-line entry point. Returns the process exit status:
/// 0 on success/pass, 1 when a verification verdict fails, 2 on
/// usage or configuration errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace lpf
