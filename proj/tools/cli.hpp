#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gazevit/config.hpp"

namespace gazevit::cli {

enum ExitCode : int {
    kOk = 0,
    kInvalidInput = 1,
    kConfigError = 2,
    kIoError = 3,
    kDivergence = 4,
};

// Every key the tool accepts, with its default value.
RunConfig default_config();

/// Parses `args` (without the program name), runs one verb and returns its
/// exit code. Messages go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gazevit::cli
