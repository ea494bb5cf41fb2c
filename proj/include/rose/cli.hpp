#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rose {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitIo = 3, kExitNumeric = 4 };

// Entry point of the `rose` binary: synth | train | enhance | eval | spectrogram.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rose
