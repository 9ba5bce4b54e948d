#pragma once

// `qpe` command-line front end. Every command is first reduced to a JSON
// config (everything except output paths and thread count), then executed
// from that config alone; each output embeds the config in its header so
// `qpe replay` can regenerate it byte for byte.

#include <iosfwd>
#include <string>

#include <json.hpp>

namespace qpe {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitNumeric = 3,
  kExitData = 4,
  kExitSearch = 5,
};

struct OutputPaths {
  std::string out;
  std::string summary;      // estimate only; empty = print to stdout
  std::string sensitivity;  // estimate only; empty = skip
};

// Runs the command described by `config` and writes its outputs. Throws
// qpe::Error subclasses.
void execute_config(const nlohmann::json& config, const OutputPaths& outputs,
                    int threads, std::ostream& out);

// Maps a qpe::Error (by its message prefix) to the exit-code taxonomy.
int exit_code_for(const std::exception& e);

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace qpe
