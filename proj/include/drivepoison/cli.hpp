#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "drivepoison/config.hpp"
#include "drivepoison/models.hpp"

namespace drivepoison::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kIo = 3, kTransport = 4 };

/// mock-benign | mock-backdoor | remote:<endpoint name>. Throws ConfigError.
std::unique_ptr<models::DecisionModel> make_model(const std::string& selector, const RunConfig& config);

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// Runs one command line; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace drivepoison::cli
