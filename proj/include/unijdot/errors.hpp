#pragma once

#include <stdexcept>
#include <string>

namespace unijdot {

// Process exit codes used by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitDataError = 3,
  kExitRuntimeError = 4,
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class DataErrorCode {
  MissingFile,
  MalformedMeta,
  SizeMismatch,
  UnknownVersion,
  InvalidLabels,
  CorruptCheckpoint,
};

struct DataError : std::runtime_error {
  DataErrorCode code;
  DataError(DataErrorCode c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
};

}  // namespace unijdot
