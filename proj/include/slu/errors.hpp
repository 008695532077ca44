#pragma once

#include <stdexcept>
#include <string>

namespace slu {

// Error taxonomy, mapped to CLI exit codes in tools/slu_main.cpp:
//   ConfigError -> 2, IoError/ParseError -> 3, SchemaError -> 4,
//   NumericalError -> 5.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// K/V or gold/pred sequence misalignment.
struct AlignmentError : Error {
  explicit AlignmentError(const std::string& msg) : Error("alignment error: " + msg) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

struct LabelError : Error {
  explicit LabelError(const std::string& msg) : Error("label error: " + msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& msg) : Error("schema error: " + msg) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error("numerical error: " + msg) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& msg) : Error("training error: " + msg) {}
};

}  // namespace slu
