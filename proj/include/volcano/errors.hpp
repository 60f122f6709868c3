#pragma once

#include <stdexcept>
#include <string>

namespace volcano {

// Base of every error raised by the library. The CLI maps ConfigError
// (and subclasses) to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with user-supplied inputs: documents, files, flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class StructureError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IoError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NameError : public Error {
 public:
  using Error::Error;
};

class DirectiveError : public Error {
 public:
  using Error::Error;
};

class PlanError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class EmptyHistoryError : public Error {
 public:
  using Error::Error;
};

class RunError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class MetaError : public Error {
 public:
  using Error::Error;
};

class EnsembleError : public Error {
 public:
  using Error::Error;
};

}  // namespace volcano
